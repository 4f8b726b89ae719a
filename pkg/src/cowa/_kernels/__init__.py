"""Numerical hot kernels: compiled core with a pure-numpy fallback.

The compiled extension (``cowa._kernels._core``, built from Cython) is
preferred when importable; otherwise the numpy/scipy implementation in
``cowa._kernels._py`` is used. Set the environment variable
``COWA_PURE_PYTHON=1`` to force the fallback, e.g. for benchmarking.

All kernels take C-contiguous float64 arrays and are deterministic, so a
fixed seed gives bit-identical results within one backend and build.
"""

import os

if os.environ.get("COWA_PURE_PYTHON"):
    from . import _py as _impl

    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        from . import _py as _impl

        BACKEND = "python"

two_layer_forward = _impl.two_layer_forward
weighted_softmax_ce_grad = _impl.weighted_softmax_ce_grad
gaussian_log_density = _impl.gaussian_log_density
weighted_scatter = _impl.weighted_scatter

__all__ = [
    "BACKEND",
    "two_layer_forward",
    "weighted_softmax_ce_grad",
    "gaussian_log_density",
    "weighted_scatter",
]
