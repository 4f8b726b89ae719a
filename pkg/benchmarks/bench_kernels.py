"""Benchmark: compiled kernel core vs the numpy fallback.

Times the four hot kernels at the adaptation loop's working sizes (small
batches, moderate hidden width) and at a larger scale where BLAS-backed
numpy amortizes its call overhead. Run after `python setup.py build_ext
--inplace` (or a pip install):

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from cowa._kernels import _py

try:
    from cowa._kernels import _core
except ImportError:
    _core = None


def timeit(fn, *args, repeat=200, rounds=5):
    fn(*args)  # warm up
    best = float("inf")
    for _ in range(rounds):
        start = time.perf_counter()
        for _ in range(repeat):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / repeat)
    return best


def forward_case(rng, n, d, h, k):
    return (
        rng.standard_normal((n, d)),
        rng.standard_normal((h, d)),
        rng.standard_normal(h),
        rng.standard_normal((k, h)),
        rng.standard_normal(k),
    )


def grad_case(rng, n, d, h, k):
    X, W1, b1, W2, b2 = forward_case(rng, n, d, h, k)
    hidden, logits = _py.two_layer_forward(X, W1, b1, W2, b2)
    z = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(z)
    probs /= probs.sum(axis=1, keepdims=True)
    soft = rng.uniform(0.1, 1.0, (n, k))
    soft /= soft.sum(axis=1, keepdims=True)
    weights = rng.uniform(0.0, 1.0, n)
    return X, hidden, probs, soft, weights, W2


def density_case(rng, n, h):
    X = rng.standard_normal((n, h))
    mean = rng.standard_normal(h)
    a = rng.standard_normal((h, h))
    chol = np.linalg.cholesky(a @ a.T + h * np.eye(h))
    return X, mean, chol


def scatter_case(rng, n, h):
    return (
        rng.standard_normal((n, h)),
        rng.uniform(0.0, 1.0, n),
        rng.standard_normal(h),
    )


CASES = [
    ("forward      batch=64  d=8   h=32  K=3", "two_layer_forward", forward_case, (64, 8, 32, 3)),
    ("forward      n=10000   d=8   h=32  K=3", "two_layer_forward", forward_case, (10_000, 8, 32, 3)),
    ("ce gradient  batch=64  d=8   h=32  K=3", "weighted_softmax_ce_grad", grad_case, (64, 8, 32, 3)),
    ("ce gradient  n=10000   d=8   h=32  K=3", "weighted_softmax_ce_grad", grad_case, (10_000, 8, 32, 3)),
    ("log density  n=600     h=32", "gaussian_log_density", density_case, (600, 32)),
    ("log density  n=50000   h=32", "gaussian_log_density", density_case, (50_000, 32)),
    ("scatter      n=600     h=32", "weighted_scatter", scatter_case, (600, 32)),
    ("scatter      n=50000   h=32", "weighted_scatter", scatter_case, (50_000, 32)),
]


def main():
    if _core is None:
        print("compiled core not built; run `python setup.py build_ext --inplace`")
        return
    rng = np.random.default_rng(0)
    print(f"{'case':44s} {'python':>10s} {'compiled':>10s} {'speedup':>8s}")
    for label, kernel, case, shape in CASES:
        args = case(rng, *shape)
        repeat = 20 if max(shape) >= 10_000 else 500
        t_py = timeit(getattr(_py, kernel), *args, repeat=repeat)
        t_c = timeit(getattr(_core, kernel), *args, repeat=repeat)
        print(f"{label:44s} {t_py * 1e6:9.1f}u {t_c * 1e6:9.1f}u {t_py / t_c:7.2f}x")


if __name__ == "__main__":
    main()
