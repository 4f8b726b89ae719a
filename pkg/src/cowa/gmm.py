"""Gaussian mixture modeling over the extracted feature space.

The mixture is initialized from model predictions used as responsibilities
(no random restarts), then refined with a configurable number of EM
iterations, one by default to avoid overfitting the feature clusters.
Densities are evaluated through Cholesky factors; per-row posteriors are
normalized in the log domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .errors import (
    DegenerateComponentError,
    FormatError,
    NumericalError,
    ValidationError,
)
from .model import Probabilities

DEGENERATE_MASS = 1e-12


@dataclass
class GmmParams:
    """K-component Gaussian mixture.

    Covariances are stored as (K, h, h) matrices (diagonal-mode fits fill
    in diagonal matrices) and already include the ``reg_epsilon`` ridge
    added during estimation. ``classes`` maps component index to the
    original class index (identity for the closed-set case). Instances are
    immutable after construction; EM produces new values.
    """

    mixing: np.ndarray       # (K,)
    means: np.ndarray        # (K, h)
    covariances: np.ndarray  # (K, h, h)
    reg_epsilon: float = 0.0
    classes: np.ndarray | None = None

    def __post_init__(self):
        self.mixing = np.ascontiguousarray(self.mixing, dtype=np.float64)
        self.means = np.ascontiguousarray(self.means, dtype=np.float64)
        self.covariances = np.ascontiguousarray(self.covariances, dtype=np.float64)
        k = self.mixing.shape[0]
        h = self.means.shape[1] if self.means.ndim == 2 else -1
        if self.means.shape != (k, h) or self.covariances.shape != (k, h, h):
            raise ValidationError("inconsistent mixture parameter shapes")
        if self.reg_epsilon < 0:
            raise ValidationError("reg_epsilon must be >= 0")
        if np.any(self.mixing < 0) or abs(self.mixing.sum() - 1.0) > 1e-9:
            raise ValidationError("mixing weights must be a probability vector")
        asym = np.max(np.abs(self.covariances - self.covariances.transpose(0, 2, 1)))
        if asym > 1e-9:
            raise ValidationError(f"covariances must be symmetric (max asymmetry {asym:g})")
        if self.classes is None:
            self.classes = np.arange(k, dtype=np.int64)
        else:
            self.classes = np.ascontiguousarray(self.classes, dtype=np.int64)
            if self.classes.shape != (k,):
                raise ValidationError("classes must have one entry per component")
        try:
            self._chol = np.linalg.cholesky(self.covariances)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"covariance is not SPD: {exc}") from exc

    @property
    def component_count(self) -> int:
        return self.mixing.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass
class DataProbabilities:
    """Per-sample mixture posteriors (the data-structure-wise probability).

    ``probs`` is the row-normalized exponential of ``log_numerators``, where
    log_numerators[i, c] = log mixing[c] + log N(x_i | component c).
    """

    probs: np.ndarray           # (n, K)
    log_numerators: np.ndarray  # (n, K)
    classes: np.ndarray         # (K,) original class index per column

    def __post_init__(self):
        if self.probs.shape != self.log_numerators.shape:
            raise ValidationError("probs and log_numerators must have equal shape")
        if np.max(np.abs(self.probs.sum(axis=1) - 1.0)) > 1e-9:
            raise ValidationError("posterior rows must sum to 1 within 1e-9")


def default_reg_epsilon(features: np.ndarray) -> float:
    """1e-6 times the mean per-dimension variance of the features."""
    return 1e-6 * float(np.var(features, axis=0).mean())


def _moments(
    features: np.ndarray,
    resp: np.ndarray,
    classes: np.ndarray,
    reg_epsilon: float,
    covariance: str = "full",
) -> GmmParams:
    """M-step: weighted moments from responsibilities.

    Raises DegenerateComponentError when a component's responsibility mass
    falls below DEGENERATE_MASS; the caller decides which classes to drop.
    """
    n, h = features.shape
    k = resp.shape[1]
    mass = resp.sum(axis=0)
    dead = mass < DEGENERATE_MASS
    if np.any(dead):
        raise DegenerateComponentError(classes[dead])
    mixing = mass / n
    means = (resp.T @ features) / mass[:, None]
    covs = np.empty((k, h, h))
    eye = np.eye(h)
    for c in range(k):
        if covariance == "diag":
            diff2 = (features - means[c]) ** 2
            var = (resp[:, c] @ diff2) / mass[c]
            covs[c] = np.diag(var) + reg_epsilon * eye
        else:
            scatter = kernels.weighted_scatter(
                features, np.ascontiguousarray(resp[:, c]), means[c]
            )
            covs[c] = scatter / mass[c] + reg_epsilon * eye
    return GmmParams(mixing, means, covs, reg_epsilon, classes)


def init_from_predictions(
    features: np.ndarray,
    probs: Probabilities | np.ndarray,
    class_set=None,
    reg_epsilon: float | None = None,
    covariance: str = "full",
) -> GmmParams:
    """Initialize mixture parameters from model predictions.

    The prediction rows, restricted to ``class_set`` and renormalized, act
    as responsibilities for a single weighted-moment estimate. Rows with no
    mass on the class set fall back to uniform responsibilities.
    """
    features = np.ascontiguousarray(features, dtype=np.float64)
    p = probs.probs if isinstance(probs, Probabilities) else np.asarray(probs)
    n = features.shape[0]
    if p.shape[0] != n:
        raise ValidationError("features and probs row counts differ")
    if class_set is None:
        classes = np.arange(p.shape[1], dtype=np.int64)
    else:
        classes = np.unique(np.asarray(list(class_set), dtype=np.int64))
        if classes.size == 0 or classes[0] < 0 or classes[-1] >= p.shape[1]:
            raise ValidationError("class_set must be a nonempty subset of [0, K)")
    if n <= classes.size:
        raise ValidationError("need more samples than classes")
    resp = np.ascontiguousarray(p[:, classes])
    sums = resp.sum(axis=1, keepdims=True)
    empty = sums[:, 0] <= 0.0
    if np.any(empty):
        resp[empty] = 1.0 / classes.size
        sums[empty] = 1.0
    resp = resp / sums
    if covariance not in ("full", "diag"):
        raise ValidationError(f"covariance must be 'full' or 'diag', got {covariance!r}")
    if reg_epsilon is None:
        reg_epsilon = default_reg_epsilon(features)
    return _moments(features, resp, classes, reg_epsilon, covariance)


def component_log_likelihoods(gmm: GmmParams, features: np.ndarray) -> np.ndarray:
    """(n, K) matrix of per-component Gaussian log-densities."""
    features = np.ascontiguousarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != gmm.dim:
        raise ValidationError(
            f"features have shape {features.shape}, mixture dim is {gmm.dim}"
        )
    n = features.shape[0]
    out = np.empty((n, gmm.component_count))
    for c in range(gmm.component_count):
        out[:, c] = kernels.gaussian_log_density(
            features, gmm.means[c], np.ascontiguousarray(gmm._chol[c])
        )
    return out


def log_likelihood(gmm: GmmParams, x: np.ndarray, c: int) -> float:
    """Gaussian log-density of a single point under component ``c``."""
    if not 0 <= c < gmm.component_count:
        raise ValidationError(f"component {c} out of range")
    x = np.ascontiguousarray(x, dtype=np.float64).reshape(1, -1)
    if x.shape[1] != gmm.dim:
        raise ValidationError(f"point has dim {x.shape[1]}, mixture has {gmm.dim}")
    return float(
        kernels.gaussian_log_density(x, gmm.means[c], np.ascontiguousarray(gmm._chol[c]))[0]
    )


def data_probability(gmm: GmmParams, features: np.ndarray) -> DataProbabilities:
    """Posterior responsibility of each component for each sample.

    Normalized per row with log-sum-exp (max subtraction), so extreme
    log-density gaps cannot overflow.
    """
    lls = component_log_likelihoods(gmm, features)
    with np.errstate(divide="ignore"):  # mixing weights of 0 give -inf
        log_num = np.log(gmm.mixing) + lls
    shifted = log_num - log_num.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    return DataProbabilities(probs, log_num, gmm.classes.copy())


def total_log_likelihood(gmm: GmmParams, features: np.ndarray) -> float:
    """sum_i log sum_c mixing[c] N(x_i | component c)."""
    lls = component_log_likelihoods(gmm, features)
    with np.errstate(divide="ignore"):
        log_num = np.log(gmm.mixing) + lls
    m = log_num.max(axis=1)
    return float((m + np.log(np.exp(log_num - m[:, None]).sum(axis=1))).sum())


def em_iteration(
    gmm: GmmParams, features: np.ndarray, covariance: str = "full"
) -> GmmParams:
    """One EM iteration: posterior responsibilities, then weighted moments."""
    features = np.ascontiguousarray(features, dtype=np.float64)
    resp = data_probability(gmm, features).probs
    return _moments(
        features, np.ascontiguousarray(resp), gmm.classes, gmm.reg_epsilon, covariance
    )


def fit_gmm(
    features: np.ndarray,
    probs: Probabilities | np.ndarray,
    class_set=None,
    reg_epsilon: float | None = None,
    em_iterations: int = 1,
    covariance: str = "full",
) -> GmmParams:
    """Prediction-based initialization followed by EM refinement."""
    gmm = init_from_predictions(features, probs, class_set, reg_epsilon, covariance)
    for _ in range(em_iterations):
        gmm = em_iteration(gmm, features, covariance)
    return gmm


def pseudo_labels(dp: DataProbabilities) -> np.ndarray:
    """Argmax class per row, ties broken by the lowest class index.

    Taken on the log numerators, which order identically to the posteriors
    but cannot collapse distinct values through exp rounding.
    """
    return dp.classes[dp.log_numerators.argmax(axis=1)]


def save_gmm(gmm: GmmParams, path) -> None:
    """Text dump of the mixture parameters, for debugging and golden tests."""
    k, h = gmm.component_count, gmm.dim
    lines = [f"gmm components={k} dim={h} reg_epsilon={gmm.reg_epsilon:.17g}"]
    lines.append("classes " + ",".join(str(c) for c in gmm.classes))
    lines.append(f"mixing {k}")
    lines.append(",".join(f"{v:.17g}" for v in gmm.mixing))
    lines.append(f"means {k} {h}")
    for row in gmm.means:
        lines.append(",".join(f"{v:.17g}" for v in row))
    for c in range(k):
        lines.append(f"covariance {c} {h} {h}")
        for row in gmm.covariances[c]:
            lines.append(",".join(f"{v:.17g}" for v in row))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_gmm(path) -> GmmParams:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("gmm "):
        raise FormatError(f"{path}: not a gmm dump")
    meta = dict(kv.split("=") for kv in lines[0].split()[1:])
    k, h = int(meta["components"]), int(meta["dim"])
    classes = np.asarray([int(v) for v in lines[1].split()[1].split(",")])
    mixing = np.asarray([float(v) for v in lines[3].split(",")])
    means = np.asarray(
        [[float(v) for v in lines[5 + r].split(",")] for r in range(k)]
    )
    covs = np.empty((k, h, h))
    base = 5 + k
    for c in range(k):
        block = base + c * (h + 1)
        for r in range(h):
            covs[c, r] = [float(v) for v in lines[block + 1 + r].split(",")]
    return GmmParams(mixing, means, covs, float(meta["reg_epsilon"]), classes)
