"""Confidence-weighted self-training on unlabeled target data.

Each epoch refits a Gaussian mixture on the current target features,
scores every sample (jmds = lpg * mppl), and minimizes the score-weighted
cross entropy against the mixture's pseudo-labels, optionally through
weight Mixup (inputs, one-hot labels, and per-sample weights are mixed
with one Beta-distributed coefficient per batch).

Open-set targets are first split into known/unknown by 2-means on the
prediction entropy and only known samples are trained on; partial-set
targets first shrink the class set by iterative mixture mass filtering.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import gmm as gmm_mod
from . import model as model_mod
from . import scores as scores_mod
from .data import FeatureSet
from .errors import DegenerateComponentError, ValidationError
from .evaluation import accuracy
from .model import MlpModel, OptimizerState, one_hot, sgd_step
from .scores import ScoreVector

SCENARIOS = ("closed", "open", "partial")


@dataclass(frozen=True)
class AdaptConfig:
    scenario: str = "closed"
    mixup_alpha: float = 0.2
    partial_threshold: float = 0.3
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-3
    batch_size: int = 64
    epochs: int = 30
    # None resolves per scenario: on for closed/partial, off for open
    # (mixing known-classified unknowns into training hurts there)
    use_weight_mixup: bool | None = None
    seed: int = 0
    extractor_lr: float | None = None
    # diagnostics: pin the Mixup coefficient instead of sampling it
    gamma_override: float | None = None
    mixup_per_sample: bool = False
    em_iterations: int = 1
    reg_epsilon: float | None = None
    covariance: str = "full"
    # ablation switch: train with all-ones weights instead of jmds
    use_jmds_weights: bool = True

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValidationError(f"scenario must be one of {SCENARIOS}")
        if self.mixup_alpha <= 0:
            raise ValidationError("mixup_alpha must be > 0")
        if not 0.0 < self.partial_threshold < 1.0:
            raise ValidationError("partial_threshold must be in (0, 1)")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValidationError("bad optimizer configuration")
        if not 0.0 <= self.momentum < 1.0 or self.weight_decay < 0:
            raise ValidationError("bad optimizer configuration")
        if self.gamma_override is not None and not 0.0 <= self.gamma_override <= 1.0:
            raise ValidationError("gamma_override must lie in [0, 1]")
        if self.covariance not in ("full", "diag"):
            raise ValidationError("covariance must be 'full' or 'diag'")

    @property
    def mixup_enabled(self) -> bool:
        if self.use_weight_mixup is None:
            return self.scenario != "open"
        return self.use_weight_mixup


@dataclass
class EpochState:
    """Snapshot taken at each epoch's scoring pass (before that epoch's updates)."""

    epoch: int
    pseudo_labels: np.ndarray
    jmds: ScoreVector
    known_mask: np.ndarray
    active_classes: np.ndarray
    accuracy: float | None
    mean_jmds: float
    median_jmds: float

    @property
    def known_fraction(self) -> float:
        return float(self.known_mask.mean())

    def jmds_quantile(self, q: float) -> float:
        return float(np.quantile(self.jmds.values, q))


def sample_mixing_coefficient(alpha: float, rng: np.random.Generator, size=None):
    """Beta(alpha, alpha) draw(s) via the ratio of two Gamma(alpha, 1) draws."""
    if alpha <= 0:
        raise ValidationError("alpha must be > 0")
    g1 = rng.gamma(alpha, 1.0, size=size)
    g2 = rng.gamma(alpha, 1.0, size=size)
    total = g1 + g2
    if size is None:
        return g1 / total if total > 0 else 0.5
    out = np.full(size, 0.5)
    np.divide(g1, total, out=out, where=total > 0)
    return out


def weight_mixup_batch(x_i, x_j, y_i, y_j, w_i, w_j, gamma, class_count: int):
    """Mix inputs, one-hot pseudo-labels, and confidence weights together.

    ``gamma`` may be a scalar (one coefficient for the batch) or a
    per-sample vector. Returns (mixed inputs, soft labels, mixed weights).
    """
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    y_i = np.asarray(y_i, dtype=np.int64)
    y_j = np.asarray(y_j, dtype=np.int64)
    w_i = np.asarray(w_i, dtype=np.float64)
    w_j = np.asarray(w_j, dtype=np.float64)
    if not (x_i.shape == x_j.shape and y_i.shape == y_j.shape == w_i.shape == w_j.shape
            and x_i.shape[0] == y_i.shape[0]):
        raise ValidationError("mixup batch shapes do not match")
    if np.any(w_i < 0) or np.any(w_i > 1) or np.any(w_j < 0) or np.any(w_j > 1):
        raise ValidationError("confidence weights must lie in [0, 1]")
    if np.isscalar(gamma) and gamma == 1.0:
        # exact identity keeps the reduction to the unmixed loss bitwise
        return x_i.copy(), one_hot(y_i, class_count), w_i.copy()
    gam = np.asarray(gamma, dtype=np.float64)
    gcol = gam.reshape(-1, 1) if gam.ndim == 1 else gam
    mixed_x = gcol * x_i + (1.0 - gcol) * x_j
    mixed_y = gcol * one_hot(y_i, class_count) + (1.0 - gcol) * one_hot(y_j, class_count)
    mixed_w = gam * w_i + (1.0 - gam) * w_j
    return mixed_x, mixed_y, mixed_w


def prediction_entropy(probs: np.ndarray) -> np.ndarray:
    """Shannon entropy (natural log) per row, with 0 log 0 := 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(probs > 0.0, probs * np.log(probs), 0.0)
    return -plogp.sum(axis=1)


def two_means_1d(values: np.ndarray, max_iter: int = 100) -> np.ndarray:
    """Lloyd's 2-means on a 1-d array, centroids seeded at min and max.

    Returns a boolean mask of membership in the lower-centroid cluster.
    If all values coincide, everything belongs to the lower cluster.
    """
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return np.ones(values.shape[0], dtype=bool)
    c_lo, c_hi = lo, hi
    low_mask = np.abs(values - c_lo) <= np.abs(values - c_hi)
    for _ in range(max_iter):
        c_lo = float(values[low_mask].mean())
        c_hi = float(values[~low_mask].mean())
        new_mask = np.abs(values - c_lo) <= np.abs(values - c_hi)
        if np.array_equal(new_mask, low_mask):
            break
        low_mask = new_mask
    return low_mask


def known_unknown_split(probs) -> tuple[np.ndarray, np.ndarray]:
    """Split samples into known (low prediction entropy) and unknown.

    Returns (known_mask, unknown_mask) boolean vectors.
    """
    p = probs.probs if hasattr(probs, "probs") else np.asarray(probs)
    if p.shape[0] < 2:
        raise ValidationError("need at least two samples to split")
    known = two_means_1d(prediction_entropy(p))
    return known, ~known


def estimate_classes(
    model: MlpModel,
    X: np.ndarray,
    tau: float,
    reg_epsilon: float | None = None,
    em_iterations: int = 1,
    covariance: str = "full",
) -> np.ndarray:
    """Estimate which classes are present in a partial-set target.

    Iteratively refits the mixture on the surviving class set and drops
    classes whose posterior mass falls below tau * n / |classes|, until the
    set is stable. Shrinks monotonically, so at most K iterations run.
    """
    if not 0.0 < tau < 1.0:
        raise ValidationError("tau must be in (0, 1)")
    hidden, logits = model_mod.forward(model, X)
    probs = model_mod.softmax(logits)
    n = X.shape[0]
    active = np.arange(model.class_count, dtype=np.int64)
    while True:
        try:
            mixture = gmm_mod.fit_gmm(
                hidden, probs, class_set=active, reg_epsilon=reg_epsilon,
                em_iterations=em_iterations, covariance=covariance,
            )
        except DegenerateComponentError as exc:
            survivors = np.setdiff1d(active, np.asarray(exc.classes))
            if survivors.size == 0:
                warnings.warn("all classes degenerate; keeping the current set")
                return active
            active = survivors
            continue
        dp = gmm_mod.data_probability(mixture, hidden)
        mass = dp.probs.sum(axis=0)
        keep = mass >= tau * n / active.size
        if np.all(keep):
            return active
        if not np.any(keep):
            warnings.warn("class filter would empty the set; keeping the largest class")
            return active[[int(np.argmax(mass))]]
        active = active[keep]


def _fit_epoch_mixture(hidden, probs, active, cfg):
    """Mixture fit that drops degenerate classes for the epoch with a warning."""
    while True:
        try:
            mixture = gmm_mod.fit_gmm(
                hidden, probs, class_set=active, reg_epsilon=cfg.reg_epsilon,
                em_iterations=cfg.em_iterations, covariance=cfg.covariance,
            )
            return mixture, active
        except DegenerateComponentError as exc:
            warnings.warn(f"dropping degenerate class(es) {exc.classes} for this epoch")
            active = np.setdiff1d(active, np.asarray(exc.classes))
            if active.size == 0:
                raise ValidationError("no usable classes left for this epoch") from exc


def open_set_predictions(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Model predictions with unknown-classified samples mapped to class K."""
    _, logits = model_mod.forward(model, X)
    probs = model_mod.softmax(logits)
    known, _ = known_unknown_split(probs)
    preds = logits.argmax(axis=1)
    preds[~known] = model.class_count
    return preds


def target_accuracy(model: MlpModel, target: FeatureSet, scenario: str = "closed") -> float:
    """Scenario-appropriate accuracy of the model on a labeled target set.

    Closed/partial: overall accuracy of the argmax prediction. Open: mean of
    per-class accuracies over the known classes plus the unknown bucket
    (unknown ground truth = class index K).
    """
    if target.labels is None:
        raise ValidationError("target_accuracy needs a labeled target set")
    if scenario == "open":
        preds = open_set_predictions(model, target.features)
        return accuracy(preds, target.labels, mode="per_class_mean")
    _, logits = model_mod.forward(model, target.features)
    return accuracy(logits.argmax(axis=1), target.labels, mode="overall")


def _score_pass(model, target, cfg, epoch) -> EpochState:
    X = target.features
    hidden, logits = model_mod.forward(model, X)
    probs = model_mod.model_probability(logits)
    n = X.shape[0]

    if cfg.scenario == "partial":
        active = estimate_classes(
            model, X, cfg.partial_threshold, cfg.reg_epsilon,
            cfg.em_iterations, cfg.covariance,
        )
    else:
        active = np.arange(model.class_count, dtype=np.int64)

    mixture, active = _fit_epoch_mixture(hidden, probs, active, cfg)
    dp = gmm_mod.data_probability(mixture, hidden)
    labels = gmm_mod.pseudo_labels(dp)

    if cfg.scenario == "open":
        known_mask, _ = known_unknown_split(probs)
    else:
        known_mask = np.ones(n, dtype=bool)

    lpg = scores_mod.score_lpg(dp)
    mppl = scores_mod.score_mppl(probs, labels)
    jmds = scores_mod.score_jmds(lpg, mppl)

    acc = None
    if target.labels is not None:
        acc = target_accuracy(model, target, cfg.scenario)
    return EpochState(
        epoch=epoch,
        pseudo_labels=labels,
        jmds=jmds,
        known_mask=known_mask,
        active_classes=active,
        accuracy=acc,
        mean_jmds=float(jmds.values.mean()),
        median_jmds=float(np.median(jmds.values)),
    )


def cowa_adapt(
    model: MlpModel, target: FeatureSet, cfg: AdaptConfig
) -> tuple[MlpModel, list[EpochState]]:
    """Adapt a pre-trained model to an unlabeled target set.

    Target labels, when present, are used only for the per-epoch accuracy
    metric. The returned log holds one state per epoch (captured before
    that epoch's updates) plus a final post-training state. Batch shuffling
    and Mixup draw from independent seeded streams, so disabling Mixup does
    not perturb the batch order.
    """
    if target.dim != model.dim:
        raise ValidationError(
            f"target dim {target.dim} does not match model dim {model.dim}"
        )
    batch_seq, mixup_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    rng_batch = np.random.default_rng(batch_seq)
    rng_mixup = np.random.default_rng(mixup_seq)
    state = OptimizerState.zeros(model)
    X = target.features
    k = model.class_count
    log = []
    for epoch in range(cfg.epochs):
        snap = _score_pass(model, target, cfg, epoch)
        log.append(snap)
        train_idx = np.flatnonzero(snap.known_mask)
        order = train_idx[rng_batch.permutation(train_idx.shape[0])]
        weights = snap.jmds.values if cfg.use_jmds_weights else np.ones(X.shape[0])
        mixup_on = cfg.mixup_enabled
        for start in range(0, order.shape[0], cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            if mixup_on:
                partner = batch[rng_mixup.permutation(batch.shape[0])]
                if cfg.gamma_override is not None:
                    gamma = cfg.gamma_override
                elif cfg.mixup_per_sample:
                    gamma = sample_mixing_coefficient(
                        cfg.mixup_alpha, rng_mixup, size=batch.shape[0]
                    )
                else:
                    gamma = sample_mixing_coefficient(cfg.mixup_alpha, rng_mixup)
                xb, soft, wb = weight_mixup_batch(
                    X[batch], X[partner],
                    snap.pseudo_labels[batch], snap.pseudo_labels[partner],
                    weights[batch], weights[partner],
                    gamma, k,
                )
            else:
                xb = X[batch]
                soft = one_hot(snap.pseudo_labels[batch], k)
                wb = weights[batch]
            grads = model_mod.weighted_ce_grad(model, xb, soft, wb)
            sgd_step(model, grads, state, cfg)
    log.append(_score_pass(model, target, cfg, cfg.epochs))
    return model, log


QUANTILE_GRID = tuple(q / 10.0 for q in range(11))


def write_adapt_log(path, states) -> None:
    """Per-epoch adaptation log CSV."""
    lines = ["epoch,accuracy,mean_jmds,median_jmds,q10_jmds,q90_jmds,active_classes,known_fraction"]
    for s in states:
        acc = "" if s.accuracy is None else f"{s.accuracy:.17g}"
        lines.append(
            f"{s.epoch},{acc},{s.mean_jmds:.17g},{s.median_jmds:.17g},"
            f"{s.jmds_quantile(0.1):.17g},{s.jmds_quantile(0.9):.17g},"
            f"{s.active_classes.size},{s.known_fraction:.17g}"
        )
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_jmds_quantiles(path, states) -> None:
    """Decile trajectories of the jmds score across epochs."""
    header = "epoch," + ",".join(f"q{int(q * 100)}" for q in QUANTILE_GRID)
    lines = [header]
    for s in states:
        vals = ",".join(f"{s.jmds_quantile(q):.17g}" for q in QUANTILE_GRID)
        lines.append(f"{s.epoch},{vals}")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
