"""Risk-coverage evaluation of confidence scores.

The curve ranks samples by score (descending, ties broken by original
index), then reports the running error rate of every prefix; its area is
the mean of those prefix risks. Lower area means the score ranks wrong
pseudo-labels later.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import gmm as gmm_mod
from . import model as model_mod
from . import scores as scores_mod
from .errors import ValidationError
from .scores import ScoreVector


@dataclass
class RiskCoverageCurve:
    coverage: np.ndarray  # strictly increasing, ends at 1.0
    risk: np.ndarray
    aurc: float

    def __post_init__(self):
        if self.coverage.shape != self.risk.shape or self.coverage.ndim != 1:
            raise ValidationError("coverage and risk must be equal-length vectors")
        if np.any(np.diff(self.coverage) <= 0) or self.coverage[-1] != 1.0:
            raise ValidationError("coverage must increase strictly and end at 1.0")
        if abs(self.aurc - self.risk.mean()) > 1e-12:
            raise ValidationError("aurc must equal the mean of the risks")

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.coverage.tolist(), self.risk.tolist()))


def zero_one_loss(pseudo_labels: np.ndarray, true_labels: np.ndarray) -> np.ndarray:
    """Elementwise disagreement indicator as floats."""
    pseudo_labels = np.asarray(pseudo_labels)
    true_labels = np.asarray(true_labels)
    if pseudo_labels.shape != true_labels.shape:
        raise ValidationError("label vectors must have equal length")
    return (pseudo_labels != true_labels).astype(np.float64)


def _prefix_risks(ordered_losses: np.ndarray) -> np.ndarray:
    n = ordered_losses.shape[0]
    return np.cumsum(ordered_losses) / np.arange(1, n + 1)


def risk_coverage(scores: ScoreVector, losses: np.ndarray) -> RiskCoverageCurve:
    """Risk-coverage curve of a score vector against 0/1 losses."""
    losses = np.asarray(losses, dtype=np.float64)
    n = losses.shape[0]
    if n < 1 or len(scores) != n:
        raise ValidationError("scores and losses must have equal positive length")
    # descending score, ties broken by original index ascending
    order = np.lexsort((np.arange(n), -scores.values))
    risks = _prefix_risks(losses[order])
    coverage = np.arange(1, n + 1) / n
    return RiskCoverageCurve(coverage, risks, float(risks.mean()))


def oracle_aurc(losses: np.ndarray) -> float:
    """Area under the curve of a perfect ranking (all 0-loss samples first)."""
    losses = np.asarray(losses, dtype=np.float64)
    if losses.shape[0] < 1:
        raise ValidationError("need at least one sample")
    risks = _prefix_risks(np.sort(losses))
    return float(risks.mean())


def accuracy(pred_labels, true_labels, mode: str = "overall") -> float:
    """Fraction correct, or the unweighted mean of per-class accuracies.

    In per_class_mean mode, classes with no ground-truth samples are
    excluded with a warning.
    """
    pred_labels = np.asarray(pred_labels)
    true_labels = np.asarray(true_labels)
    if pred_labels.shape != true_labels.shape:
        raise ValidationError("label vectors must have equal length")
    if mode == "overall":
        return float(np.mean(pred_labels == true_labels))
    if mode != "per_class_mean":
        raise ValidationError(f"unknown accuracy mode {mode!r}")
    class_count = int(max(pred_labels.max(), true_labels.max())) + 1
    per_class = []
    for c in range(class_count):
        mask = true_labels == c
        if not np.any(mask):
            warnings.warn(f"class {c} has no ground-truth samples; excluded")
            continue
        per_class.append(float(np.mean(pred_labels[mask] == c)))
    return float(np.mean(per_class))


@dataclass
class ComparisonRow:
    pseudo_labeler: str
    score_kind: str
    aurc: float
    score: ScoreVector
    curve: RiskCoverageCurve


def compute_all_scores(
    model,
    X: np.ndarray,
    em_iterations: int = 1,
    reg_epsilon: float | None = None,
    covariance: str = "full",
):
    """All six scores for one model/dataset pair.

    Returns (list of ScoreVector, naive pseudo-labels, mixture pseudo-labels).
    The mixture is fit on the extracted features with prediction-based
    initialization plus ``em_iterations`` EM refinements.
    """
    hidden, logits = model_mod.forward(model, X)
    probs = model_mod.model_probability(logits)
    maxprob = scores_mod.score_maxprob(probs)
    ent = scores_mod.score_ent(probs)

    mixture = gmm_mod.fit_gmm(
        hidden, probs, reg_epsilon=reg_epsilon,
        em_iterations=em_iterations, covariance=covariance,
    )
    dp = gmm_mod.data_probability(mixture, hidden)
    labels = gmm_mod.pseudo_labels(dp)
    cossim = scores_mod.score_cossim(hidden, labels)
    mppl = scores_mod.score_mppl(probs, labels)
    lpg = scores_mod.score_lpg(dp)
    jmds = scores_mod.score_jmds(lpg, mppl)
    return [maxprob, ent, cossim, mppl, lpg, jmds], maxprob.pseudo_labels, labels


def compare_scores(
    model,
    X: np.ndarray,
    true_labels: np.ndarray,
    em_iterations: int = 1,
    reg_epsilon: float | None = None,
    covariance: str = "full",
) -> list[ComparisonRow]:
    """AURC of every (pseudo-labeler, score) pair on a labeled target set."""
    true_labels = np.asarray(true_labels, dtype=np.int64)
    all_scores, naive_labels, mixture_labels = compute_all_scores(
        model, X, em_iterations, reg_epsilon, covariance
    )
    naive_losses = zero_one_loss(naive_labels, true_labels)
    mixture_losses = zero_one_loss(mixture_labels, true_labels)
    rows = []
    for sv in all_scores:
        if sv.kind in ("maxprob", "ent"):
            labeler, losses = "naive", naive_losses
        else:
            labeler, losses = "gmm", mixture_losses
        curve = risk_coverage(sv, losses)
        rows.append(ComparisonRow(labeler, sv.kind, curve.aurc, sv, curve))
    return rows


def write_comparison_csv(path, rows) -> None:
    lines = ["pseudo_labeler,score,aurc"]
    for row in rows:
        lines.append(f"{row.pseudo_labeler},{row.score_kind},{row.aurc:.17g}")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_curve_csv(path, curve: RiskCoverageCurve) -> None:
    lines = ["coverage,risk"]
    for cov, risk in zip(curve.coverage, curve.risk):
        lines.append(f"{cov:.17g},{risk:.17g}")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
