"""Per-sample confidence scores, all rescaled to [0, 1].

Model-side scores (maxprob, ent) rank by the classifier's own softmax and
pair with its argmax pseudo-labels. Mixture-side scores (cossim, mppl, lpg)
pair with the mixture's pseudo-labels; jmds is the product of lpg and mppl
and is the training weight used by the adaptation loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .gmm import DataProbabilities
from .model import Probabilities

KINDS = ("maxprob", "ent", "cossim", "mppl", "lpg", "jmds")


@dataclass
class ScoreVector:
    """Confidence values paired with the pseudo-labels they grade."""

    values: np.ndarray
    kind: str
    pseudo_labels: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        self.pseudo_labels = np.ascontiguousarray(self.pseudo_labels, dtype=np.int64)
        if self.kind not in KINDS:
            raise ValidationError(f"unknown score kind {self.kind!r}")
        if self.values.shape != self.pseudo_labels.shape or self.values.ndim != 1:
            raise ValidationError("values and pseudo_labels must be equal-length vectors")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("scores must be finite")
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise ValidationError(f"{self.kind} scores must lie in [0, 1]")

    def __len__(self) -> int:
        return self.values.shape[0]


def score_maxprob(probs: Probabilities) -> ScoreVector:
    """Maximum softmax probability per row; naive argmax pseudo-labels."""
    p = probs.probs
    return ScoreVector(p.max(axis=1), "maxprob", p.argmax(axis=1))


def score_ent(probs: Probabilities) -> ScoreVector:
    """Negative-entropy confidence: 1 + sum_c p log p / log K, in [0, 1].

    Uses the 0 log 0 := 0 convention; uniform rows score 0, one-hot rows 1.
    """
    p = probs.probs
    k = p.shape[1]
    if k < 2:
        raise ValidationError("entropy score needs K >= 2")
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0.0, p * np.log(p), 0.0)
    values = 1.0 + plogp.sum(axis=1) / np.log(k)
    return ScoreVector(np.clip(values, 0.0, 1.0), "ent", p.argmax(axis=1))


def cluster_centers(
    features: np.ndarray, pseudo_labels: np.ndarray, class_count: int
) -> np.ndarray:
    """Per-pseudo-label feature means; rows of absent classes are zero."""
    centers = np.zeros((class_count, features.shape[1]))
    for c in range(class_count):
        mask = pseudo_labels == c
        if np.any(mask):
            centers[c] = features[mask].mean(axis=0)
    return centers


def score_cossim(
    features: np.ndarray,
    pseudo_labels: np.ndarray,
    centers: np.ndarray | None = None,
) -> ScoreVector:
    """Affine-rescaled cosine similarity to the assigned cluster center."""
    features = np.asarray(features, dtype=np.float64)
    pseudo_labels = np.asarray(pseudo_labels, dtype=np.int64)
    if centers is None:
        centers = cluster_centers(features, pseudo_labels, int(pseudo_labels.max()) + 1)
    feat_norms = np.linalg.norm(features, axis=1)
    own = centers[pseudo_labels]
    center_norms = np.linalg.norm(own, axis=1)
    if np.any(feat_norms == 0.0) or np.any(center_norms == 0.0):
        raise ValidationError("cosine similarity undefined for zero-norm vectors")
    cos = (features * own).sum(axis=1) / (feat_norms * center_norms)
    return ScoreVector(np.clip(0.5 * (1.0 + cos), 0.0, 1.0), "cossim", pseudo_labels)


def score_mppl(probs: Probabilities, pseudo_labels: np.ndarray) -> ScoreVector:
    """Model probability of the (mixture-assigned) pseudo-label."""
    p = probs.probs
    pseudo_labels = np.asarray(pseudo_labels, dtype=np.int64)
    if pseudo_labels.min() < 0 or pseudo_labels.max() >= p.shape[1]:
        raise ValidationError("pseudo-label out of range")
    values = p[np.arange(p.shape[0]), pseudo_labels]
    return ScoreVector(values, "mppl", pseudo_labels)


def score_lpg(dp: DataProbabilities) -> ScoreVector:
    """Top-1 minus top-2 log-posterior gap, normalized by the dataset maximum.

    Works on the log numerators directly (the per-row normalizer cancels in
    the gap), so underflowing posteriors are harmless. If every sample has a
    zero gap the scores are all zero, signaling no confident sample.
    """
    log_num = dp.log_numerators
    n, k = log_num.shape
    if k < 2:
        raise ValidationError("log-probability gap needs K >= 2")
    order = np.argsort(log_num, axis=1)
    top = order[:, -1]
    second = order[:, -2]
    rows = np.arange(n)
    mingap = log_num[rows, top] - log_num[rows, second]
    # match the argmax tie-break (lowest class index wins)
    labels = log_num.argmax(axis=1)
    max_gap = mingap.max()
    values = mingap / max_gap if max_gap > 0.0 else np.zeros(n)
    return ScoreVector(values, "lpg", dp.classes[labels])


def score_jmds(lpg: ScoreVector, mppl: ScoreVector) -> ScoreVector:
    """Product of the lpg and mppl scores over shared pseudo-labels."""
    if lpg.kind != "lpg" or mppl.kind != "mppl":
        raise ValidationError("expects an lpg and an mppl score vector")
    if len(lpg) != len(mppl) or np.any(lpg.pseudo_labels != mppl.pseudo_labels):
        raise ValidationError("lpg and mppl must grade the same pseudo-labels")
    return ScoreVector(lpg.values * mppl.values, "jmds", lpg.pseudo_labels)


def write_score_csv(path, scores, true_labels=None) -> None:
    """Dump score vectors as `index,pseudo_label,score_kind,value[,true_label,correct]`."""
    header = "index,pseudo_label,score_kind,value"
    if true_labels is not None:
        header += ",true_label,correct"
    lines = [header]
    for sv in scores:
        for i in range(len(sv)):
            row = f"{i},{sv.pseudo_labels[i]},{sv.kind},{sv.values[i]:.17g}"
            if true_labels is not None:
                correct = int(sv.pseudo_labels[i] == true_labels[i])
                row += f",{true_labels[i]},{correct}"
            lines.append(row)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
