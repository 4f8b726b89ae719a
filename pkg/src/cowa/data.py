"""Feature-set ingestion, CSV persistence, and synthetic domain-shift generation.

The only interchange format is CSV with a ``f0,...,f{d-1}[,label]`` header.
Values are written with 17 significant digits, which round-trips float64
exactly. Random generation uses numpy's default PCG64 generator, so a fixed
seed reproduces byte-identical datasets across runs of the same build.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ValidationError

SOURCE = "source"
TARGET = "target"


@dataclass
class FeatureSet:
    """An n x d feature matrix with optional class labels.

    Immutable after construction: the arrays are marked read-only and the
    object is safe to share across threads.
    """

    features: np.ndarray
    labels: np.ndarray | None = None
    domain_tag: str = TARGET
    class_count: int = 2

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise ValidationError(f"features must be 2-d, got shape {feats.shape}")
        if feats.shape[0] < 1 or feats.shape[1] < 1:
            raise ValidationError(f"need n >= 1 and d >= 1, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise ValidationError("features contain non-finite values")
        if self.domain_tag not in (SOURCE, TARGET):
            raise ValidationError(f"domain_tag must be '{SOURCE}' or '{TARGET}'")
        if self.class_count < 2:
            raise ValidationError("class_count must be >= 2")
        if self.labels is not None:
            labels = np.ascontiguousarray(self.labels, dtype=np.int64)
            if labels.shape != (feats.shape[0],):
                raise ValidationError(
                    f"labels shape {labels.shape} does not match n={feats.shape[0]}"
                )
            if labels.min() < 0 or labels.max() >= self.class_count:
                raise ValidationError(
                    f"labels must lie in [0, {self.class_count}), "
                    f"got range [{labels.min()}, {labels.max()}]"
                )
            labels.setflags(write=False)
            self.labels = labels
        feats.setflags(write=False)
        self.features = feats

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ToyShiftConfig:
    """Configuration for the shifted-Gaussian toy benchmark.

    Source features are drawn from K isotropic Gaussians; target features
    from the same Gaussians translated by a per-class offset. Defaults place
    the class means on a circle of radius 3 standard deviations and shift
    each class tangentially by about one standard deviation, i.e. a mild
    covariate shift that keeps the cluster structure intact.
    """

    class_count: int = 3
    dim: int = 2
    source_means: np.ndarray | None = None
    target_mean_offset: np.ndarray | None = None
    per_class_count: int = 200
    covariance_scale: float = 1.0
    seed: int = 0
    mean_radius_sigmas: float = 3.0
    offset_sigmas: float = 1.0

    def __post_init__(self):
        if self.class_count < 2:
            raise ValidationError("class_count must be >= 2")
        if self.dim < 1:
            raise ValidationError("dim must be >= 1")
        if self.per_class_count < 1:
            raise ValidationError("per_class_count must be >= 1")
        if self.covariance_scale <= 0:
            raise ValidationError("covariance_scale must be > 0")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.covariance_scale)

    def resolved_means(self) -> np.ndarray:
        if self.source_means is not None:
            means = np.asarray(self.source_means, dtype=np.float64)
            if means.shape != (self.class_count, self.dim):
                raise ValidationError(
                    f"source_means shape {means.shape} != ({self.class_count}, {self.dim})"
                )
            return means
        return circle_means(
            self.class_count, self.dim, self.mean_radius_sigmas * self.sigma
        )

    def resolved_offsets(self) -> np.ndarray:
        if self.target_mean_offset is not None:
            offs = np.asarray(self.target_mean_offset, dtype=np.float64)
            if offs.shape != (self.class_count, self.dim):
                raise ValidationError(
                    f"target_mean_offset shape {offs.shape} != ({self.class_count}, {self.dim})"
                )
            return offs
        return tangential_offsets(
            self.class_count, self.dim, self.offset_sigmas * self.sigma
        )


def circle_means(class_count: int, dim: int, radius: float) -> np.ndarray:
    """Class means evenly spaced on a circle in the first two dimensions."""
    means = np.zeros((class_count, dim), dtype=np.float64)
    angles = 2.0 * np.pi * np.arange(class_count) / class_count + np.pi / 2.0
    means[:, 0] = radius * np.cos(angles)
    if dim > 1:
        means[:, 1] = radius * np.sin(angles)
    return means


def tangential_offsets(class_count: int, dim: int, magnitude: float) -> np.ndarray:
    """Per-class offsets tangent to the circle layout, each of the given norm."""
    offs = np.zeros((class_count, dim), dtype=np.float64)
    angles = 2.0 * np.pi * np.arange(class_count) / class_count + np.pi / 2.0
    offs[:, 0] = -magnitude * np.sin(angles)
    if dim > 1:
        offs[:, 1] = magnitude * np.cos(angles)
    else:
        offs[:, 0] = magnitude  # no tangent in 1-d; shift along the line
    return offs


def generate_toy(cfg: ToyShiftConfig) -> tuple[FeatureSet, FeatureSet]:
    """Sample (source, target) feature sets under the configured shift.

    Target labels are generated too, but by contract they are only for
    evaluation, never for training.
    """
    means = cfg.resolved_means()
    offsets = cfg.resolved_offsets()
    rng = np.random.default_rng(cfg.seed)
    sigma = cfg.sigma
    m = cfg.per_class_count

    def sample(centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        feats = np.empty((cfg.class_count * m, cfg.dim), dtype=np.float64)
        labels = np.repeat(np.arange(cfg.class_count, dtype=np.int64), m)
        for c in range(cfg.class_count):
            feats[c * m : (c + 1) * m] = rng.normal(
                loc=centers[c], scale=sigma, size=(m, cfg.dim)
            )
        return feats, labels

    src_feats, src_labels = sample(means)
    tgt_feats, tgt_labels = sample(means + offsets)
    source = FeatureSet(src_feats, src_labels, SOURCE, cfg.class_count)
    target = FeatureSet(tgt_feats, tgt_labels, TARGET, cfg.class_count)
    return source, target


def save_features(fset: FeatureSet, path) -> None:
    """Write a FeatureSet as CSV with 17-significant-digit values."""
    d = fset.dim
    header = ",".join(f"f{i}" for i in range(d))
    if fset.labels is not None:
        header += ",label"
    lines = [header]
    for i in range(fset.n):
        row = ",".join(f"{v:.17g}" for v in fset.features[i])
        if fset.labels is not None:
            row += f",{fset.labels[i]}"
        lines.append(row)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_features(
    path,
    fmt: str = "csv",
    domain_tag: str = TARGET,
    class_count: int | None = None,
) -> FeatureSet:
    """Load a FeatureSet from CSV.

    The feature dimension is inferred from the header; labels are populated
    iff a ``label`` column is present. ``class_count``, when omitted, is
    inferred from the labels (minimum 2).
    """
    if fmt != "csv":
        raise FormatError(f"unsupported format {fmt!r}")
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file")
    header = lines[0].split(",")
    has_label = header[-1] == "label"
    feat_cols = header[:-1] if has_label else header
    d = len(feat_cols)
    if d < 1 or feat_cols != [f"f{i}" for i in range(d)]:
        raise FormatError(f"{path}:1: bad header {lines[0]!r}")

    rows = []
    labels = [] if has_label else None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise FormatError(
                f"{path}:{lineno}: expected {len(header)} fields, got {len(parts)}"
            )
        try:
            rows.append([float(p) for p in parts[:d]])
            if has_label:
                labels.append(int(parts[d]))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise FormatError(f"{path}: no data rows")

    feats = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(feats)):
        bad = int(np.argwhere(~np.isfinite(feats))[0][0]) + 2
        raise ValidationError(f"{path}:{bad}: non-finite feature value")
    label_arr = np.asarray(labels, dtype=np.int64) if has_label else None
    if class_count is None:
        class_count = max(2, int(label_arr.max()) + 1) if has_label else 2
    return FeatureSet(feats, label_arr, domain_tag, class_count)
