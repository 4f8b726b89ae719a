"""Two-layer fully-connected classifier trained from scratch.

The model is an extractor (relu hidden layer) composed with a linear
classifier. Gradients are analytic and verified against finite differences
in the test suite; the forward/backward inner loops run on the kernel
backend selected in :mod:`cowa._kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .data import FeatureSet
from .errors import FormatError, ValidationError


@dataclass
class MlpModel:
    """Parameters of the extractor (W1, b1) and classifier (W2, b2)."""

    W1: np.ndarray  # (h, d)
    b1: np.ndarray  # (h,)
    W2: np.ndarray  # (K, h)
    b2: np.ndarray  # (K,)
    activation: str = "relu"

    def __post_init__(self):
        self.W1 = np.ascontiguousarray(self.W1, dtype=np.float64)
        self.b1 = np.ascontiguousarray(self.b1, dtype=np.float64)
        self.W2 = np.ascontiguousarray(self.W2, dtype=np.float64)
        self.b2 = np.ascontiguousarray(self.b2, dtype=np.float64)
        h, d = self.W1.shape
        k = self.W2.shape[0]
        if h < 1:
            raise ValidationError("hidden width must be >= 1")
        if self.b1.shape != (h,) or self.W2.shape != (k, h) or self.b2.shape != (k,):
            raise ValidationError("parameter shapes are inconsistent")
        if self.activation != "relu":
            raise ValidationError(f"unsupported activation {self.activation!r}")
        for name, p in self.params().items():
            if not np.all(np.isfinite(p)):
                raise ValidationError(f"non-finite values in {name}")

    @property
    def dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def class_count(self) -> int:
        return self.W2.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy(),
            self.activation,
        )


def init_model(dim: int, hidden: int = 32, class_count: int = 2, seed: int = 0) -> MlpModel:
    """He-initialized model; deterministic under the seed."""
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / dim), size=(hidden, dim))
    w2 = rng.normal(0.0, np.sqrt(2.0 / hidden), size=(class_count, hidden))
    return MlpModel(w1, np.zeros(hidden), w2, np.zeros(class_count))


@dataclass
class Probabilities:
    """Row-stochastic n x K matrix of class probabilities."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.probs, dtype=np.float64)
        if p.ndim != 2:
            raise ValidationError("probs must be 2-d")
        if np.any(p < 0.0):
            raise ValidationError("probabilities must be nonnegative")
        if np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-9:
            raise ValidationError("probability rows must sum to 1 within 1e-9")
        self.probs = p


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-3
    batch_size: int = 64
    epochs: int = 40
    label_smoothing: float = 0.1
    seed: int = 0
    # optional split rate for the extractor layer (W1, b1); None = shared rate
    extractor_lr: float | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValidationError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValidationError("batch_size and epochs must be >= 1")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValidationError("label_smoothing must be in [0, 1)")
        if self.extractor_lr is not None and self.extractor_lr < 0:
            raise ValidationError("extractor_lr must be >= 0")


@dataclass
class Gradients:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray


@dataclass
class OptimizerState:
    """SGD momentum buffers, one velocity per parameter tensor."""

    velocity: dict[str, np.ndarray]

    @classmethod
    def zeros(cls, model: MlpModel) -> "OptimizerState":
        return cls({k: np.zeros_like(v) for k, v in model.params().items()})


def forward(model: MlpModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Extractor features and classifier logits for the rows of X."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise ValidationError(
            f"input has shape {X.shape}, expected (n, {model.dim})"
        )
    if not np.all(np.isfinite(X)):
        raise ValidationError("input contains non-finite values")
    return kernels.two_layer_forward(X, model.W1, model.b1, model.W2, model.b2)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row softmax with max subtraction for overflow safety."""
    z = logits - logits.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def model_probability(logits: np.ndarray) -> Probabilities:
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValidationError("logits contain non-finite values")
    return Probabilities(softmax(logits))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def smooth_labels(labels: np.ndarray, class_count: int, epsilon: float) -> np.ndarray:
    """One-hot targets smoothed to 1-eps on the true class, eps/(K-1) elsewhere."""
    n = labels.shape[0]
    out = np.full((n, class_count), epsilon / (class_count - 1), dtype=np.float64)
    out[np.arange(n), labels] = 1.0 - epsilon
    return out


def one_hot(labels: np.ndarray, class_count: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], class_count), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _check_training_inputs(model, X, soft_labels, weights):
    X = np.ascontiguousarray(X, dtype=np.float64)
    soft_labels = np.ascontiguousarray(soft_labels, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    n = X.shape[0]
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise ValidationError(f"input has shape {X.shape}, expected (n, {model.dim})")
    if soft_labels.shape != (n, model.class_count):
        raise ValidationError(
            f"soft_labels shape {soft_labels.shape} != ({n}, {model.class_count})"
        )
    if weights.shape != (n,):
        raise ValidationError(f"weights shape {weights.shape} != ({n},)")
    if np.any(weights < 0.0):
        raise ValidationError("weights must be nonnegative")
    return X, soft_labels, weights


def weighted_ce_loss(
    model: MlpModel, X: np.ndarray, soft_labels: np.ndarray, weights: np.ndarray
) -> float:
    """(1/n) sum_i w_i sum_c -soft_labels[i,c] log p_M(x_i)_c."""
    X, soft_labels, weights = _check_training_inputs(model, X, soft_labels, weights)
    _, logits = kernels.two_layer_forward(X, model.W1, model.b1, model.W2, model.b2)
    logp = log_softmax(logits)
    return float(-(weights[:, None] * soft_labels * logp).sum() / X.shape[0])


def weighted_ce_grad(
    model: MlpModel, X: np.ndarray, soft_labels: np.ndarray, weights: np.ndarray
) -> Gradients:
    """Analytic gradients of :func:`weighted_ce_loss` w.r.t. all parameters."""
    X, soft_labels, weights = _check_training_inputs(model, X, soft_labels, weights)
    hidden, logits = kernels.two_layer_forward(
        X, model.W1, model.b1, model.W2, model.b2
    )
    probs = softmax(logits)
    g_w1, g_b1, g_w2, g_b2 = kernels.weighted_softmax_ce_grad(
        X, hidden, probs, soft_labels, weights, model.W2
    )
    return Gradients(g_w1, g_b1, g_w2, g_b2)


def sgd_step(
    model: MlpModel, grads: Gradients, state: OptimizerState, cfg: TrainConfig
) -> None:
    """One SGD-with-momentum update; mutates model and state in place.

    v <- momentum * v + grad + weight_decay * param; param <- param - lr * v
    """
    extractor_lr = cfg.extractor_lr if cfg.extractor_lr is not None else cfg.learning_rate
    rates = {"W1": extractor_lr, "b1": extractor_lr,
             "W2": cfg.learning_rate, "b2": cfg.learning_rate}
    grad_map = {"W1": grads.W1, "b1": grads.b1, "W2": grads.W2, "b2": grads.b2}
    for name, param in model.params().items():
        g = grad_map[name]
        if g.shape != param.shape:
            raise ValidationError(f"gradient shape mismatch for {name}")
        v = state.velocity[name]
        v *= cfg.momentum
        v += g
        if cfg.weight_decay:
            v += cfg.weight_decay * param
        param -= rates[name] * v


@dataclass
class PretrainEpoch:
    epoch: int
    loss: float
    accuracy: float


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, order.shape[0], batch_size):
        yield order[start : start + batch_size]


def pretrain_source(
    model: MlpModel, source: FeatureSet, cfg: TrainConfig
) -> list[PretrainEpoch]:
    """Supervised pre-training on labeled source data with label smoothing.

    The per-epoch loss is the mean per-sample training loss measured before
    each update (so with full-batch training it is the exact loss curve).
    Shuffling uses the seeded generator; the last partial batch is kept.
    """
    if source.labels is None:
        raise ValidationError("pretraining requires a labeled source set")
    if source.class_count != model.class_count:
        raise ValidationError(
            f"source has {source.class_count} classes, model {model.class_count}"
        )
    X = source.features
    targets = smooth_labels(source.labels, model.class_count, cfg.label_smoothing)
    rng = np.random.default_rng(cfg.seed)
    state = OptimizerState.zeros(model)
    ones = np.ones(source.n)
    log = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(source.n)
        total = 0.0
        for batch in _batches(order, cfg.batch_size):
            xb = np.ascontiguousarray(X[batch])
            sb = np.ascontiguousarray(targets[batch])
            wb = ones[: batch.shape[0]]
            hidden, logits = kernels.two_layer_forward(
                xb, model.W1, model.b1, model.W2, model.b2
            )
            logp = log_softmax(logits)
            total += float(-(sb * logp).sum())
            probs = softmax(logits)
            g = kernels.weighted_softmax_ce_grad(xb, hidden, probs, sb, wb, model.W2)
            sgd_step(model, Gradients(*g), state, cfg)
        _, logits = forward(model, X)
        acc = float(np.mean(logits.argmax(axis=1) == source.labels))
        log.append(PretrainEpoch(epoch, total / source.n, acc))
    return log


def save_model(model: MlpModel, path) -> None:
    """Checkpoint as text sections with dimension headers, ordered W1,b1,W2,b2."""
    lines = [f"mlp activation={model.activation}"]
    for name in ("W1", "b1", "W2", "b2"):
        p = model.params()[name]
        if p.ndim == 2:
            lines.append(f"{name} {p.shape[0]} {p.shape[1]}")
            for row in p:
                lines.append(",".join(f"{v:.17g}" for v in row))
        else:
            lines.append(f"{name} {p.shape[0]}")
            lines.append(",".join(f"{v:.17g}" for v in p))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> MlpModel:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("mlp activation="):
        raise FormatError(f"{path}: not a model checkpoint")
    activation = lines[0].split("=", 1)[1]
    tensors = {}
    i = 1
    for name in ("W1", "b1", "W2", "b2"):
        if i >= len(lines):
            raise FormatError(f"{path}: missing section {name}")
        head = lines[i].split()
        if head[0] != name:
            raise FormatError(f"{path}:{i + 1}: expected section {name}, got {head[0]!r}")
        try:
            dims = [int(x) for x in head[1:]]
            if len(dims) == 2:
                rows = [
                    [float(v) for v in lines[i + 1 + r].split(",")]
                    for r in range(dims[0])
                ]
                tensors[name] = np.asarray(rows)
                i += 1 + dims[0]
            else:
                tensors[name] = np.asarray([float(v) for v in lines[i + 1].split(",")])
                i += 2
        except (ValueError, IndexError) as exc:
            raise FormatError(f"{path}: bad section {name}: {exc}") from exc
    return MlpModel(tensors["W1"], tensors["b1"], tensors["W2"], tensors["b2"], activation)
