"""Confidence-weighted source-free domain adaptation toolkit.

Pipeline: pretrain a small classifier on labeled source features, fit a
Gaussian mixture on the target feature space to get pseudo-labels and the
jmds confidence score, then self-train on the target weighted by that
score (optionally through weight Mixup). Scores are compared via
risk-coverage curves (AURC).
"""

from ._kernels import BACKEND
from .adaptation import (
    AdaptConfig,
    EpochState,
    cowa_adapt,
    estimate_classes,
    known_unknown_split,
    open_set_predictions,
    sample_mixing_coefficient,
    target_accuracy,
    weight_mixup_batch,
)
from .data import FeatureSet, ToyShiftConfig, generate_toy, load_features, save_features
from .errors import (
    CowaError,
    DegenerateComponentError,
    FormatError,
    NumericalError,
    ValidationError,
)
from .evaluation import (
    RiskCoverageCurve,
    accuracy,
    compare_scores,
    compute_all_scores,
    oracle_aurc,
    risk_coverage,
    zero_one_loss,
)
from .gmm import (
    DataProbabilities,
    GmmParams,
    data_probability,
    em_iteration,
    fit_gmm,
    init_from_predictions,
    log_likelihood,
    pseudo_labels,
)
from .model import (
    MlpModel,
    Probabilities,
    TrainConfig,
    forward,
    init_model,
    load_model,
    model_probability,
    pretrain_source,
    save_model,
    sgd_step,
    weighted_ce_grad,
    weighted_ce_loss,
)
from .scores import (
    ScoreVector,
    score_cossim,
    score_ent,
    score_jmds,
    score_lpg,
    score_maxprob,
    score_mppl,
)

__version__ = "0.1.0"
