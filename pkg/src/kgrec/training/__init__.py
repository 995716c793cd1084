from kgrec.training.engine import (
    COMPATIBLE,
    LOSSES,
    STRATEGIES,
    FitResult,
    TraceRow,
    TrainingConfig,
    TrainingData,
    batch_objective,
    fit,
    fit_new,
    make_batch,
    compatible,
    train_epoch,
    validation_evaluator,
)
from kgrec.training.losses import (
    loss_1vsall,
    loss_bpr,
    loss_cc,
    loss_kvsall_bce,
    loss_margin_ns,
    loss_ns_bce,
    loss_ph,
    loss_pointwise,
    loss_sce,
)
from kgrec.training.optim import OPTIMIZERS, NonFiniteGradientError, OptimizerState, init_optimizer, optimizer_step
from kgrec.training.regularizers import REGULARIZERS, regularize
from kgrec.training.sampling import PositiveIndex, corrupt_batch, sample_corruptions

__all__ = [
    "COMPATIBLE",
    "LOSSES",
    "OPTIMIZERS",
    "REGULARIZERS",
    "STRATEGIES",
    "NonFiniteGradientError",
    "compatible",
    "validation_evaluator",
    "FitResult",
    "OptimizerState",
    "PositiveIndex",
    "TraceRow",
    "TrainingConfig",
    "TrainingData",
    "batch_objective",
    "corrupt_batch",
    "fit",
    "fit_new",
    "init_optimizer",
    "loss_1vsall",
    "loss_bpr",
    "loss_cc",
    "loss_kvsall_bce",
    "loss_margin_ns",
    "loss_ns_bce",
    "loss_ph",
    "loss_pointwise",
    "loss_sce",
    "make_batch",
    "optimizer_step",
    "regularize",
    "sample_corruptions",
    "train_epoch",
]
