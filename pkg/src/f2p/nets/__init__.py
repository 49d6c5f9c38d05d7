"""Small numpy convolutional predictors, their loss and training loop."""

from .loss import HeadSpec, LayoutMismatch, LossSpec, Norm, loss_and_grad, multipart_loss, weighted_total
from .model import (
    AGGREGATE,
    CheckpointError,
    ConvSpec,
    InputKind,
    InputSizeError,
    Mode,
    NetSpec,
    PredictorModel,
    SpecError,
    buffer_names,
    build_model,
    default_net_spec,
    forward,
    init_model,
    load_checkpoint,
    predict,
    save_checkpoint,
    scope_heads,
    trainable_param_names,
)
from .train import TrainConfig, TrainingError, backward_check, train, write_history

__all__ = [
    "AGGREGATE",
    "CheckpointError",
    "ConvSpec",
    "HeadSpec",
    "InputKind",
    "InputSizeError",
    "LayoutMismatch",
    "LossSpec",
    "Mode",
    "NetSpec",
    "Norm",
    "PredictorModel",
    "SpecError",
    "TrainConfig",
    "TrainingError",
    "backward_check",
    "buffer_names",
    "build_model",
    "default_net_spec",
    "forward",
    "init_model",
    "load_checkpoint",
    "loss_and_grad",
    "multipart_loss",
    "predict",
    "save_checkpoint",
    "scope_heads",
    "train",
    "trainable_param_names",
    "weighted_total",
    "write_history",
]
