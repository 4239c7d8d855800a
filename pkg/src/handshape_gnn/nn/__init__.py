from .tensor import (
    ShapeError,
    batch_norm_train,
    Tensor,
    concat_cols,
    concat_rows,
    leaky_relu,
    log_sigmoid,
    matmul,
    segment_matmul,
    segment_mean,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    sqrt,
)
from .layers import BatchNorm, DegenerateBatchError, Linear, dropout
from .optim import AdamW, TrainingDivergenceError
from .gradcheck import GradientCheckError, grad_check
from .checkpoint import arrays_from_json, arrays_to_json, load_checkpoint, save_checkpoint

__all__ = [
    "AdamW",
    "BatchNorm",
    "DegenerateBatchError",
    "GradientCheckError",
    "Linear",
    "ShapeError",
    "Tensor",
    "TrainingDivergenceError",
    "arrays_from_json",
    "arrays_to_json",
    "batch_norm_train",
    "concat_cols",
    "concat_rows",
    "dropout",
    "grad_check",
    "leaky_relu",
    "load_checkpoint",
    "log_sigmoid",
    "matmul",
    "save_checkpoint",
    "segment_matmul",
    "segment_mean",
    "sigmoid",
    "softmax",
    "softmax_cross_entropy",
    "sqrt",
]
