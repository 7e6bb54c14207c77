from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, finite_diff_check
from .optim import Adam, AdamState, ExponentialSchedule, HalvingSchedule, adam_step, make_schedule
from .tensor import (
    ShapeError,
    Tensor,
    add,
    affine,
    concat,
    conv2d,
    default_dtype,
    get_default_dtype,
    graph_conv,
    kaiming_uniform,
    l1_loss,
    log_softmax,
    mean_all,
    relu,
    reshape,
    scale,
    softmax,
    softmax_cross_entropy,
    sum_all,
    window,
)

__all__ = [
    "Adam", "AdamState", "CheckpointError", "ExponentialSchedule", "GradCheckReport",
    "HalvingSchedule", "ShapeError", "Tensor", "adam_step", "add", "affine", "concat",
    "conv2d", "default_dtype", "finite_diff_check", "get_default_dtype", "graph_conv", "kaiming_uniform", "l1_loss", "load_checkpoint",
    "log_softmax", "make_schedule", "mean_all", "relu", "reshape", "save_checkpoint",
    "scale", "softmax", "softmax_cross_entropy", "sum_all", "window",
]

