"""Minimal numpy tensor engine with reverse-mode gradients."""
from .tensor import DTYPE, DimensionError, Tape, Tensor
from .ops import (
    adversarial_losses,
    concat_channels,
    conv2d,
    conv_transpose2d,
    expand_planes,
    global_avg_pool,
    linear,
    mse_loss,
    relu,
    sigmoid,
)
from .optim import AdamState, adam_step
from .gradcheck import finite_diff_check, param_grad_check

__all__ = [
    "DTYPE", "DimensionError", "Tape", "Tensor",
    "adversarial_losses", "concat_channels", "conv2d", "conv_transpose2d", "expand_planes",
    "global_avg_pool", "linear", "mse_loss", "relu", "sigmoid",
    "AdamState", "adam_step", "finite_diff_check", "param_grad_check",
]
