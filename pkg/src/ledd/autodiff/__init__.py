"""Minimal reverse-mode autodiff for the refinement network."""

from .gradcheck import GradCheckReport, grad_check
from .losses import (DEFAULT_LAMBDA, LossDomainError, joint_loss, linf_loss, mse_loss,
                     truncated_l2_loss)
from .ops import TruncationBounds, add, conv2d, relu, scale, truncate, upsample_nearest2x
from .tensor import Tensor, no_grad, record_regions

__all__ = [
    "Tensor", "no_grad", "record_regions", "conv2d", "relu", "upsample_nearest2x", "add",
    "scale", "truncate", "TruncationBounds", "mse_loss", "truncated_l2_loss", "linf_loss",
    "joint_loss", "DEFAULT_LAMBDA", "LossDomainError", "grad_check", "GradCheckReport",
]
