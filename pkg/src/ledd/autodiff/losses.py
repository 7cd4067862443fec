"""Pixel losses on normalized images.

Every loss averages over all elements and reduces in float64; ``tau`` is
the normalized tolerance (pixels/255), a scalar or one value per sample
broadcastable as (N, 1, 1, 1).
"""

from __future__ import annotations

import numpy as np

from .ops import add, scale
from .tensor import Tensor, log_region

LOG_GUARD = 1e-6
DEFAULT_LAMBDA = 0.2


class LossDomainError(FloatingPointError):
    """The log argument of the l-infinity loss fell to the guard value."""


def _diff(x_hat: Tensor, x) -> np.ndarray:
    x = np.asarray(getattr(x, "data", x))
    if x.shape != x_hat.shape:
        raise ValueError(f"loss: shapes {x_hat.shape} and {x.shape} differ")
    return x_hat.data.astype(np.float64) - x


def _scalar(value, x_hat, grad):
    def backward(g):
        x_hat.accumulate(grad * float(g))

    return Tensor.from_op(np.asarray(value, dtype=np.float64), (x_hat,), backward)


def mse_loss(x_hat: Tensor, x) -> Tensor:
    d = _diff(x_hat, x)
    return _scalar(np.mean(d * d), x_hat, 2.0 * d / d.size)


def truncated_l2_loss(x_hat: Tensor, x, tau) -> Tensor:
    d = _diff(x_hat, x)
    t = np.asarray(tau, dtype=np.float64)
    outside = d * d > t * t
    log_region(outside)
    value = np.mean(np.where(outside, d * d - t * t, 0.0))
    return _scalar(value, x_hat, np.where(outside, 2.0 * d, 0.0) / d.size)


def linf_loss(x_hat: Tensor, x, tau) -> Tensor:
    """-mean(log(1 - max(|d| - tau, 0))); zero while every |d| <= tau."""
    d = _diff(x_hat, x)
    excess = np.abs(d) - np.asarray(tau, dtype=np.float64)
    outside = excess > 0
    log_region(outside)
    arg = 1.0 - np.where(outside, excess, 0.0)
    if arg.min() <= LOG_GUARD:
        raise LossDomainError(f"l-inf loss log argument {arg.min():.3g} <= {LOG_GUARD}")
    value = -np.mean(np.log(arg)) + 0.0  # no negative zero
    grad = np.where(outside, np.sign(d) / arg, 0.0) / d.size
    return _scalar(value, x_hat, grad)


def joint_loss(x_hat: Tensor, x, tau, lam: float = DEFAULT_LAMBDA) -> Tensor:
    """``mse + lam * linf``."""
    return add(mse_loss(x_hat, x), scale(linf_loss(x_hat, x, tau), lam))
