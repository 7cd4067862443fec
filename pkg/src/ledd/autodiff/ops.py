"""Differentiable operators on (batch, channels, height, width) tensors.

Convolution results live in channels-last buffers exposed through an NCHW
view, so chained convolutions reach the im2col GEMM without a layout copy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, log_region


def _nhwc(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a.transpose(0, 2, 3, 1))


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           dilation: int = 1) -> Tensor:
    """Zero-padded cross-correlation with an odd square kernel.

    Stride 1 keeps the spatial size; stride 2 halves it and needs even input.
    """
    if x.data.ndim != 4:
        raise ValueError(f"conv2d expects a 4-D input, got shape {x.shape}")
    n, c, h, w = x.shape
    out_ch, in_ch, k, k2 = weight.shape
    if in_ch != c or k != k2:
        raise ValueError(f"weight {weight.shape} does not fit input {x.shape}")
    if k % 2 == 0:
        raise ValueError("kernel size must be odd")
    if stride not in (1, 2) or dilation not in (1, 2):
        raise ValueError("stride and dilation must each be 1 or 2")
    if stride == 2 and (h % 2 or w % 2):
        raise ValueError(f"stride-2 convolution needs even spatial size, got {h}x{w}")
    if bias is not None and bias.shape != (out_ch,):
        raise ValueError(f"bias shape {bias.shape} does not match {out_ch} outputs")

    pad = dilation * (k - 1) // 2
    span = dilation * (k - 1) + 1
    xp = np.pad(_nhwc(x.data), ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    win = sliding_window_view(xp, (span, span), axis=(1, 2))
    win = win[:, ::stride, ::stride, :, ::dilation, ::dilation]
    ho, wo = win.shape[1], win.shape[2]
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * ho * wo, k * k * c)
    wmat = weight.data.transpose(2, 3, 1, 0).reshape(k * k * c, out_ch)
    out = cols @ wmat
    if bias is not None:
        out += bias.data
    out = out.reshape(n, ho, wo, out_ch).transpose(0, 3, 1, 2)

    def backward(g):
        gl = _nhwc(g).reshape(-1, out_ch)
        if weight.requires_grad:
            dw = cols.T @ gl
            weight.accumulate(dw.reshape(k, k, c, out_ch).transpose(3, 2, 0, 1))
        if bias is not None and bias.requires_grad:
            bias.accumulate(gl.sum(axis=0))
        if x.requires_grad:
            # channel-major scatter: each tap's slab is contiguous along width
            dcols = (wmat @ gl.T).reshape(k, k, c, n, ho, wo)
            dxp = np.zeros((c, n) + xp.shape[1:3], dtype=dcols.dtype)
            for i in range(k):
                for j in range(k):
                    r0, c0 = i * dilation, j * dilation
                    dxp[:, :, r0:r0 + stride * (ho - 1) + 1:stride,
                        c0:c0 + stride * (wo - 1) + 1:stride] += dcols[i, j]
            x.accumulate(dxp[:, :, pad:pad + h, pad:pad + w].transpose(1, 0, 2, 3))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    log_region(mask)

    def backward(g):
        x.accumulate(g * mask)

    return Tensor.from_op(np.maximum(x.data, 0), (x,), backward)


def upsample_nearest2x(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    up = np.repeat(np.repeat(_nhwc(x.data), 2, axis=1), 2, axis=2)

    def backward(g):
        gl = _nhwc(g).reshape(n, h, 2, w, 2, c).sum(axis=(2, 4))
        x.accumulate(gl.transpose(0, 3, 1, 2))

    return Tensor.from_op(up.transpose(0, 3, 1, 2), (x,), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add: shapes {a.shape} and {b.shape} differ")

    def backward(g):
        a.accumulate(g)
        b.accumulate(g)

    return Tensor.from_op(a.data + b.data, (a, b), backward)


def scale(a: Tensor, factor: float) -> Tensor:
    def backward(g):
        a.accumulate(g * factor)

    return Tensor.from_op(a.data * factor, (a,), backward)


@dataclass(frozen=True)
class TruncationBounds:
    """Per-pixel interval [lo, hi] the refined output is clamped into."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def from_pixels(cls, y, tau, dtype=np.float32) -> "TruncationBounds":
        """Bounds ``(y - tau)/255`` and ``(y + tau)/255`` from integer samples.

        ``y`` is an integer array shaped like the network output; ``tau`` an
        int or an array broadcastable against it (one value per sample).
        """
        y = np.asarray(y, dtype=np.float64)
        t = np.asarray(tau, dtype=np.float64)
        return cls(((y - t) / 255.0).astype(dtype), ((y + t) / 255.0).astype(dtype))


def truncate(x_tilde: Tensor, bounds: TruncationBounds) -> Tensor:
    """Clamp into [lo, hi]; gradient 1 on the closed interval, 0 outside."""
    lo, hi = bounds.lo, bounds.hi
    if lo.shape != x_tilde.shape or hi.shape != x_tilde.shape:
        raise ValueError(f"bounds {lo.shape} do not match input {x_tilde.shape}")
    below = x_tilde.data < lo
    above = x_tilde.data > hi
    log_region(above.astype(np.int8) - below.astype(np.int8))
    inside = ~(below | above)
    out = np.where(below, lo, np.where(above, hi, x_tilde.data)).astype(x_tilde.dtype, copy=False)

    def backward(g):
        x_tilde.accumulate(g * inside)

    return Tensor.from_op(out, (x_tilde,), backward)
