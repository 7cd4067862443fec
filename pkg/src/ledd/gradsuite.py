"""Finite-difference checks for every differentiable operator and the full network."""

from __future__ import annotations

import numpy as np

from .autodiff import (Tensor, TruncationBounds, add, conv2d, grad_check, joint_loss, linf_loss,
                       mse_loss, relu, truncate, truncated_l2_loss, upsample_nearest2x)
from .network import ModelConfig, build_model, refine_batch


def _tensor(rng, shape, dtype, name, scale=1.0):
    return Tensor((rng.standard_normal(shape) * scale).astype(dtype), requires_grad=True, name=name)


def _probe(rng, shape):
    """Fixed random weights that turn a tensor output into a scalar."""
    return rng.standard_normal(shape)


def _weighted_sum(out: Tensor, probe) -> Tensor:
    # squared distance to a fixed random target: gradient depends on every element
    return mse_loss(out, probe)


def operator_cases(dtype=np.float32, seed=0):
    """(name, f, tensors) triples ready for :func:`grad_check`."""
    rng = np.random.default_rng(seed)
    cases = []

    for stride, dilation in [(1, 1), (1, 2), (2, 1), (2, 2)]:
        x = _tensor(rng, (2, 3, 8, 8), dtype, "input")
        w = _tensor(rng, (4, 3, 3, 3), dtype, "weight", 0.3)
        b = _tensor(rng, (4,), dtype, "bias")
        target = rng.standard_normal((2, 4, 8 // stride, 8 // stride))
        cases.append((f"conv2d_s{stride}_d{dilation}",
                      lambda x=x, w=w, b=b, s=stride, d=dilation, t=target: mse_loss(conv2d(x, w, b, s, d), t),
                      [x, w, b]))
    x = _tensor(rng, (1, 4, 6, 6), dtype, "input")
    w = _tensor(rng, (2, 4, 1, 1), dtype, "weight")
    b = _tensor(rng, (2,), dtype, "bias")
    target = rng.standard_normal((1, 2, 3, 3))
    cases.append(("conv2d_1x1_s2", lambda: mse_loss(conv2d(x, w, b, 2), target), [x, w, b]))

    xr = _tensor(rng, (2, 3, 5, 5), dtype, "input")
    probe = _probe(rng, xr.shape)
    cases.append(("relu", lambda: _weighted_sum(relu(xr), probe), [xr]))

    xu = _tensor(rng, (2, 3, 4, 4), dtype, "input")
    probe_u = _probe(rng, (2, 3, 8, 8))
    cases.append(("upsample_nearest2x", lambda: _weighted_sum(upsample_nearest2x(xu), probe_u), [xu]))

    a = _tensor(rng, (2, 3, 4, 4), dtype, "a")
    bb = _tensor(rng, (2, 3, 4, 4), dtype, "b")
    probe_a = _probe(rng, a.shape)
    cases.append(("add", lambda: _weighted_sum(add(a, bb), probe_a), [a, bb]))

    # offsets in pixel levels: clearly inside, below or above [y - 12, y + 12]
    y = rng.integers(60, 196, (2, 1, 6, 6))
    bounds = TruncationBounds.from_pixels(y, 12, dtype=dtype)
    offset = rng.choice([-40.0, -3.0, 0.0, 3.0, 40.0], size=y.shape)
    xt = Tensor(((y + offset) / 255.0).astype(dtype), requires_grad=True, name="x_tilde")
    probe_t = _probe(rng, y.shape)
    cases.append(("truncate", lambda: _weighted_sum(truncate(xt, bounds), probe_t), [xt]))

    x_true = rng.uniform(0.1, 0.9, (2, 1, 6, 6))
    tau = 0.02
    xh = Tensor((x_true + rng.uniform(-0.1, 0.1, x_true.shape)).astype(dtype), requires_grad=True,
                name="x_hat")
    cases.append(("mse_loss", lambda: mse_loss(xh, x_true), [xh]))
    cases.append(("truncated_l2_loss", lambda: truncated_l2_loss(xh, x_true, tau), [xh]))
    cases.append(("linf_loss", lambda: linf_loss(xh, x_true, tau), [xh]))
    cases.append(("joint_loss", lambda: joint_loss(xh, x_true, tau, 0.2), [xh]))
    return cases


def network_case(dtype=np.float32, seed=0, cfg: ModelConfig | None = None):
    """Full joint loss of a desk-width model on an 8x8 input, every weight random."""
    rng = np.random.default_rng(seed)
    model = build_model(cfg or ModelConfig.desk(), seed)
    for p in model.parameters():
        fan_in = int(np.prod(p.shape[1:])) if p.data.ndim > 1 else 16
        p.data = (rng.standard_normal(p.shape) * 0.5 / np.sqrt(fan_in)).astype(dtype)
    # keep the pre-truncation output within reach of the bounds
    model.params["tail.weight"].data *= dtype(0.02)
    model.params["tail.bias"].data[:] = 0
    tau = 4
    x = rng.integers(40, 216, (1, 1, 8, 8))
    y = x + rng.integers(-tau, tau + 1, x.shape)
    x_norm = x / 255.0

    def f():
        return joint_loss(refine_batch(model, y, tau), x_norm, tau / 255.0, 0.2)

    # refine_batch builds float32 inputs; match the requested precision
    if dtype == np.float64:
        def f():
            from .autodiff import truncate as _truncate
            yt = Tensor(y / 255.0, dtype=np.float64)
            bounds = TruncationBounds.from_pixels(y, tau, dtype=np.float64)
            return joint_loss(_truncate(model(yt), bounds), x_norm, tau / 255.0, 0.2)
    return model, f


def run_suite(dtype=np.float32, seed=0, network_coords=4):
    """Yield (name, GradCheckReport) for every operator and the full network."""
    for name, f, tensors in operator_cases(dtype, seed):
        yield name, grad_check(f, tensors)
    model, f = network_case(dtype, seed)
    yield "network_joint_loss", grad_check(f, model.parameters(), max_coords=network_coords, seed=seed)
