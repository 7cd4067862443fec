import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ledd.autodiff import (LossDomainError, Tensor, TruncationBounds, add, conv2d, grad_check,
                           joint_loss, linf_loss, mse_loss, no_grad, relu, scale, truncate,
                           truncated_l2_loss, upsample_nearest2x)
from ledd.gradsuite import network_case, operator_cases


def t(values, grad=True, dtype=np.float32):
    return Tensor(np.asarray(values, dtype=dtype), requires_grad=grad)


# --- forward values ---------------------------------------------------------

def test_conv_identity_1x1():
    x = t(np.random.default_rng(0).standard_normal((2, 3, 5, 4)))
    w = np.zeros((3, 3, 1, 1), np.float32)
    w[[0, 1, 2], [0, 1, 2]] = 1
    out = conv2d(x, t(w), t(np.zeros(3)))
    assert np.array_equal(out.data, x.data)


def test_conv_all_ones_zero_padding():
    x = t(np.ones((1, 1, 5, 5)))
    out = conv2d(x, t(np.ones((1, 1, 3, 3))))
    assert out.data[0, 0, 2, 2] == 9 and out.data[0, 0, 0, 0] == 4 and out.data[0, 0, 0, 2] == 6


def test_conv_dilation_footprint():
    x = t(np.ones((1, 1, 7, 7)))
    out = conv2d(x, t(np.ones((1, 1, 3, 3))), dilation=2)
    assert out.data[0, 0, 0, 0] == 4 and out.data[0, 0, 3, 3] == 9 and out.data[0, 0, 1, 1] == 4
    # a single impulse spreads over a 5x5 footprint with holes
    x = np.zeros((1, 1, 7, 7), np.float32)
    x[0, 0, 3, 3] = 1
    out = conv2d(t(x), t(np.ones((1, 1, 3, 3))), dilation=2).data[0, 0]
    assert out.sum() == 9 and out[1, 1] == 1 and out[2, 2] == 0 and out[3, 5] == 1


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 6, 6))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    for stride, dil in [(1, 1), (1, 2), (2, 1), (2, 2)]:
        got = conv2d(t(x, dtype=np.float64), t(w, dtype=np.float64), t(b, dtype=np.float64),
                     stride, dil).data
        pad = dil
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        ho = -(-6 // stride)
        ref = np.zeros((2, 4, ho, ho))
        for i in range(ho):
            for j in range(ho):
                for a in range(3):
                    for c in range(3):
                        ref[:, :, i, j] += np.einsum(
                            "nc,oc->no", xp[:, :, i * stride + a * dil, j * stride + c * dil], w[:, :, a, c])
        ref += b[None, :, None, None]
        assert np.allclose(got, ref, atol=1e-12)


@pytest.mark.parametrize("size, stride, out", [(8, 1, 8), (8, 2, 4), (6, 2, 3)])
def test_conv_output_size(size, stride, out):
    y = conv2d(t(np.zeros((1, 1, size, size))), t(np.zeros((2, 1, 3, 3))), stride=stride)
    assert y.shape == (1, 2, out, out)


@pytest.mark.parametrize("kw", [dict(stride=3), dict(dilation=3)])
def test_conv_rejects_unsupported(kw):
    with pytest.raises(ValueError):
        conv2d(t(np.zeros((1, 1, 4, 4))), t(np.zeros((1, 1, 3, 3))), **kw)


def test_conv_rejects_even_kernel_and_channel_mismatch():
    with pytest.raises(ValueError):
        conv2d(t(np.zeros((1, 1, 4, 4))), t(np.zeros((1, 1, 2, 2))))
    with pytest.raises(ValueError):
        conv2d(t(np.zeros((1, 2, 4, 4))), t(np.zeros((1, 1, 3, 3))))


def test_relu_forward_backward():
    x = t([-1.0, 0.0, 2.0])
    y = relu(x)
    assert list(y.data) == [0, 0, 2]
    y.backward(np.ones(3, np.float32))
    assert list(x.grad) == [0, 0, 1]


def test_upsample_values_and_grad():
    x = t(np.full((1, 1, 1, 1), 3.0))
    y = upsample_nearest2x(x)
    assert y.shape == (1, 1, 2, 2) and np.all(y.data == 3)
    x = t(np.zeros((1, 2, 3, 4)))
    y = upsample_nearest2x(x)
    assert y.shape == (1, 2, 6, 8)
    g = np.arange(96, dtype=np.float32).reshape(1, 2, 6, 8)
    y.backward(g)
    assert x.grad[0, 0, 0, 0] == g[0, 0, :2, :2].sum()


def test_add_duplicates_grad():
    a, b = t(np.ones((2, 2))), t(np.ones((2, 2)))
    add(a, b).backward(np.full((2, 2), 3, np.float32))
    assert np.all(a.grad == 3) and np.all(b.grad == 3)


def test_shared_input_accumulates():
    a = t([1.0, 2.0])
    add(a, a).backward(np.ones(2, np.float32))
    assert list(a.grad) == [2, 2]
    b = t([1.0, 2.0])
    s = scale(b, 3.0)
    add(s, b).backward(np.ones(2, np.float32))
    assert list(b.grad) == [4, 4]


def test_no_grad_builds_no_graph():
    a = t([1.0])
    with no_grad():
        out = add(a, a)
    assert not out.requires_grad


def test_truncate_cases():
    y = np.array([[[[8]]]])
    b = TruncationBounds.from_pixels(y, 1)
    assert math.isclose(b.lo.item(), 7 / 255, rel_tol=1e-6) and math.isclose(b.hi.item(), 9 / 255, rel_tol=1e-6)
    for value, expect, grad in [(8 / 255, 8 / 255, 1), (9 / 255 + 0.1, 9 / 255, 0), (0.0, 7 / 255, 0),
                                (9 / 255, 9 / 255, 1)]:
        x = t(np.full((1, 1, 1, 1), value))
        out = truncate(x, b)
        out.backward(np.ones((1, 1, 1, 1), np.float32))
        assert math.isclose(out.data.item(), expect, rel_tol=1e-6)
        assert x.grad.item() == grad


@given(st.lists(st.floats(-2, 2, width=32), min_size=1, max_size=30), st.integers(0, 8),
       st.integers(0, 255))
@settings(max_examples=100, deadline=None)
def test_truncate_stays_in_bounds(values, tau, center):
    y = np.full((1, 1, 1, len(values)), center)
    b = TruncationBounds.from_pixels(y, tau)
    out = truncate(t(np.array(values).reshape(y.shape)), b).data
    assert np.all(out >= b.lo) and np.all(out <= b.hi)
    assert np.allclose(b.hi - b.lo, 2 * tau / 255, atol=1e-6)


# --- losses -----------------------------------------------------------------

def test_mse_values():
    x = np.zeros((1, 1, 1, 1))
    assert mse_loss(t(x), x).item() == 0
    assert math.isclose(mse_loss(t(np.full((1, 1, 1, 1), 0.5)), x).item(), 0.25)


def test_mse_gradient_formula():
    rng = np.random.default_rng(0)
    xh, x = rng.random((1, 1, 3, 4)), rng.random((1, 1, 3, 4))
    a = t(xh, dtype=np.float64)
    mse_loss(a, x).backward()
    assert np.allclose(a.grad, 2 * (xh - x) / 12)


def test_truncated_l2_values():
    x = np.zeros((1, 1, 1, 1))
    assert truncated_l2_loss(t(np.full((1, 1, 1, 1), 0.05)), x, 0.1).item() == 0
    assert math.isclose(truncated_l2_loss(t(np.full((1, 1, 1, 1), 0.3), dtype=np.float64), x, 0.1).item(),
                        0.08, abs_tol=1e-12)


def test_linf_values():
    x = np.zeros((1, 1, 1, 1))
    tau = 0.02
    assert linf_loss(t(np.full((1, 1, 1, 1), 0.02), dtype=np.float64), x, tau).item() == 0
    v = linf_loss(t(np.full((1, 1, 1, 1), 0.12), dtype=np.float64), x, tau).item()
    assert abs(v - 0.105361) <= 1e-6
    assert abs(v + math.log(0.9)) <= 1e-12


def test_linf_steeper_than_truncated_l2():
    x = np.zeros((1, 1, 1, 1))
    tau = 0.02
    for excess in np.linspace(1e-4, 0.5, 200):
        xh = t(np.full((1, 1, 1, 1), tau + excess), dtype=np.float64)
        assert linf_loss(xh, x, tau).item() > truncated_l2_loss(xh, x, tau).item()


@given(st.lists(st.integers(-512, 512), min_size=1, max_size=20), st.integers(0, 100))
@settings(max_examples=100, deadline=None)
def test_linf_zero_iff_within_tau(steps, tau_steps):
    # dyadic grid: any excess is at least 1/1024, far above log1p underflow
    d = np.array(steps, dtype=np.float64).reshape(1, 1, 1, -1) / 1024
    tau = tau_steps / 1024
    v = linf_loss(t(d, dtype=np.float64), np.zeros_like(d), tau).item()
    assert (v == 0) == bool(np.all(np.abs(d) <= tau))


@given(st.floats(0.0, 0.05), st.floats(0.001, 0.4), st.floats(0.001, 0.4))
@settings(max_examples=100, deadline=None)
def test_linf_monotone_beyond_tau(tau, e1, e2):
    lo, hi = sorted([e1, e2])
    x = np.zeros((1, 1, 1, 2))

    def loss(e):
        return linf_loss(t([[[[tau + e, -(tau + 0.01)]]]], dtype=np.float64), x, tau).item()

    assert loss(lo) <= loss(hi)
    if hi > lo + 1e-9:
        assert loss(lo) < loss(hi)


def test_linf_guard():
    x = np.zeros((1, 1, 1, 1))
    with pytest.raises(LossDomainError):
        linf_loss(t(np.full((1, 1, 1, 1), 1.5)), x, 0.0)


def test_joint_loss_components():
    rng = np.random.default_rng(2)
    x = rng.random((1, 1, 4, 4))
    xh = x + rng.uniform(-0.05, 0.05, x.shape)
    m = mse_loss(t(xh, dtype=np.float64), x).item()
    assert joint_loss(t(xh, dtype=np.float64), x, 0.02, 0.0).item() == m
    assert joint_loss(t(xh, dtype=np.float64), x, 0.1, 0.2).item() == m
    expected = m + 0.2 * linf_loss(t(xh, dtype=np.float64), x, 0.02).item()
    assert math.isclose(joint_loss(t(xh, dtype=np.float64), x, 0.02).item(), expected, rel_tol=1e-12)


def test_joint_gradient_is_sum_of_parts():
    rng = np.random.default_rng(3)
    x = rng.random((1, 1, 4, 4))
    xh = x + rng.uniform(-0.05, 0.05, x.shape)
    grads = []
    for fn in (lambda a: joint_loss(a, x, 0.02, 0.2), lambda a: mse_loss(a, x),
               lambda a: scale(linf_loss(a, x, 0.02), 0.2)):
        a = t(xh, dtype=np.float64)
        fn(a).backward()
        grads.append(a.grad)
    assert np.allclose(grads[0], grads[1] + grads[2], rtol=1e-12, atol=1e-15)


def test_loss_shape_mismatch():
    with pytest.raises(ValueError):
        mse_loss(t(np.zeros((1, 1, 2, 2))), np.zeros((1, 1, 2, 3)))


def test_per_sample_tau_broadcast():
    x = np.zeros((2, 1, 1, 1))
    xh = t(np.array([0.1, 0.1]).reshape(2, 1, 1, 1), dtype=np.float64)
    tau = np.array([0.2, 0.0]).reshape(2, 1, 1, 1)
    assert math.isclose(truncated_l2_loss(xh, x, tau).item(), 0.01 / 2)


def test_forward_is_deterministic():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
    w = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
    a = conv2d(t(x), t(w), dilation=2).data
    b = conv2d(t(x), t(w), dilation=2).data
    assert np.array_equal(a, b)


# --- gradient checks --------------------------------------------------------

def _case_ids(cases):
    return [c[0] for c in cases]


_CASES32 = operator_cases(np.float32)
_CASES64 = operator_cases(np.float64)


@pytest.mark.parametrize("name, f, tensors", _CASES32, ids=_case_ids(_CASES32))
def test_operator_gradients_float32(name, f, tensors):
    rep = grad_check(f, tensors)
    assert rep.passed, (name, rep)
    assert rep.tolerance == 1e-3


@pytest.mark.parametrize("name, f, tensors", _CASES64, ids=_case_ids(_CASES64))
def test_operator_gradients_float64(name, f, tensors):
    rep = grad_check(f, tensors)
    assert rep.passed, (name, rep)
    assert rep.tolerance == 1e-6


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_network_gradient(dtype):
    model, f = network_case(dtype)
    rep = grad_check(f, model.parameters(), max_coords=3)
    assert rep.passed, rep


def test_quadratic_float64():
    a = t(np.array([0.3, -1.2, 2.0]), dtype=np.float64)
    rep = grad_check(lambda: mse_loss(a, np.zeros(3)), [a])
    assert rep.passed and rep.max_rel_error <= 1e-6


def test_wrong_backward_is_caught():
    a = t(np.array([0.3, -1.2, 2.0]), dtype=np.float64)

    def broken_square(x):
        def backward(g):
            x.accumulate(g * x.data)  # should be 2 * x
        return Tensor.from_op(x.data * x.data, (x,), backward)

    def f():
        return mse_loss(broken_square(a), np.zeros(3))

    rep = grad_check(f, [a])
    assert not rep.passed and rep.max_rel_error > 1e-1


def test_kink_coordinates_excluded():
    a = t(np.array([1e-4, 0.5, -0.5]), dtype=np.float64)
    rep = grad_check(lambda: mse_loss(relu(a), np.full(3, -1.0)), [a])
    assert rep.excluded == 1 and rep.checked == 2 and rep.passed


def test_grad_shape_matches_data():
    rng = np.random.default_rng(0)
    x = t(rng.standard_normal((1, 2, 4, 4)))
    w = t(rng.standard_normal((3, 2, 3, 3)))
    mse_loss(relu(conv2d(x, w, stride=2)), np.zeros((1, 3, 2, 2))).backward()
    assert x.grad.shape == x.shape and w.grad.shape == w.shape
