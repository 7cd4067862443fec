"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import no_grad, record_regions

DEFAULT_EPS = {np.dtype(np.float32): 1e-2, np.dtype(np.float64): 1e-3}
DEFAULT_TOL = {np.dtype(np.float32): 1e-3, np.dtype(np.float64): 1e-6}


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    checked: int
    excluded: int
    per_tensor: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_error <= self.tolerance


def _same(a, b):
    return len(a) == len(b) and all(np.array_equal(p, q) for p, q in zip(a, b))


def grad_check(f, tensors, epsilon=None, tolerance=None, max_coords=None, seed=0,
               floor=None) -> GradCheckReport:
    """Compare the backward pass of ``f`` with fourth-order central differences.

    ``f()`` rebuilds a scalar Tensor from the current values of ``tensors``,
    whose ``data`` is perturbed in place one coordinate at a time. A
    coordinate is excluded as kink-adjacent when any piecewise op takes a
    different branch anywhere in [x - 2*eps, x + 2*eps]. At most
    ``max_coords`` coordinates per tensor are sampled.

    Relative error per coordinate is |a - n| / max(|a|, |n|, floor); the
    default floor is the larger of ``eps`` times the largest analytic
    gradient magnitude and the central-difference roundoff level divided by
    the tolerance, so coordinates whose gradient sits below what the
    difference quotient can resolve are judged in absolute terms.
    """
    dtype = tensors[0].data.dtype
    eps = DEFAULT_EPS[dtype] if epsilon is None else epsilon
    tol = DEFAULT_TOL[dtype] if tolerance is None else tolerance
    rng = np.random.default_rng(seed)

    for t in tensors:
        t.grad = None
        t.requires_grad = True
    with record_regions() as base_regions:
        out = f()
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    if floor is None:
        roundoff = 2 * np.finfo(dtype).eps * abs(float(out.data)) / eps
        floor = max(eps * max(float(np.abs(a).max()) for a in analytic), roundoff / tol)
    floor = max(floor, np.finfo(np.float64).tiny)

    def evaluate(t, idx, value):
        old = t.data[idx]
        t.data[idx] = value
        try:
            with no_grad(), record_regions() as regions:
                v = float(f().data)
        finally:
            t.data[idx] = old
        return v, regions

    worst, checked, excluded, per_tensor = 0.0, 0, 0, {}
    for ti, t in enumerate(tensors):
        size = t.data.size
        flat = np.arange(size)
        if max_coords is not None and size > max_coords:
            flat = np.sort(rng.choice(size, max_coords, replace=False))
        t_worst = 0.0
        for fi in flat:
            idx = np.unravel_index(fi, t.data.shape)
            x0 = float(t.data[idx])
            xp = t.data.dtype.type(x0 + eps)
            xm = t.data.dtype.type(x0 - eps)
            xp2 = t.data.dtype.type(x0 + 2 * eps)
            xm2 = t.data.dtype.type(x0 - 2 * eps)
            fp, rp = evaluate(t, idx, xp)
            fm, rm = evaluate(t, idx, xm)
            fp2, rp2 = evaluate(t, idx, xp2)
            fm2, rm2 = evaluate(t, idx, xm2)
            if not all(_same(base_regions, r) for r in (rp, rm, rp2, rm2)):
                excluded += 1
                continue
            # five-point stencil on the actually representable offsets
            d1 = (fp - fm) / (float(xp) - float(xm))
            d2 = (fp2 - fm2) / (float(xp2) - float(xm2))
            numeric = (4 * d1 - d2) / 3
            a = float(analytic[ti][idx])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            t_worst = max(t_worst, rel)
            checked += 1
        per_tensor[t.name or f"tensor{ti}"] = t_worst
        worst = max(worst, t_worst)
    return GradCheckReport(worst, tol, checked, excluded, per_tensor)
