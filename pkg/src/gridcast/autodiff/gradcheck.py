"""Finite-difference gradient verification."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, precision


Coords = Sequence[np.ndarray | None] | None


def numeric_grad(fn: Callable[..., Tensor], tensors: Sequence[Tensor], step: float = 1e-4,
                 coords: Coords = None) -> list[np.ndarray]:
    """Five-point central differences of ``fn(*tensors)`` in extended precision.

    Each coordinate is perturbed by multiples of ``step * max(1, |x|)``.
    ``coords`` optionally restricts each tensor to a set of flat indices; the
    other entries of the result are NaN. Tensors are restored afterwards.
    """
    out = []
    with precision(80):
        for j, t in enumerate(tensors):
            orig = t.data
            work = orig.astype(np.longdouble)
            idx = range(work.size) if coords is None or coords[j] is None else coords[j]
            g = np.full_like(work, np.nan) if coords is not None else np.zeros_like(work)
            flat = work.reshape(-1)
            gflat = g.reshape(-1)
            t.data = work
            try:
                for i in idx:
                    x0 = flat[i]
                    h = step * max(1.0, abs(x0))
                    f = []
                    for k in (2, 1, -1, -2):
                        flat[i] = x0 + k * h
                        f.append(np.longdouble(fn(*tensors).data))
                    flat[i] = x0
                    gflat[i] = (8 * (f[1] - f[2]) - (f[0] - f[3])) / (12 * h)
            finally:
                t.data = orig
            out.append(g)
    return out


def analytic_grad(fn: Callable[..., Tensor], tensors: Sequence[Tensor]) -> list[np.ndarray]:
    saved = [(t.requires_grad, t.grad) for t in tensors]
    for t in tensors:
        t.requires_grad = True
        t.grad = None
    try:
        with Tape() as tape:
            loss = fn(*tensors)
        tape.backward(loss)
        return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    finally:
        for t, (rg, g) in zip(tensors, saved):
            t.requires_grad = rg
            t.grad = g


def max_relative_error(analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray]) -> float:
    """Max of ``|a - n| / max(|a|, |n|, 1e-8)`` over coordinates where ``numeric`` is not NaN."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = np.asarray(a, dtype=np.float64)
        n = np.asarray(n, dtype=np.float64)
        keep = ~np.isnan(n)
        a, n = a[keep], n[keep]
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(n))):
            raise FloatingPointError("non-finite gradient encountered in grad_check")
        if a.size:
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def grad_check(fn: Callable[..., Tensor], point: Tensor | Sequence[Tensor], step: float = 1e-4,
               coords: Coords = None) -> float:
    """Max relative error between the tape gradient and the finite-difference oracle.

    The analytic side runs at the tensors' own precision; the numeric oracle
    runs in extended precision so that rounding in the oracle itself does not
    dominate on near-zero gradient components.
    """
    tensors = [point] if isinstance(point, Tensor) else list(point)
    return max_relative_error(analytic_grad(fn, tensors), numeric_grad(fn, tensors, step, coords))
