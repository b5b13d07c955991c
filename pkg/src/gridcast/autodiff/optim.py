"""First-order optimizers operating in place on named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def _grads_of(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray] | None) -> dict[str, np.ndarray]:
    out = {}
    for name, p in params.items():
        g = grads.get(name) if grads is not None else p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        out[name] = g
    return out


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray] | None, state: AdamState) -> AdamState:
    """One bias-corrected Adam update. ``grads=None`` reads each parameter's ``.grad``."""
    g_all = _grads_of(params, grads)
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = g_all[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        elif m.shape != p.shape:
            raise ShapeError(f"optimizer state for {name} has shape {m.shape}, parameter {p.shape}")
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = (p.data - update).astype(p.data.dtype, copy=False)
    return state


def sgd_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray] | None, lr: float) -> None:
    for name, g in _grads_of(params, grads).items():
        p = params[name]
        p.data = (p.data - lr * g).astype(p.data.dtype, copy=False)
