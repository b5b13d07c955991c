"""Shared neural-forecaster plumbing: parameter registry, init, prediction, checkpoints."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np

from ..autodiff import Tensor, checkpoint, get_dtype
from ..errors import ModelError


class NeuralForecaster:
    """Maps a context batch ``[B, L, C]`` to a forecast ``[B, H, C]``.

    Subclasses create parameters with :meth:`_param` in ``__init__`` and
    implement :meth:`forward`. Inputs are plain arrays; only parameters carry
    gradients.
    """

    kind = "neural"
    univariate = False

    def __init__(self, input_len: int, horizon: int, n_channels: int, seed: int = 0):
        if input_len < 1 or horizon < 1 or n_channels < 1:
            raise ModelError("input_len, horizon and n_channels must be positive")
        self.input_len = input_len
        self.horizon = horizon
        self.n_channels = n_channels
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._params: dict[str, Tensor] = {}

    # -- parameters ---------------------------------------------------------------
    def _param(self, name: str, shape: tuple[int, ...], fan_in: int | None = None, init: str = "uniform") -> Tensor:
        if init == "uniform":
            bound = 1.0 / np.sqrt(fan_in if fan_in else shape[0])
            data = self._rng.uniform(-bound, bound, size=shape)
        elif init == "ones":
            data = np.ones(shape)
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "normal":
            data = self._rng.normal(0.0, 0.02, size=shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        t = Tensor(data, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def parameters(self) -> dict[str, Tensor]:
        return self._params

    def n_parameters(self) -> int:
        return sum(p.size for p in self._params.values())

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def architecture(self) -> dict[str, Any]:
        """Hyperparameters that must agree for parameters to be transferable."""
        return {"kind": self.kind, "input_len": self.input_len, "horizon": self.horizon,
                "n_channels": self.n_channels}

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self._params):
            raise ModelError(f"parameter names differ: {sorted(set(state) ^ set(self._params))}")
        for k, p in self._params.items():
            v = np.asarray(state[k])
            if v.shape != p.shape:
                raise ModelError(f"parameter {k} has shape {v.shape}, expected {p.shape}")
            p.data = v.astype(p.data.dtype, copy=True)

    def save(self, path: str | Path) -> None:
        checkpoint.save(path, self.state_dict())

    def load(self, path: str | Path) -> None:
        self.load_state_dict(checkpoint.load(path))

    # -- inference ----------------------------------------------------------------
    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=get_dtype())
        if x.ndim != 3 or x.shape[1] != self.input_len:
            raise ModelError(f"{self.kind} expects [B, {self.input_len}, C] input, got {x.shape}")
        return x

    def forward(self, x: np.ndarray) -> Tensor:
        raise NotImplementedError

    def predict(self, context: np.ndarray) -> np.ndarray:
        """Forecast for one ``[L, C]`` context or a ``[B, L, C]`` batch (no tape)."""
        ctx = np.asarray(context)
        single = ctx.ndim == 2
        out = self.forward(ctx[None] if single else ctx).data
        return out[0] if single else out
