"""Linear direct multi-step forecasters: NLinear and DLinear (weights shared across channels)."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..autodiff import Tensor, add, matmul, transpose
from ..errors import ModelError
from .base import NeuralForecaster


def series_decompose(x, kernel_size: int = 25) -> tuple[np.ndarray, np.ndarray]:
    """Split ``x`` into a centred moving-average trend and the seasonal remainder.

    Works along the time axis: axis 0 for ``[L]`` and ``[L, C]`` input, axis 1
    for ``[B, L, C]`` batches. Edges are padded by replicating the first/last
    value. The average is taken relative to each window's centre value, so a
    constant window yields its value exactly.
    """
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ModelError(f"kernel_size must be odd and >= 1, got {kernel_size}")
    x = np.asarray(x)
    if x.ndim not in (1, 2, 3):
        raise ModelError(f"expected [L], [L, C] or [B, L, C] input, got shape {x.shape}")
    axis = 1 if x.ndim == 3 else 0
    if x.shape[axis] < 1:
        raise ModelError("series must have at least one time step")
    half = (kernel_size - 1) // 2
    pad = [(0, 0)] * x.ndim
    pad[axis] = (half, half)
    padded = np.pad(x, pad, mode="edge")
    windows = sliding_window_view(padded, kernel_size, axis=axis)  # window axis last
    centre = np.expand_dims(x, -1)
    trend = x + (windows - centre).mean(axis=-1)
    return trend, x - trend


def _per_channel_linear(x: np.ndarray | Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Apply an ``L -> H`` map to every channel of ``[B, L, C]``; returns ``[B, H, C]``."""
    xt = transpose(x if isinstance(x, Tensor) else Tensor(x), (0, 2, 1))
    return transpose(add(matmul(xt, weight), bias), (0, 2, 1))


class NLinear(NeuralForecaster):
    """Subtract the last context value, apply one linear map over time, add the value back."""

    kind = "nlinear"

    def __init__(self, input_len: int = 96, horizon: int = 96, n_channels: int = 1, seed: int = 0):
        super().__init__(input_len, horizon, n_channels, seed)
        self.weight = self._param("linear.weight", (input_len, horizon), fan_in=input_len)
        self.bias = self._param("linear.bias", (horizon,), fan_in=input_len)

    def forward(self, x) -> Tensor:
        x = self._check_input(x)
        last = x[:, -1:, :]
        out = _per_channel_linear(x - last, self.weight, self.bias)
        return add(out, Tensor(np.broadcast_to(last, out.shape)))


class DLinear(NeuralForecaster):
    """Moving-average decomposition, one linear map per component, summed."""

    kind = "dlinear"

    def __init__(self, input_len: int = 96, horizon: int = 96, n_channels: int = 1, seed: int = 0,
                 kernel_size: int = 25):
        super().__init__(input_len, horizon, n_channels, seed)
        if kernel_size % 2 == 0:
            raise ModelError(f"kernel_size must be odd, got {kernel_size}")
        self.kernel_size = kernel_size
        self.w_seasonal = self._param("seasonal.weight", (input_len, horizon), fan_in=input_len)
        self.b_seasonal = self._param("seasonal.bias", (horizon,), fan_in=input_len)
        self.w_trend = self._param("trend.weight", (input_len, horizon), fan_in=input_len)
        self.b_trend = self._param("trend.bias", (horizon,), fan_in=input_len)

    def architecture(self):
        return {**super().architecture(), "kernel_size": self.kernel_size}

    def forward(self, x) -> Tensor:
        x = self._check_input(x)
        trend, seasonal = series_decompose(x, self.kernel_size)
        return add(
            _per_channel_linear(seasonal, self.w_seasonal, self.b_seasonal),
            _per_channel_linear(trend, self.w_trend, self.b_trend),
        )
