"""Forecasting model zoo and the shared trainer."""

from __future__ import annotations

from ..errors import ConfigError
from .arima import ArimaConfig, ArimaForecaster, ArimaModel, ArimaOrder, fit_arima, forecast_arima, select_order
from .base import NeuralForecaster
from .linear import DLinear, NLinear, series_decompose
from .patchtst import PatchTST, patch_count
from .training import (
    EarlyStopping,
    TrainConfig,
    TrainResult,
    TrainingWindows,
    evaluate_loss,
    predict_windows,
    train_model,
    warm_start,
)
from .tsmixer import TSMixer

NEURAL_MODELS = {cls.kind: cls for cls in (NLinear, DLinear, TSMixer, PatchTST)}
MODEL_KINDS = (*NEURAL_MODELS, "arima", "external")


def build_model(kind: str, input_len: int, horizon: int, n_channels: int, seed: int = 0, **params):
    """Instantiate a built-in model by kind with its hyperparameters."""
    kind = kind.lower()
    try:
        if kind == "arima":
            order = params.pop("order", (2, 1, 2))
            auto = params.pop("auto", False)
            return ArimaForecaster(ArimaOrder(*order), horizon=horizon, auto=auto, config=ArimaConfig(**params))
        if kind not in NEURAL_MODELS:
            raise ConfigError(f"unknown model kind {kind!r}; choose from {sorted(NEURAL_MODELS) + ['arima']}")
        return NEURAL_MODELS[kind](input_len=input_len, horizon=horizon, n_channels=n_channels, seed=seed, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {kind}: {exc}") from exc


__all__ = [
    "ArimaConfig", "ArimaForecaster", "ArimaModel", "ArimaOrder", "DLinear", "EarlyStopping", "MODEL_KINDS",
    "NEURAL_MODELS", "NLinear", "NeuralForecaster", "PatchTST", "TSMixer", "TrainConfig", "TrainResult",
    "TrainingWindows", "build_model", "evaluate_loss", "fit_arima", "forecast_arima", "patch_count",
    "predict_windows", "select_order", "series_decompose", "train_model", "warm_start",
]
