"""Minibatch Adam training with the epoch-over-epoch early-stopping rule, plus warm start."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..autodiff import AdamState, Tape, adam_step, mse_loss
from ..errors import ConfigError, ModelError, TrainingError
from .base import NeuralForecaster


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 10
    early_stop_delta: float = 0.01
    min_epochs: int = 1
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if not self.max_epochs >= self.min_epochs >= 1:
            raise ConfigError(f"need max_epochs >= min_epochs >= 1, got {self.max_epochs}, {self.min_epochs}")
        if self.early_stop_delta < 0:
            raise ConfigError("early_stop_delta must be >= 0")
        if self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("batch_size must be >= 1 and lr > 0")


class EarlyStopping:
    """Stop once an epoch improves on the previous loss by less than ``delta``.

    The rule is only consulted from epoch ``min_epochs`` on; ``delta == 0``
    disables it. ``reference`` optionally seeds the "previous" loss, which lets
    a model stop after its very first epoch.
    """

    def __init__(self, delta: float, min_epochs: int = 1, max_epochs: int | None = None,
                 reference: float | None = None):
        self.delta = delta
        self.min_epochs = min_epochs
        self.max_epochs = max_epochs
        self.previous = reference
        self.epoch = 0
        self.triggered = False

    def update(self, loss: float) -> bool:
        """Record one epoch's loss; True means training should stop now."""
        self.epoch += 1
        prev, self.previous = self.previous, loss
        if (self.delta > 0 and prev is not None and self.epoch >= self.min_epochs
                and prev - loss < self.delta):
            self.triggered = True
            return True
        return self.max_epochs is not None and self.epoch >= self.max_epochs


@dataclass
class TrainingWindows:
    """Stride-1 ``(context, target)`` pairs over a scaled ``[T, C]`` block."""

    block: np.ndarray
    input_len: int
    horizon: int
    starts: np.ndarray = field(init=False)

    def __post_init__(self):
        self.block = np.asarray(self.block)
        n = self.block.shape[0] - self.input_len - self.horizon + 1
        if self.block.ndim != 2 or n < 1:
            raise TrainingError(f"block of shape {self.block.shape} yields no training windows "
                                f"for L={self.input_len}, H={self.horizon}")
        self.starts = np.arange(n)
        self._view = sliding_window_view(self.block, self.input_len + self.horizon, axis=0)  # [N, C, L+H]

    def __len__(self) -> int:
        return self.starts.size

    def batch(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        w = np.swapaxes(self._view[idx], 1, 2)  # [B, L+H, C]
        return w[:, :self.input_len], w[:, self.input_len:]


@dataclass
class TrainResult:
    history: list[float]
    baseline_loss: float
    stopped_early: bool

    @property
    def epochs_run(self) -> int:
        return len(self.history)

    @property
    def monotone(self) -> bool:
        return all(b <= a for a, b in zip(self.history, self.history[1:]))


def evaluate_loss(model: NeuralForecaster, windows: TrainingWindows, batch_size: int = 256) -> float:
    total = 0.0
    for i in range(0, len(windows), batch_size):
        x, y = windows.batch(windows.starts[i:i + batch_size])
        total += float(mse_loss(model.forward(x), y).data) * x.shape[0]
    return total / len(windows)


def train_model(model: NeuralForecaster, windows: TrainingWindows, config: TrainConfig = TrainConfig(),
                optimizer: AdamState | None = None) -> TrainResult:
    """Fit ``model`` in place on standardized windows; returns the per-epoch mean batch loss."""
    if not isinstance(model, NeuralForecaster):
        raise ModelError(f"{type(model).__name__} is not trainable by gradient descent")
    if len(windows) == 0:
        raise TrainingError("no training windows")
    state = optimizer if optimizer is not None else AdamState(lr=config.lr)
    rng = np.random.default_rng(config.seed)
    params = model.parameters()
    baseline = evaluate_loss(model, windows)
    if not math.isfinite(baseline):
        raise TrainingError("initial loss is not finite; check input scaling")
    stopper = EarlyStopping(config.early_stop_delta, config.min_epochs, config.max_epochs, reference=baseline)
    history: list[float] = []
    while True:
        order = rng.permutation(len(windows)) if config.shuffle else np.arange(len(windows))
        total = 0.0
        for b, i in enumerate(range(0, len(order), config.batch_size)):
            x, y = windows.batch(windows.starts[order[i:i + config.batch_size]])
            model.zero_grad()
            with Tape() as tape:
                loss = mse_loss(model.forward(x), y)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(f"{model.kind}: loss diverged to {value} at epoch {len(history) + 1}, "
                                    f"batch {b}")
            tape.backward(loss)
            adam_step(params, None, state)
            total += value * x.shape[0]
        history.append(total / len(order))
        if stopper.update(history[-1]):
            break
    return TrainResult(history, baseline, stopper.triggered)


def warm_start(model, previous) -> NeuralForecaster:
    """Copy ``previous``'s parameters into ``model`` exactly; optimizer state is not carried."""
    for m in (model, previous):
        if not isinstance(m, NeuralForecaster):
            raise ModelError(f"warm start applies to neural models only, not {getattr(m, 'kind', type(m).__name__)}")
    if model.architecture() != previous.architecture():
        raise ModelError(f"architecture mismatch: {model.architecture()} vs {previous.architecture()}")
    model.load_state_dict(previous.state_dict())
    return model


def predict_windows(model, contexts: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Batched no-tape prediction for ``[N, L, C]`` contexts."""
    outs = [model.forward(contexts[i:i + batch_size]).data for i in range(0, len(contexts), batch_size)]
    return np.concatenate(outs, axis=0)


__all__ = ["EarlyStopping", "TrainConfig", "TrainResult", "TrainingWindows", "evaluate_loss",
           "predict_windows", "train_model", "warm_start"]
