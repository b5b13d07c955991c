"""Price panel data model, walk-forward split arithmetic, scaling and window enumeration."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import PanelError

HOUR = np.timedelta64(1, "h")

INPUT_LEN = 96
HORIZON = 96


def _to_utc_seconds(ts) -> tuple[np.datetime64, bool]:
    """Return (naive-UTC datetime64[s], was_aware)."""
    if isinstance(ts, np.datetime64):
        return ts.astype("datetime64[s]"), False
    if isinstance(ts, str):
        text = ts.strip()
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        try:
            ts = dt.datetime.fromisoformat(text)
        except ValueError as exc:
            raise PanelError(f"unparseable timestamp {ts!r}") from exc
    if not isinstance(ts, dt.datetime):
        raise PanelError(f"unsupported timestamp type {type(ts).__name__}")
    aware = ts.tzinfo is not None and ts.utcoffset() is not None
    if aware:
        ts = ts.astimezone(dt.timezone.utc).replace(tzinfo=None)
    return np.datetime64(ts.replace(microsecond=0), "s"), aware


@dataclass(frozen=True, eq=False)
class PricePanel:
    """Hourly multi-country price matrix in EUR/MWh.

    ``values`` has shape ``(n_hours, n_channels)``; NaN marks a gap that still
    needs repair. Timestamps are naive ``datetime64[s]`` values meaning UTC.
    """

    timestamps: np.ndarray
    channels: tuple[str, ...]
    values: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[s]")
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.ndim != 2:
            raise PanelError(f"values must be 2-D, got shape {vals.shape}")
        channels = tuple(str(c) for c in self.channels)
        if len(channels) < 1:
            raise PanelError("panel needs at least one channel")
        if len(set(channels)) != len(channels):
            raise PanelError("channel identifiers must be unique")
        if vals.shape != (len(ts), len(channels)):
            raise PanelError(
                f"values shape {vals.shape} does not match "
                f"{len(ts)} timestamps x {len(channels)} channels"
            )
        if len(ts) > 1 and np.any(np.diff(ts) != HOUR):
            raise PanelError("timestamps must be strictly increasing with exact 1-hour spacing")
        ts.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "channels", channels)

    @property
    def n_hours(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    @property
    def gap_mask(self) -> np.ndarray:
        return ~np.isfinite(self.values)

    @property
    def n_gaps(self) -> int:
        return int(self.gap_mask.sum())

    def channel_index(self, channel: str) -> int:
        try:
            return self.channels.index(channel)
        except ValueError:
            raise PanelError(f"unknown channel {channel!r}; have {list(self.channels)}") from None

    def column(self, channel: str) -> np.ndarray:
        return self.values[:, self.channel_index(channel)]

    def select(self, channels: Sequence[str]) -> PricePanel:
        idx = [self.channel_index(c) for c in channels]
        return PricePanel(self.timestamps, tuple(channels), self.values[:, idx], self.provenance)

    def slice_hours(self, start: int, stop: int) -> PricePanel:
        return PricePanel(self.timestamps[start:stop], self.channels, self.values[start:stop], self.provenance)

    def validate(self) -> None:
        """Raise if the panel still contains gaps or non-finite prices."""
        if self.n_gaps:
            raise PanelError(f"panel contains {self.n_gaps} non-finite cells")

    def equals(self, other: PricePanel) -> bool:
        return (
            self.channels == other.channels
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            np.savez(
                fh,
                timestamps=self.timestamps.astype("int64"),
                channels=np.array(self.channels),
                values=self.values,
                provenance=np.array(self.provenance),
            )

    @classmethod
    def load(cls, path: str | Path) -> PricePanel:
        with np.load(path, allow_pickle=False) as z:
            return cls(
                timestamps=z["timestamps"].astype("datetime64[s]"),
                channels=tuple(str(c) for c in z["channels"]),
                values=z["values"],
                provenance=str(z["provenance"]),
            )


def hourly_index(start: np.datetime64 | str, n_hours: int) -> np.ndarray:
    start64, _ = _to_utc_seconds(start)
    return start64 + np.arange(n_hours) * HOUR


def build_panel(records: Iterable[tuple], provenance: str = "") -> PricePanel:
    """Materialise ``(timestamp, channel, price)`` records as an hourly grid.

    Channels are sorted lexicographically. Hours inside the covered span that
    have no record for a channel become NaN gaps (see ``ingest.repair_gaps``).
    """
    cells: dict[tuple[np.datetime64, str], float] = {}
    saw_aware = saw_naive = False
    for ts, channel, price in records:
        t64, aware = _to_utc_seconds(ts)
        saw_aware |= aware
        saw_naive |= not aware
        if saw_aware and saw_naive:
            raise PanelError("mixed time zones: naive and offset-aware timestamps in one input")
        if (t64 - t64.astype("datetime64[h]")) != np.timedelta64(0, "s"):
            raise PanelError(f"timestamp {t64} is not aligned to the hour")
        key = (t64, str(channel))
        if key in cells:
            raise PanelError(f"duplicate cell for {t64}Z channel {channel}")
        cells[key] = float(price)
    if not cells:
        raise PanelError("no records supplied")

    channels = sorted({c for _, c in cells})
    times = [t for t, _ in cells]
    start, end = min(times), max(times)
    n_hours = int((end - start) // HOUR) + 1
    values = np.full((n_hours, len(channels)), np.nan)
    col = {c: j for j, c in enumerate(channels)}
    for (t, c), price in cells.items():
        values[int((t - start) // HOUR), col[c]] = price
    return PricePanel(start + np.arange(n_hours) * HOUR, tuple(channels), values, provenance)


@dataclass(frozen=True)
class Fold:
    index: int
    train: range
    test: range


@dataclass(frozen=True)
class WalkForwardPlan:
    train_len: int = 2000
    test_len: int = 500
    n_folds: int = 6
    stride: int = 500
    folds: tuple[Fold, ...] = field(default=(), compare=False)

    @property
    def total_hours(self) -> int:
        return self.train_len + (self.n_folds - 1) * self.stride + self.test_len


def make_walk_forward_plan(
    n_hours: int,
    train_len: int = 2000,
    test_len: int = 500,
    n_folds: int = 6,
    stride: int | None = None,
) -> WalkForwardPlan:
    """Rolling-window plan: fold k trains on ``[k*stride, k*stride+train_len)``
    and tests on the ``test_len`` hours that follow."""
    if stride is None:
        stride = test_len
    for name, v in (("train_len", train_len), ("test_len", test_len), ("n_folds", n_folds), ("stride", stride)):
        if v <= 0:
            raise PanelError(f"{name} must be positive, got {v}")
    need = train_len + (n_folds - 1) * stride + test_len
    if n_hours < need:
        raise PanelError(f"insufficient hours: plan needs {need}, panel has {n_hours}")
    folds = []
    for k in range(n_folds):
        s = k * stride
        folds.append(Fold(k, range(s, s + train_len), range(s + train_len, s + train_len + test_len)))
    return WalkForwardPlan(train_len, test_len, n_folds, stride, tuple(folds))


@dataclass(frozen=True, eq=False)
class ChannelScaler:
    means: np.ndarray
    stds: np.ndarray
    fit_range: range

    def forward(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.means) / self.stds

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.stds + self.means


def fit_scaler(panel: PricePanel | np.ndarray, index_range: range) -> ChannelScaler:
    """Per-channel mean and population standard deviation over ``index_range``."""
    values = panel.values if isinstance(panel, PricePanel) else np.asarray(panel, dtype=np.float64)
    if index_range.step != 1 or index_range.start < 0 or index_range.stop > values.shape[0] or len(index_range) == 0:
        raise PanelError(f"range {index_range} out of bounds for {values.shape[0]} hours")
    block = values[index_range.start:index_range.stop]
    if not np.all(np.isfinite(block)):
        raise PanelError("cannot fit scaler on a range containing gaps")
    means = block.mean(axis=0)
    stds = block.std(axis=0)
    degenerate = np.flatnonzero(~(stds > 0))
    if degenerate.size:
        names = degenerate.tolist()
        if isinstance(panel, PricePanel):
            names = [panel.channels[i] for i in degenerate]
        raise PanelError(f"zero-variance channel(s) on fit range: {names}")
    return ChannelScaler(means, stds, index_range)


def scale(x: np.ndarray, scaler: ChannelScaler, direction: Literal["forward", "inverse"] = "forward") -> np.ndarray:
    if direction == "forward":
        return scaler.forward(x)
    if direction == "inverse":
        return scaler.inverse(x)
    raise PanelError(f"direction must be 'forward' or 'inverse', got {direction!r}")


@dataclass(frozen=True)
class EvalWindow:
    fold_index: int
    context_range: range
    target_range: range

    @property
    def origin(self) -> int:
        return self.target_range.start


def enumerate_eval_windows(
    plan: WalkForwardPlan,
    fold_index: int,
    input_len: int = INPUT_LEN,
    horizon: int = HORIZON,
    eval_stride: int = HORIZON,
) -> list[EvalWindow]:
    """Forecast origins at ``test_start + m*eval_stride`` while the target fits
    in the test range. Early contexts reach back into the train range."""
    fold = plan.folds[fold_index]
    if horizon > len(fold.test):
        raise PanelError(f"horizon {horizon} exceeds test length {len(fold.test)}")
    if input_len > len(fold.train):
        raise PanelError(f"input_len {input_len} exceeds train length {len(fold.train)}")
    if eval_stride <= 0 or horizon <= 0 or input_len <= 0:
        raise PanelError("input_len, horizon and eval_stride must be positive")
    windows = []
    origin = fold.test.start
    while origin + horizon <= fold.test.stop:
        windows.append(EvalWindow(fold_index, range(origin - input_len, origin), range(origin, origin + horizon)))
        origin += eval_stride
    return windows
