"""Forecast error metrics, the combined performance indicator, and record aggregation."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Iterable, Literal, Mapping

import numpy as np

from .errors import MetricsError

SMAPE_EPS = 1e-8
METRIC_NAMES = ("smape", "mae", "mse", "rmse")


@dataclass(frozen=True)
class MetricSet:
    smape: float  # fraction in [0, 2]
    mae: float
    mse: float
    rmse: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class ResultRecord:
    """Metrics for one (model, country, fold, window) evaluation on the original price scale."""

    model: str
    country: str
    fold: int
    window: int
    smape: float
    mae: float
    mse: float
    rmse: float

    @property
    def key(self) -> tuple[str, str, int, int]:
        return (self.model, self.country, self.fold, self.window)

    @property
    def metrics(self) -> MetricSet:
        return MetricSet(self.smape, self.mae, self.mse, self.rmse)


def smape(actual, predicted) -> float:
    y = np.asarray(actual, dtype=np.float64)
    f = np.asarray(predicted, dtype=np.float64)
    num = 2.0 * np.abs(f - y)
    denom = np.abs(y) + np.abs(f)
    both_zero = (np.abs(y) < SMAPE_EPS) & (np.abs(f) < SMAPE_EPS)
    terms = np.where(both_zero, 0.0, num / np.maximum(denom, SMAPE_EPS))
    return float(terms.mean())


def compute_metrics(actual, predicted) -> MetricSet:
    y = np.asarray(actual, dtype=np.float64).ravel()
    f = np.asarray(predicted, dtype=np.float64).ravel()
    if y.size == 0:
        raise MetricsError("empty input")
    if y.shape != f.shape:
        raise MetricsError(f"length mismatch: {y.size} actual vs {f.size} predicted")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(f))):
        raise MetricsError("non-finite values in metric input")
    err = f - y
    mse = float(np.mean(err * err))
    return MetricSet(smape=smape(y, f), mae=float(np.mean(np.abs(err))), mse=mse, rmse=float(np.sqrt(mse)))


def performance_indicator(m: MetricSet | Mapping[str, float]) -> float:
    """(100 * SMAPE + RMSE) / 2; lower is better."""
    if isinstance(m, Mapping):
        s, r = m["smape"], m["rmse"]
    else:
        s, r = m.smape, m.rmse
    if not (np.isfinite(s) and np.isfinite(r)) or s < 0 or r < 0:
        raise MetricsError(f"invalid metric values smape={s} rmse={r}")
    return (100.0 * s + r) / 2.0


def mean_metrics(items: Iterable[MetricSet]) -> MetricSet:
    items = list(items)
    if not items:
        raise MetricsError("cannot average an empty group")
    arr = np.array([[getattr(m, k) for k in METRIC_NAMES] for m in items])
    return MetricSet(*arr.mean(axis=0))


GroupBy = Literal["model", "country", "fold", "model_country", "model_fold", "model_country_fold"]

_GROUP_FIELDS = {
    "model": ("model",),
    "country": ("country",),
    "fold": ("fold",),
    "model_country": ("model", "country"),
    "model_fold": ("model", "fold"),
    "model_country_fold": ("model", "country", "fold"),
}


def aggregate(records: Iterable[ResultRecord], group_by: GroupBy = "model") -> dict:
    """Unweighted mean MetricSet per group key (a scalar for single fields, else a tuple)."""
    fields = _GROUP_FIELDS.get(group_by)
    if fields is None:
        raise MetricsError(f"unknown group_by {group_by!r}")
    groups: dict = defaultdict(list)
    for r in records:
        key = tuple(getattr(r, f) for f in fields)
        groups[key[0] if len(key) == 1 else key].append(r.metrics)
    if not groups:
        raise MetricsError("no records to aggregate")
    return {k: mean_metrics(v) for k, v in sorted(groups.items())}


def fold_then_window_means(records: Iterable[ResultRecord]) -> dict[tuple[str, str], MetricSet]:
    """Per (model, country): average windows within each fold, then average the folds."""
    per_fold = aggregate(records, "model_country_fold")
    nested: dict = defaultdict(list)
    for (model, country, _fold), m in per_fold.items():
        nested[(model, country)].append(m)
    return {k: mean_metrics(v) for k, v in sorted(nested.items())}
