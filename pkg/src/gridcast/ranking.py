"""Model ranking across countries and Friedman significance testing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import MetricsError
from .metrics import MetricSet, ResultRecord, fold_then_window_means, performance_indicator


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Performance-indicator values, one row per model and one column per country."""

    models: tuple[str, ...]
    countries: tuple[str, ...]
    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.shape != (len(self.models), len(self.countries)):
            raise MetricsError(f"score matrix shape {scores.shape} != {len(self.models)} x {len(self.countries)}")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "countries", tuple(self.countries))

    def check_complete(self) -> None:
        bad = np.argwhere(~np.isfinite(self.scores))
        if bad.size:
            cells = [(self.models[i], self.countries[j]) for i, j in bad[:5]]
            raise MetricsError(f"score table has {len(bad)} missing/non-finite cell(s), e.g. {cells}")

    def subset(self, models: Sequence[str]) -> ScoreTable:
        idx = [self.models.index(m) for m in models]
        return ScoreTable(tuple(models), self.countries, self.scores[idx])

    @classmethod
    def from_cells(cls, cells: Mapping[tuple[str, str], float]) -> ScoreTable:
        models = sorted({m for m, _ in cells})
        countries = sorted({c for _, c in cells})
        scores = np.full((len(models), len(countries)), np.nan)
        for (m, c), v in cells.items():
            scores[models.index(m), countries.index(c)] = v
        return cls(tuple(models), tuple(countries), scores)

    @classmethod
    def from_metrics(cls, metrics: Mapping[tuple[str, str], MetricSet]) -> ScoreTable:
        return cls.from_cells({k: performance_indicator(m) for k, m in metrics.items()})

    @classmethod
    def from_records(cls, records: Iterable[ResultRecord]) -> ScoreTable:
        """Windows averaged within folds, folds averaged, then the indicator of the means."""
        return cls.from_metrics(fold_then_window_means(records))


@dataclass(frozen=True, eq=False)
class RankTable:
    models: tuple[str, ...]
    countries: tuple[str, ...]
    ranks: np.ndarray  # models x countries, midranks
    average: np.ndarray  # per model

    def average_rank(self, model: str) -> float:
        return float(self.average[self.models.index(model)])

    def order(self) -> list[str]:
        """Models sorted best (lowest average rank) first; ties keep table order."""
        return [self.models[i] for i in np.argsort(self.average, kind="stable")]


def midranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks, ascending; tied values share the mean of the positions they occupy."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    sorted_v = v[order]
    ranks = np.empty(len(v))
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def rank_models(table: ScoreTable) -> RankTable:
    table.check_complete()
    ranks = np.column_stack([midranks(table.scores[:, j]) for j in range(len(table.countries))])
    if ranks.size == 0:
        raise MetricsError("score table is empty")
    return RankTable(table.models, table.countries, ranks, ranks.mean(axis=1))


# -- chi-square survival function ------------------------------------------------

def _lower_gamma_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by its power series (x < a + 1)."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_gamma_cf(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) by modified Lentz continued fraction (x >= a + 1)."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gammaincc(a: float, x: float) -> float:
    if a <= 0:
        raise MetricsError("shape parameter must be positive")
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _lower_gamma_series(a, x)
    return _upper_gamma_cf(a, x)


def chi2_sf(x: float, df: int) -> float:
    """Upper tail probability of the chi-square distribution."""
    if df <= 0:
        raise MetricsError("degrees of freedom must be positive")
    return gammaincc(df / 2.0, x / 2.0)


@dataclass(frozen=True)
class FriedmanResult:
    statistic: float
    df: int
    p_value: float
    n_blocks: int
    n_models: int


def friedman_from_ranks(ranks: np.ndarray) -> FriedmanResult:
    """Friedman chi-square from a models x blocks rank matrix (no tie correction)."""
    k, n = ranks.shape
    if k < 2 or n < 2:
        raise MetricsError(f"Friedman test needs >= 2 models and >= 2 blocks, got {k} x {n}")
    rank_sums = ranks.sum(axis=1)
    stat = 12.0 / (n * k * (k + 1)) * float(rank_sums @ rank_sums) - 3.0 * n * (k + 1)
    stat = max(stat, 0.0)
    return FriedmanResult(stat, k - 1, chi2_sf(stat, k - 1), n, k)


def friedman_test(source: ScoreTable | RankTable, model_subset: Sequence[str] | None = None) -> FriedmanResult:
    """Friedman test over countries as blocks; ranks are recomputed within ``model_subset``."""
    if isinstance(source, RankTable):
        models = source.models
        if model_subset is None or tuple(model_subset) == models:
            return friedman_from_ranks(source.ranks)
        idx = [models.index(m) for m in model_subset]
        sub = source.ranks[idx]
        ranks = np.column_stack([midranks(sub[:, j]) for j in range(sub.shape[1])])
        return friedman_from_ranks(ranks)
    table = source if model_subset is None else source.subset(model_subset)
    if len(table.models) < 2 or len(table.countries) < 2:
        raise MetricsError(
            f"Friedman test needs >= 2 models and >= 2 blocks, got {len(table.models)} x {len(table.countries)}"
        )
    return friedman_from_ranks(rank_models(table).ranks)


def pairwise_vs_best(table: ScoreTable) -> dict[str, FriedmanResult]:
    """Two-model Friedman test of the best-ranked model against each other model."""
    best = rank_models(table).order()[0]
    return {m: friedman_test(table, [best, m]) for m in table.models if m != best}
