"""Plot-ready CSV reports computed from a result store.

Every emitter is a pure function of the store's records. Numbers are written
with ten significant digits, which reproduces any value that was itself
recorded with up to ten significant digits.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Callable

import numpy as np

from .bench import ResultStore
from .errors import ConfigError, MetricsError
from .metrics import METRIC_NAMES, aggregate, fold_then_window_means, performance_indicator
from .ranking import ScoreTable, pairwise_vs_best, rank_models

REPORT_KINDS = ("ranking", "heatmap", "boxplot", "geomap", "tables")
INSUFFICIENT = "insufficient models"


def fmt(x: float) -> str:
    return format(float(x), ".10g")


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _require(store: ResultStore):
    recs = store.sorted_records()
    if not recs:
        raise MetricsError("result store is empty")
    return recs


def ranking_report(store: ResultStore) -> str:
    """One row per (model, country): indicator, rank there, average rank, Friedman p vs the best model."""
    table = ScoreTable.from_records(_require(store))
    ranks = rank_models(table)
    if len(table.models) >= 2 and len(table.countries) >= 2:
        tests = pairwise_vs_best(table)
        best = ranks.order()[0]
        p_col = {m: ("best" if m == best else fmt(tests[m].p_value)) for m in table.models}
    else:
        p_col = {m: INSUFFICIENT for m in table.models}
    rows = [["model", "country", "indicator", "rank", "avg_rank", "friedman_p"]]
    for model in ranks.order():
        i = table.models.index(model)
        for j, country in enumerate(table.countries):
            rows.append([model, country, fmt(table.scores[i, j]), fmt(ranks.ranks[i, j]),
                         fmt(ranks.average[i]), p_col[model]])
    return _csv(rows)


def heatmap_report(store: ResultStore) -> str:
    """Model x country matrix of the performance indicator."""
    table = ScoreTable.from_records(_require(store))
    rows = [["model", *table.countries]]
    for i, model in enumerate(table.models):
        rows.append([model, *(fmt(v) for v in table.scores[i])])
    return _csv(rows)


def boxplot_report(store: ResultStore) -> str:
    """Quartiles of the per-window indicator (pooled over countries) for each model and fold."""
    groups: dict[tuple[str, int], list[float]] = {}
    for r in _require(store):
        groups.setdefault((r.model, r.fold), []).append(performance_indicator(r.metrics))
    rows = [["model", "fold", "n", "min", "q1", "median", "q3", "max", "mean"]]
    for (model, fold), vals in sorted(groups.items()):
        v = np.asarray(vals)
        q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0])
        rows.append([model, fold, v.size, *(fmt(x) for x in q), fmt(v.mean())])
    return _csv(rows)


def geomap_report(store: ResultStore) -> str:
    """Mean SMAPE per country across models (each model's fold-then-window mean first)."""
    per_cell = fold_then_window_means(_require(store))
    by_country: dict[str, list[float]] = {}
    for (_, country), m in per_cell.items():
        by_country.setdefault(country, []).append(m.smape)
    rows = [["country", "smape", "n_models"]]
    for country, vals in sorted(by_country.items()):
        rows.append([country, fmt(np.mean(vals)), len(vals)])
    return _csv(rows)


def tables_report(store: ResultStore) -> str:
    """Per model and country: the four metric means (fold-then-window)."""
    per_cell = fold_then_window_means(_require(store))
    rows = [["model", "country", *METRIC_NAMES]]
    for (model, country), m in per_cell.items():
        rows.append([model, country, *(fmt(getattr(m, k)) for k in METRIC_NAMES)])
    return _csv(rows)


def pooled_tables_report(store: ResultStore) -> str:
    """Same layout as :func:`tables_report` but averaging all windows of all folds at once."""
    rows = [["model", "country", *METRIC_NAMES]]
    for (model, country), m in aggregate(_require(store), "model_country").items():
        rows.append([model, country, *(fmt(getattr(m, k)) for k in METRIC_NAMES)])
    return _csv(rows)


EMITTERS: dict[str, Callable[[ResultStore], str]] = {
    "ranking": ranking_report,
    "heatmap": heatmap_report,
    "boxplot": boxplot_report,
    "geomap": geomap_report,
    "tables": tables_report,
}


def emit_report(store: ResultStore, kind: str, out_dir: str | Path | None = None) -> dict[str, str]:
    """Render one report kind; writes ``<kind>.csv`` (tables also ``tables_pooled.csv``) when ``out_dir`` is given."""
    if kind not in EMITTERS:
        raise ConfigError(f"unknown report kind {kind!r}; choose from {', '.join(REPORT_KINDS)}")
    files = {f"{kind}.csv": EMITTERS[kind](store)}
    if kind == "tables":
        files["tables_pooled.csv"] = pooled_tables_report(store)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text, encoding="utf-8")
    return files
