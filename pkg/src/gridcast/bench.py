"""Benchmark orchestration: walk-forward folds x model roster x evaluation windows.

A run directory holds::

    meta.json          config, config hash, seed, timestamps
    records.ndjson     append-only: record / history / error / cell_done lines
    summary.csv        per (model, country) fold-then-window and pooled means
    checkpoints/       per (model, fold) parameters (GCKP or ARIMA JSON)

A (model, fold) cell counts as finished only once its ``cell_done`` line is
written, so an interrupted run resumes by recomputing unfinished cells.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import threading
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import tomli

from .autodiff import precision
from .errors import ConfigError, GridcastError
from .external import ExternalForecaster, ExternalForecasterSpec
from .ingest import IngestOptions, parse_price_csv, repair_gaps
from .metrics import METRIC_NAMES, ResultRecord, aggregate, compute_metrics, fold_then_window_means
from .models import (
    NEURAL_MODELS,
    ArimaForecaster,
    NeuralForecaster,
    TrainConfig,
    TrainingWindows,
    build_model,
    train_model,
    warm_start,
)
from .panel import PricePanel, enumerate_eval_windows, fit_scaler, make_walk_forward_plan
from .synth import SynthSpec, generate_panel, load_specs

log = logging.getLogger(__name__)

RECORDS_FILE = "records.ndjson"
SUMMARY_FILE = "summary.csv"
META_FILE = "meta.json"
CHECKPOINT_DIR = "checkpoints"


# -- configuration ----------------------------------------------------------------


@dataclass(frozen=True)
class ModelEntry:
    name: str
    kind: str
    params: dict = field(default_factory=dict)
    command: tuple[str, ...] = ()
    timeout: float = 60.0

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in (*NEURAL_MODELS, "arima", "external"):
            raise ConfigError(f"model {self.name!r}: unknown kind {self.kind!r}")
        if kind == "external" and not self.command:
            raise ConfigError(f"external model {self.name!r} needs a command")
        if not self.name or "/" in self.name:
            raise ConfigError(f"invalid model name {self.name!r}")


@dataclass(frozen=True)
class BenchConfig:
    models: tuple[ModelEntry, ...]
    csv: str | None = None
    panel: str | None = None
    synth: tuple[SynthSpec, ...] = ()
    synth_start: str | None = None
    gap_policy: str = "error"
    train_len: int = 2000
    test_len: int = 500
    n_folds: int = 6
    stride: int | None = None
    input_len: int = 96
    horizon: int = 96
    eval_stride: int = 96
    train: TrainConfig = TrainConfig()
    seed: int = 0
    jobs: int = 1
    precision: int = 32

    def __post_init__(self):
        for name in ("csv", "panel"):
            if getattr(self, name) is not None:
                object.__setattr__(self, name, str(getattr(self, name)))
        if not self.models:
            raise ConfigError("model roster is empty")
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate model names in roster: {names}")
        sources = sum(x is not None and x != () for x in (self.csv, self.panel, self.synth))
        if sources != 1:
            raise ConfigError("exactly one data source (csv, panel or synth series) is required")
        if self.precision not in (32, 64):
            raise ConfigError("precision must be 32 or 64")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["synth"] = [s.to_dict() for s in self.synth]
        d["models"] = [{**asdict(m), "command": list(m.command)} for m in self.models]
        return d

    def hash(self) -> str:
        """Identity of the experiment; parallelism does not change results, so it is excluded."""
        d = self.to_dict()
        d.pop("jobs")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **changes) -> BenchConfig:
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return BenchConfig(**d)


def _resolve(base: Path, p: str | None) -> str | None:
    if p is None:
        return None
    path = Path(p)
    return str(path if path.is_absolute() else (base / path))


def config_from_dict(doc: dict[str, Any], base_dir: str | Path = ".") -> BenchConfig:
    base = Path(base_dir)
    doc = dict(doc)
    data = dict(doc.pop("data", {}))
    plan = dict(doc.pop("plan", {}))
    train = dict(doc.pop("train", {}))
    roster = doc.pop("models", [])
    known = {"seed", "jobs", "precision", "input_len", "horizon", "eval_stride"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    try:
        models = tuple(
            ModelEntry(
                name=m.get("name", m.get("kind", "")),
                kind=m["kind"],
                params={k: v for k, v in m.items() if k not in ("name", "kind", "command", "timeout")},
                command=tuple(m.get("command", ())),
                timeout=float(m.get("timeout", 60.0)),
            )
            for m in roster
        )
        synth, start = (), None
        if "synth" in data:
            src = data.pop("synth")
            if isinstance(src, str):
                path = Path(_resolve(base, src))
                if not path.exists():
                    raise ConfigError(f"synthetic spec file not found: {path}")
                with open(path, "rb") as fh:
                    specs, start = load_specs(tomli.load(fh))
            else:
                specs, start = load_specs({"series": src, **({"start": data["start"]} if "start" in data else {})})
            synth = tuple(specs)
        data.pop("start", None)
        csv_path = _resolve(base, data.pop("csv", None))
        panel_path = _resolve(base, data.pop("panel", None))
        gap_policy = data.pop("gap_policy", "error")
        if data:
            raise ConfigError(f"unknown [data] keys: {sorted(data)}")
        for p in (csv_path, panel_path):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"data file not found: {p}")
        return BenchConfig(
            models=models, csv=csv_path, panel=panel_path, synth=synth, synth_start=start,
            gap_policy=gap_policy, train=TrainConfig(**train), **plan, **doc,
        )
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"invalid benchmark config: {exc}") from exc


def load_config(path: str | Path) -> BenchConfig:
    """Read a TOML (or ``.json``) benchmark config; relative paths resolve against its directory."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(raw) if path.suffix.lower() == ".json" else tomli.loads(raw.decode("utf-8"))
    except (ValueError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_dict(doc, path.parent)


def load_panel(config: BenchConfig) -> PricePanel:
    if config.synth:
        kw = {"start": config.synth_start} if config.synth_start else {}
        panel = generate_panel(list(config.synth), **kw)
    elif config.panel:
        panel = PricePanel.load(config.panel)
    else:
        panel = parse_price_csv(Path(config.csv).read_bytes(), IngestOptions(gap_policy=config.gap_policy),
                                provenance=config.csv)
    if panel.n_gaps:
        panel, _ = repair_gaps(panel, config.gap_policy)
    return panel


def cell_seed(seed: int, model: str, fold: int | str) -> int:
    return zlib.crc32(f"{seed}/{model}/{fold}".encode())


# -- result store -----------------------------------------------------------------


class ResultStore:
    """Records keyed (model, country, fold, window) with their forecasts, plus histories and errors.

    With ``root=None`` the store lives in memory only (used for report inputs
    assembled elsewhere, such as published tables).
    """

    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else None
        self.records: dict[tuple, ResultRecord] = {}
        self.forecasts: dict[tuple, np.ndarray] = {}
        self.origins: dict[tuple, int] = {}
        self.histories: dict[tuple[str, int], dict] = {}
        self.errors: dict[tuple[str, int], str] = {}
        self.done: set[tuple[str, int]] = set()
        self.meta: dict[str, Any] = {}
        self._lock = threading.Lock()

    # persistence
    @property
    def records_path(self) -> Path:
        return self.root / RECORDS_FILE

    def checkpoint_path(self, model: str, fold: int, suffix: str) -> Path:
        return self.root / CHECKPOINT_DIR / model / f"fold{fold}{suffix}"

    @classmethod
    def open(cls, root: str | Path) -> ResultStore:
        """Load a run directory, keeping only finished cells (a torn final line is ignored)."""
        store = cls(root)
        meta = store.root / META_FILE
        if meta.exists():
            store.meta = json.loads(meta.read_text())
        if not store.records_path.exists():
            return store
        cells: dict[tuple[str, int], list[dict]] = {}
        text = store.records_path.read_text(encoding="utf-8")
        lines = text.split("\n")
        for i, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError:
                if i >= len(lines) - 2:
                    log.warning("ignoring truncated final line in %s", store.records_path)
                    continue
                raise GridcastError(f"{store.records_path}:{i + 1}: corrupt record line") from None
            cells.setdefault((doc["model"], int(doc["fold"])), []).append(doc)
        for cell, docs in cells.items():
            if any(d["type"] == "cell_done" for d in docs):
                store._absorb(docs)
            else:
                for d in docs:
                    if d["type"] == "error":
                        store.errors[cell] = d["message"]
        return store

    def _absorb(self, docs: Iterable[dict]) -> None:
        for d in docs:
            cell = (d["model"], int(d["fold"]))
            if d["type"] == "record":
                rec = ResultRecord(d["model"], d["country"], int(d["fold"]), int(d["window"]),
                                   *(float(d[k]) for k in METRIC_NAMES))
                self.records[rec.key] = rec
                self.forecasts[rec.key] = np.asarray(d["forecast"], dtype=np.float64)
                self.origins[rec.key] = int(d["origin"])
            elif d["type"] == "history":
                self.histories[cell] = {k: d[k] for k in ("losses", "baseline", "stopped_early")}
            elif d["type"] == "cell_done":
                self.done.add(cell)
                self.errors.pop(cell, None)

    def compact(self) -> None:
        """Rewrite the record file with finished cells only, in canonical order."""
        lines = []
        for cell in sorted(self.done):
            lines.extend(self._cell_lines(cell))
        tmp = self.records_path.with_suffix(".tmp")
        tmp.write_text("".join(lines), encoding="utf-8")
        os.replace(tmp, self.records_path)

    def _cell_lines(self, cell: tuple[str, int]) -> list[str]:
        model, fold = cell
        out = []
        for key in sorted(k for k in self.records if k[0] == model and k[2] == fold):
            r = self.records[key]
            out.append(json.dumps({"type": "record", **{f: getattr(r, f) for f in ("model", "country", "fold", "window")},
                                   "origin": self.origins[key], **r.metrics.as_dict(),
                                   "forecast": self.forecasts[key].tolist()}) + "\n")
        if cell in self.histories:
            out.append(json.dumps({"type": "history", "model": model, "fold": fold, **self.histories[cell]}) + "\n")
        out.append(json.dumps({"type": "cell_done", "model": model, "fold": fold}) + "\n")
        return out

    def add_cell(self, model: str, fold: int, rows: list[tuple[ResultRecord, int, np.ndarray]],
                 history: dict | None = None) -> None:
        """Register one finished (model, fold) cell and append it to disk as a single write."""
        with self._lock:
            for rec, origin, fc in rows:
                self.records[rec.key] = rec
                self.origins[rec.key] = origin
                self.forecasts[rec.key] = np.asarray(fc, dtype=np.float64)
            if history is not None:
                self.histories[(model, fold)] = history
            self.done.add((model, fold))
            self.errors.pop((model, fold), None)
            if self.root is not None:
                with open(self.records_path, "a", encoding="utf-8") as fh:
                    fh.write("".join(self._cell_lines((model, fold))))
                    fh.flush()

    def add_error(self, model: str, fold: int, message: str) -> None:
        with self._lock:
            self.errors[(model, fold)] = message
            if self.root is not None:
                with open(self.records_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"type": "error", "model": model, "fold": fold, "message": message}) + "\n")

    # views
    def sorted_records(self) -> list[ResultRecord]:
        return [self.records[k] for k in sorted(self.records)]

    @property
    def models(self) -> list[str]:
        return sorted({k[0] for k in self.records})

    @property
    def countries(self) -> list[str]:
        return sorted({k[1] for k in self.records})

    def summary_csv(self) -> str:
        recs = self.sorted_records()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "country", *METRIC_NAMES, *(f"pooled_{m}" for m in METRIC_NAMES), "n_records"])
        if not recs:
            return buf.getvalue()
        nested = fold_then_window_means(recs)
        pooled = aggregate(recs, "model_country")
        counts: dict = {}
        for r in recs:
            counts[(r.model, r.country)] = counts.get((r.model, r.country), 0) + 1
        for key, m in nested.items():
            p = pooled[key]
            w.writerow([*key, *(repr(getattr(m, f)) for f in METRIC_NAMES),
                        *(repr(getattr(p, f)) for f in METRIC_NAMES), counts[key]])
        return buf.getvalue()

    def write_summary(self) -> None:
        (self.root / SUMMARY_FILE).write_text(self.summary_csv(), encoding="utf-8")

    @classmethod
    def from_records(cls, records: Iterable[ResultRecord]) -> ResultStore:
        store = cls(None)
        for r in records:
            store.records[r.key] = r
        return store


# -- execution --------------------------------------------------------------------


@dataclass
class BenchOutcome:
    store: ResultStore
    expected: set[tuple]
    failed_cells: dict[tuple[str, int], str]

    @property
    def complete(self) -> bool:
        return not self.failed_cells and self.expected <= set(self.store.records)


def scheduled_keys(config: BenchConfig, panel: PricePanel) -> set[tuple]:
    plan = make_walk_forward_plan(panel.n_hours, config.train_len, config.test_len, config.n_folds, config.stride)
    keys = set()
    for fold in plan.folds:
        n_win = len(enumerate_eval_windows(plan, fold.index, config.input_len, config.horizon, config.eval_stride))
        for m in config.models:
            for c in panel.channels:
                for w in range(n_win):
                    keys.add((m.name, c, fold.index, w))
    return keys


class _Runner:
    def __init__(self, config: BenchConfig, panel: PricePanel, store: ResultStore):
        self.config = config
        self.panel = panel
        self.store = store
        self.plan = make_walk_forward_plan(panel.n_hours, config.train_len, config.test_len, config.n_folds,
                                           config.stride)

    def windows(self, fold: int):
        c = self.config
        return enumerate_eval_windows(self.plan, fold, c.input_len, c.horizon, c.eval_stride)

    def _score(self, entry: ModelEntry, fold: int, forecasts: list[np.ndarray]):
        rows = []
        vals = self.panel.values
        for w_idx, (win, fc) in enumerate(zip(self.windows(fold), forecasts)):
            target = vals[win.target_range.start:win.target_range.stop]
            for j, country in enumerate(self.panel.channels):
                m = compute_metrics(target[:, j], fc[:, j])
                rows.append((ResultRecord(entry.name, country, fold, w_idx, *m.as_dict().values()),
                             win.origin, fc[:, j]))
        return rows

    def _contexts(self, fold: int) -> list[np.ndarray]:
        vals = self.panel.values
        return [vals[w.context_range.start:w.context_range.stop] for w in self.windows(fold)]

    def run_model(self, entry: ModelEntry) -> dict[tuple[str, int], str]:
        failures = {}
        prev: NeuralForecaster | None = None
        with precision(self.config.precision):
            for fold in self.plan.folds:
                k = fold.index
                if (entry.name, k) in self.store.done:
                    prev = None  # reload lazily if the next fold needs it
                    continue
                try:
                    if entry.kind in NEURAL_MODELS:
                        if prev is None and k > 0:
                            prev = self._load_previous(entry, k)
                        prev = self._neural_cell(entry, k, prev)
                    elif entry.kind == "arima":
                        self._arima_cell(entry, k)
                    else:
                        self._external_cell(entry, k)
                except GridcastError as exc:
                    msg = f"{type(exc).__name__}: {exc}"
                    log.error("cell %s fold %d failed: %s", entry.name, k, msg)
                    failures[(entry.name, k)] = msg
                    self.store.add_error(entry.name, k, msg)
        return failures

    def _new_neural(self, entry: ModelEntry) -> NeuralForecaster:
        c = self.config
        return build_model(entry.kind, c.input_len, c.horizon, self.panel.n_channels,
                           seed=cell_seed(c.seed, entry.name, "init"), **entry.params)

    def _load_previous(self, entry: ModelEntry, fold: int) -> NeuralForecaster | None:
        """Most recent finished fold's parameters, read back from its checkpoint."""
        for j in range(fold - 1, -1, -1):
            path = self.store.checkpoint_path(entry.name, j, ".gckp") if self.store.root else None
            if (entry.name, j) in self.store.done and path is not None and path.exists():
                m = self._new_neural(entry)
                m.load(path)
                return m
        return None

    def _neural_cell(self, entry: ModelEntry, k: int, prev: NeuralForecaster | None) -> NeuralForecaster:
        c = self.config
        fold = self.plan.folds[k]
        scaler = fit_scaler(self.panel, fold.train)
        model = self._new_neural(entry)
        if prev is not None:
            warm_start(model, prev)
        block = scaler.forward(self.panel.values[fold.train.start:fold.train.stop])
        tc = TrainConfig(**{**asdict(c.train), "seed": cell_seed(c.seed, entry.name, k)})
        result = train_model(model, TrainingWindows(block, c.input_len, c.horizon), tc)
        if self.store.root is not None:
            path = self.store.checkpoint_path(entry.name, k, ".gckp")
            path.parent.mkdir(parents=True, exist_ok=True)
            model.save(path)
        forecasts = [scaler.inverse(model.predict(scaler.forward(ctx))) for ctx in self._contexts(k)]
        history = {"losses": result.history, "baseline": result.baseline_loss,
                   "stopped_early": result.stopped_early}
        self.store.add_cell(entry.name, k, self._score(entry, k, forecasts), history)
        return model

    def _arima_cell(self, entry: ModelEntry, k: int) -> None:
        c = self.config
        fold = self.plan.folds[k]
        model = build_model("arima", c.input_len, c.horizon, self.panel.n_channels, **entry.params)
        assert isinstance(model, ArimaForecaster)
        model.fit(self.panel.values[fold.train.start:fold.train.stop])
        if self.store.root is not None:
            path = self.store.checkpoint_path(entry.name, k, ".json")
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(model.to_json())
        forecasts = [model.predict(ctx) for ctx in self._contexts(k)]
        self.store.add_cell(entry.name, k, self._score(entry, k, forecasts))

    def _external_cell(self, entry: ModelEntry, k: int) -> None:
        spec = ExternalForecasterSpec(entry.name, entry.command, entry.timeout)
        model = ExternalForecaster(spec, self.config.horizon, jobs=self.config.jobs)
        forecasts = [model.predict(ctx, self.panel.channels) for ctx in self._contexts(k)]
        self.store.add_cell(entry.name, k, self._score(entry, k, forecasts))


def run_benchmark(config: BenchConfig, out_dir: str | Path | None = None, panel: PricePanel | None = None) -> BenchOutcome:
    """Run (or resume) every (model, fold) cell; failed cells are recorded and skipped."""
    panel = panel if panel is not None else load_panel(config)
    if out_dir is None:
        store = ResultStore(None)
    else:
        root = Path(out_dir)
        root.mkdir(parents=True, exist_ok=True)
        store = ResultStore.open(root)
        digest = config.hash()
        if store.meta and store.meta.get("config_hash") != digest:
            raise ConfigError(f"{root} holds a run with a different config (hash {store.meta.get('config_hash')}); "
                              "use a fresh output directory")
        if store.records_path.exists():
            store.compact()
        store.meta = {"config_hash": digest, "seed": config.seed, "config": config.to_dict(),
                      "started": store.meta.get("started", time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())),
                      "channels": list(panel.channels)}
        (root / META_FILE).write_text(json.dumps(store.meta, indent=2, sort_keys=True))
    runner = _Runner(config, panel, store)
    failures: dict = {}
    if config.jobs == 1 or len(config.models) == 1:
        for entry in config.models:
            failures.update(runner.run_model(entry))
    else:
        with ThreadPoolExecutor(config.jobs) as pool:
            for f in pool.map(runner.run_model, config.models):
                failures.update(f)
    if store.root is not None:
        store.meta["finished"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        store.meta["failed_cells"] = [f"{m}/fold{k}" for m, k in sorted(failures)]
        (store.root / META_FILE).write_text(json.dumps(store.meta, indent=2, sort_keys=True))
        store.compact()
        store.write_summary()
    return BenchOutcome(store, scheduled_keys(config, panel), failures)
