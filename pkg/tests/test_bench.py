import json
import signal
import subprocess
import sys
import time

import numpy as np
import pytest

from gridcast.autodiff import precision
from gridcast.bench import BenchConfig, ModelEntry, ResultStore, config_from_dict, load_config, run_benchmark
from gridcast.errors import ConfigError
from gridcast.external import naive_stub_command
from gridcast.models import TrainConfig, build_model
from gridcast.panel import PricePanel, enumerate_eval_windows, fit_scaler, make_walk_forward_plan

NAIVE = ModelEntry("naive", "external", command=naive_stub_command())
SHORT_PLAN = dict(train_len=800, test_len=192, n_folds=4)


def short_config(path, models, **kw):
    return BenchConfig(models=tuple(models), panel=str(path), **{**SHORT_PLAN, **kw})


def closed_form_naive(y, last):
    f = np.full_like(y, last)
    err = f - y
    denom = np.abs(y) + np.abs(f)
    smape = np.mean(np.where(denom == 0, 0.0, 2 * np.abs(err) / np.where(denom == 0, 1, denom)))
    mse = np.mean(err ** 2)
    return smape, np.mean(np.abs(err)), mse, np.sqrt(mse)


def test_default_protocol_record_count(seasonal_panel_path):
    out = run_benchmark(BenchConfig(models=(ModelEntry("NLinear", "nlinear"),), panel=seasonal_panel_path))
    assert len(out.store.records) == 6 * 5 * 3 == 90
    assert out.complete and not out.failed_cells


def test_empty_roster_is_config_error():
    with pytest.raises(ConfigError, match="empty"):
        BenchConfig(models=(), panel="x.npz")
    with pytest.raises(ConfigError, match="empty"):
        config_from_dict({"data": {"synth": [{"n_hours": 10}]}, "models": []})


def test_config_validation():
    with pytest.raises(ConfigError, match="duplicate"):
        BenchConfig(models=(ModelEntry("a", "nlinear"), ModelEntry("a", "dlinear")), panel="x")
    with pytest.raises(ConfigError, match="data source"):
        BenchConfig(models=(ModelEntry("a", "nlinear"),))
    with pytest.raises(ConfigError, match="unknown kind"):
        ModelEntry("a", "lstm")
    with pytest.raises(ConfigError, match="not found"):
        config_from_dict({"data": {"panel": "/nonexistent.npz"}, "models": [{"kind": "nlinear"}]})
    with pytest.raises(ConfigError, match="unknown top-level"):
        config_from_dict({"data": {"synth": [{"n_hours": 10}]}, "models": [{"kind": "nlinear"}], "foo": 1})


def test_toml_config(tmp_path, seasonal_panel_path):
    (tmp_path / "c.toml").write_text(f"""
seed = 5
[data]
panel = "{seasonal_panel_path}"
[plan]
train_len = 800
[train]
max_epochs = 2
[[models]]
kind = "patchtst"
name = "pt"
d_model = 16
""")
    cfg = load_config(tmp_path / "c.toml")
    assert cfg.seed == 5 and cfg.train_len == 800 and cfg.train.max_epochs == 2
    assert cfg.models[0] == ModelEntry("pt", "patchtst", {"d_model": 16})


def test_naive_stub_equals_closed_form(seasonal_panel, seasonal_panel_path):
    out = run_benchmark(short_config(seasonal_panel_path, [ModelEntry("NLinear", "nlinear"), NAIVE],
                                     train=TrainConfig(max_epochs=2)))
    assert out.complete
    plan = make_walk_forward_plan(seasonal_panel.n_hours, **SHORT_PLAN)
    vals = seasonal_panel.values
    n = 0
    for fold in plan.folds:
        for w, win in enumerate(enumerate_eval_windows(plan, fold.index)):
            for j, c in enumerate(seasonal_panel.channels):
                y = vals[win.target_range.start:win.target_range.stop, j]
                rec = out.store.records[("naive", c, fold.index, w)]
                expect = closed_form_naive(y, vals[win.origin - 1, j])
                got = (rec.smape, rec.mae, rec.mse, rec.rmse)
                np.testing.assert_allclose(got, expect, rtol=1e-12, atol=0)
                assert out.store.records[("NLinear", c, fold.index, w)].smape != rec.smape
                n += 1
    assert n == len(plan.folds) * 2 * 3


def test_forecasts_recomputable_without_test_data(tmp_path, seasonal_panel, seasonal_panel_path):
    """Each fold's forecasts follow from its checkpoint, its train-range scaler and the 96-hour context."""
    cfg = short_config(seasonal_panel_path, [ModelEntry("dl", "dlinear")], train=TrainConfig(max_epochs=2))
    out = run_benchmark(cfg, tmp_path)
    plan = make_walk_forward_plan(seasonal_panel.n_hours, **SHORT_PLAN)
    for fold in plan.folds:
        scaler = fit_scaler(seasonal_panel, fold.train)
        with precision(cfg.precision):
            model = build_model("dlinear", 96, 96, 3)
            model.load(tmp_path / "checkpoints" / "dl" / f"fold{fold.index}.gckp")
            for w, win in enumerate(enumerate_eval_windows(plan, fold.index)):
                assert win.context_range.start >= fold.train.stop - 96
                ctx = seasonal_panel.values[win.context_range.start:win.context_range.stop]
                fc = scaler.inverse(model.predict(scaler.forward(ctx)))
                for j, c in enumerate(seasonal_panel.channels):
                    assert np.array_equal(out.store.forecasts[("dl", c, fold.index, w)], fc[:, j])


def test_determinism_bitwise(tmp_path, seasonal_panel_path):
    cfg = short_config(seasonal_panel_path, [ModelEntry("ts", "tsmixer", {"hidden": 16})],
                       train=TrainConfig(max_epochs=2, early_stop_delta=0))
    run_benchmark(cfg, tmp_path / "a")
    run_benchmark(cfg, tmp_path / "b")
    a, b = ResultStore.open(tmp_path / "a"), ResultStore.open(tmp_path / "b")
    assert (tmp_path / "a" / "records.ndjson").read_bytes() == (tmp_path / "b" / "records.ndjson").read_bytes()
    assert a.records == b.records
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()


def test_config_hash_mismatch(tmp_path, seasonal_panel_path):
    cfg = short_config(seasonal_panel_path, [NAIVE], n_folds=1)
    run_benchmark(cfg, tmp_path)
    run_benchmark(cfg.replace(jobs=2), tmp_path)
    with pytest.raises(ConfigError, match="different config"):
        run_benchmark(cfg.replace(seed=1), tmp_path)


def test_failed_cell_recorded_and_run_continues(tmp_path, seasonal_panel_path):
    bad = ModelEntry("bad", "external", command=(sys.executable, "-m", "gridcast.stubs", "fail"))
    out = run_benchmark(short_config(seasonal_panel_path, [bad, NAIVE], n_folds=2), tmp_path)
    assert sorted(out.failed_cells) == [("bad", 0), ("bad", 1)]
    assert "exit status 3" in out.failed_cells[("bad", 0)]
    assert not out.complete
    assert len(out.store.records) == 2 * 2 * 3
    assert json.loads((tmp_path / "meta.json").read_text())["failed_cells"] == ["bad/fold0", "bad/fold1"]


RESUME_TOML = """
seed = 3
[data]
panel = "{panel}"
[plan]
train_len = 800
test_len = 192
n_folds = 4
[train]
max_epochs = 3
early_stop_delta = 0.0
[[models]]
kind = "nlinear"
[[models]]
kind = "dlinear"
[[models]]
kind = "tsmixer"
hidden = 32
"""


def kill_after_first_cell(config_path, run_dir, timeout=60.0):
    proc = subprocess.Popen([sys.executable, "-m", "gridcast.cli", "bench", str(config_path), "-o", str(run_dir)],
                            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    records = run_dir / "records.ndjson"
    deadline = time.monotonic() + timeout
    try:
        while time.monotonic() < deadline:
            if records.exists() and "cell_done" in records.read_text():
                break
            if proc.poll() is not None:
                break
            time.sleep(0.01)
    finally:
        proc.send_signal(signal.SIGKILL)
        proc.wait()
    return proc.returncode


def test_kill_and_resume_equals_uninterrupted(tmp_path, seasonal_panel_path):
    cfg_path = tmp_path / "run.toml"
    cfg_path.write_text(RESUME_TOML.format(panel=seasonal_panel_path))
    cfg = load_config(cfg_path)
    full = run_benchmark(cfg, tmp_path / "full")

    rc = kill_after_first_cell(cfg_path, tmp_path / "resumed")
    assert rc == -signal.SIGKILL, "run finished before it could be interrupted"
    partial = ResultStore.open(tmp_path / "resumed")
    assert 0 < len(partial.done) < 12
    with open(tmp_path / "resumed" / "records.ndjson", "a") as fh:
        fh.write('{"type": "record", "model": "tsmixer", "cou')  # torn write

    resumed = run_benchmark(cfg, tmp_path / "resumed")
    assert resumed.complete
    assert resumed.store.records == full.store.records
    assert all(np.array_equal(resumed.store.forecasts[k], full.store.forecasts[k]) for k in full.store.records)
    assert ((tmp_path / "full" / "records.ndjson").read_bytes()
            == (tmp_path / "resumed" / "records.ndjson").read_bytes())


def test_store_open_ignores_unfinished_cell(tmp_path, seasonal_panel_path):
    cfg = short_config(seasonal_panel_path, [NAIVE], n_folds=2)
    run_benchmark(cfg, tmp_path)
    path = tmp_path / "records.ndjson"
    lines = path.read_text().splitlines(keepends=True)
    last_done = max(i for i, ln in enumerate(lines) if "cell_done" in ln)
    path.write_text("".join(lines[:last_done]))
    store = ResultStore.open(tmp_path)
    assert store.done == {("naive", 0)}
    assert len(store.records) == 2 * 3


def test_panel_path_round_trip(tmp_path, seasonal_panel):
    seasonal_panel.save(tmp_path / "p.npz")
    back = PricePanel.load(tmp_path / "p.npz")
    assert np.array_equal(back.values, seasonal_panel.values) and back.channels == seasonal_panel.channels
