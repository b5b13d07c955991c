import numpy as np
import pytest

import gridcast.bench
from gridcast.autodiff import checkpoint, precision
from gridcast.bench import BenchConfig, ModelEntry, run_benchmark
from gridcast.errors import ConfigError, ModelError, TrainingError
from gridcast.models import (EarlyStopping, NLinear, TrainConfig, TrainingWindows, build_model, train_model,
                             warm_start)


def scripted_epochs(losses, delta, max_epochs=10, min_epochs=1):
    stopper = EarlyStopping(delta, min_epochs, max_epochs)
    recorded = []
    for loss in losses:
        recorded.append(loss)
        if stopper.update(loss):
            break
    return recorded, stopper.triggered


def test_scripted_sequence_stops_at_rule():
    recorded, triggered = scripted_epochs([1.00, 0.50, 0.495, 0.1, 0.05], 0.01)
    assert recorded == [1.00, 0.50, 0.495] and triggered


def test_delta_zero_runs_max_epochs():
    recorded, triggered = scripted_epochs([1.0] * 20, 0.0, max_epochs=7)
    assert len(recorded) == 7 and not triggered


def test_min_epochs_defers_rule():
    recorded, _ = scripted_epochs([1.0, 1.0, 1.0, 1.0, 1.0], 0.01, min_epochs=4)
    assert len(recorded) == 4


def test_reference_allows_first_epoch_stop():
    s = EarlyStopping(0.01, reference=0.3)
    assert s.update(0.295) and s.triggered


def test_windows_stride_one():
    block = np.arange(30.0).reshape(15, 2)
    w = TrainingWindows(block, 4, 3)
    assert len(w) == 15 - 7 + 1
    x, y = w.batch(np.array([0, 5]))
    assert x.shape == (2, 4, 2) and y.shape == (2, 3, 2)
    assert np.array_equal(x[1], block[5:9]) and np.array_equal(y[1], block[9:12])
    with pytest.raises(TrainingError):
        TrainingWindows(block[:6], 4, 3)


def test_nlinear_constant_data_stops_at_min_epochs():
    with precision(64):
        m = NLinear(96, 96, 2, seed=0)
        m.load_state_dict({k: np.zeros_like(v) for k, v in m.state_dict().items()})
        res = train_model(m, TrainingWindows(np.full((400, 2), 0.7), 96, 96), TrainConfig(max_epochs=10))
    assert res.epochs_run == 1 and res.stopped_early
    assert res.history[0] < 1e-12


def test_training_deterministic_given_seed():
    block = np.random.default_rng(0).normal(size=(300, 2))

    def run():
        m = build_model("dlinear", 24, 12, 2, seed=1)
        res = train_model(m, TrainingWindows(block, 24, 12), TrainConfig(max_epochs=3, early_stop_delta=0, seed=4))
        return res.history, m.state_dict()

    (h1, s1), (h2, s2) = run(), run()
    assert h1 == h2 and all(np.array_equal(s1[k], s2[k]) for k in s1)


def test_divergence_reports_epoch_and_batch():
    m = build_model("nlinear", 8, 4, 1, seed=0)
    block = np.random.default_rng(0).normal(size=(50, 1)) * 1e15
    with np.errstate(all="ignore"), pytest.raises(TrainingError, match=r"diverged .* epoch 1, batch \d"):
        train_model(m, TrainingWindows(block, 8, 4), TrainConfig(max_epochs=5, lr=1e10))


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(max_epochs=1, min_epochs=2)
    with pytest.raises(ConfigError):
        TrainConfig(early_stop_delta=-1)


def test_warm_start_copy_semantics():
    src = build_model("tsmixer", 96, 96, 3, seed=1, hidden=8)
    dst = warm_start(build_model("tsmixer", 96, 96, 3, seed=2, hidden=8), src)
    x = np.random.default_rng(0).normal(size=(2, 96, 3))
    assert np.array_equal(dst.forward(x).data, src.forward(x).data)


def test_warm_start_rejections():
    arima = build_model("arima", 96, 96, 1)
    with pytest.raises(ModelError):
        warm_start(arima, arima)
    with pytest.raises(ModelError):
        warm_start(build_model("nlinear", 96, 96, 1), build_model("nlinear", 96, 96, 2))
    with pytest.raises(ModelError):
        train_model(arima, TrainingWindows(np.zeros((300, 1)), 96, 96))


def test_non_finite_initial_loss():
    block = np.random.default_rng(0).normal(size=(50, 1))
    block[20] = np.nan
    with pytest.raises(TrainingError, match="initial loss"):
        train_model(build_model("nlinear", 8, 4, 1), TrainingWindows(block, 8, 4))


def test_fold_chain_checkpoint_diff(tmp_path, monkeypatch, seasonal_panel_path):
    entering = {}
    real = gridcast.bench.warm_start

    def spy(model, prev):
        out = real(model, prev)
        entering[len(entering) + 1] = out.state_dict()
        return out

    monkeypatch.setattr(gridcast.bench, "warm_start", spy)
    cfg = BenchConfig(models=(ModelEntry("dl", "dlinear"),), panel=seasonal_panel_path,
                      train_len=400, test_len=192, n_folds=3, train=TrainConfig(max_epochs=2))
    run_benchmark(cfg, tmp_path)
    assert sorted(entering) == [1, 2]
    for k, state in entering.items():
        leaving = checkpoint.load(tmp_path / "checkpoints" / "dl" / f"fold{k - 1}.gckp")
        assert list(leaving) == list(state)
        assert all(np.array_equal(leaving[n], state[n]) for n in state)
