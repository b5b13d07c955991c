import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridcast.autodiff import AdamState, Tape, adam_step, mse_loss, precision
from gridcast.errors import ConfigError, ModelError
from gridcast.metrics import smape
from gridcast.models import (DLinear, NLinear, PatchTST, TSMixer, build_model, patch_count, series_decompose)

SMALL_PATCHTST = dict(patch_len=16, patch_stride=8, d_model=16, n_layers=1, n_heads=2, d_ff=32)


def make(kind, C, seed=0, L=96, H=96):
    extra = {"patchtst": SMALL_PATCHTST, "tsmixer": dict(hidden=16)}.get(kind, {})
    return build_model(kind, L, H, C, seed=seed, **extra)


def test_decompose_hand_example():
    trend, seasonal = series_decompose(np.array([1.0, 2.0, 3.0, 4.0]), 3)
    np.testing.assert_allclose(trend, [4 / 3, 2, 3, 11 / 3], atol=1e-12)
    np.testing.assert_allclose(seasonal, [-1 / 3, 0, 0, 1 / 3], atol=1e-12)


def test_decompose_constant_and_identity_kernel():
    x = np.full(30, 7.3)
    t, s = series_decompose(x, 25)
    assert np.array_equal(t, x) and np.all(s == 0)
    y = np.random.default_rng(0).normal(size=(20, 3))
    t, s = series_decompose(y, 1)
    assert np.array_equal(t, y) and np.all(s == 0)


def test_decompose_even_kernel_error():
    with pytest.raises(ModelError):
        series_decompose(np.ones(10), 4)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.sampled_from([3, 5, 25]))
def test_decompose_reconstruction_price_scale(seed, k):
    x = np.random.default_rng(seed).uniform(40, 120, size=(2, 96, 3))
    t, s = series_decompose(x, k)
    assert np.array_equal(t + s, x)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_decompose_reconstruction_arbitrary_within_ulp(seed):
    x = np.random.default_rng(seed).normal(0, 100, size=96)
    t, s = series_decompose(x, 25)
    # one rounding of the larger component
    assert np.all(np.abs((t + s) - x) <= np.spacing(np.maximum(np.abs(t), np.abs(s))))


@pytest.mark.parametrize("kind", ["nlinear", "dlinear", "tsmixer", "patchtst"])
@pytest.mark.parametrize("C", [1, 3, 27])
def test_neural_shape_contract(kind, C):
    m = make(kind, C)
    x = np.random.default_rng(C).normal(size=(2, 96, C))
    assert m.forward(x).shape == (2, 96, C)
    assert m.predict(x[0]).shape == (96, C)


@pytest.mark.parametrize("C", [1, 3, 27])
def test_arima_shape_contract(C):
    rng = np.random.default_rng(C)
    block = 50 + np.cumsum(rng.normal(size=(300, C)), axis=0)
    m = build_model("arima", 96, 96, C, order=(1, 0, 0)).fit(block)
    assert m.predict(block[-96:]).shape == (96, C)


def test_dlinear_zero_weights_output_zero():
    m = DLinear(96, 96, 27)
    m.load_state_dict({k: np.zeros_like(v) for k, v in m.state_dict().items()})
    x = np.random.default_rng(0).normal(size=(2, 96, 27))
    out = m.forward(x)
    assert out.shape == (2, 96, 27) and np.all(out.data == 0)


def test_nlinear_zero_init_is_naive():
    m = NLinear(96, 96, 3)
    m.load_state_dict({k: np.zeros_like(v) for k, v in m.state_dict().items()})
    ctx = np.random.default_rng(0).normal(50, 10, size=(96, 3)).astype(np.float32)
    ctx[-1] = [42.0, -7.5, 0.0]
    out = m.predict(ctx)
    assert np.array_equal(out, np.broadcast_to(ctx[-1], (96, 3)))


def test_nlinear_constant_context_constant_forecast():
    m = NLinear(96, 96, 1, seed=3)
    m.load_state_dict({**m.state_dict(), "linear.bias": np.zeros(96)})
    out = m.predict(np.full((96, 1), 42.0))
    assert np.all(out == 42.0)


def test_patch_count():
    assert patch_count(96, 16, 8) == 11
    assert PatchTST(96, 96, 1, **SMALL_PATCHTST).n_patches == 11
    with pytest.raises(ModelError):
        patch_count(8, 16, 8)
    with pytest.raises(ModelError):
        PatchTST(96, 96, 1, d_model=10, n_heads=3)


def test_patchtst_parameter_count_independent_of_channels():
    counts = {C: PatchTST(96, 96, C, **SMALL_PATCHTST).n_parameters() for C in (1, 3, 27)}
    assert len(set(counts.values())) == 1


@pytest.mark.parametrize("bits", [32, 64])
@pytest.mark.parametrize("kind", ["patchtst", "nlinear", "dlinear"])
def test_channel_permutation_equivariance_bitwise(kind, bits):
    rng = np.random.default_rng(5)
    with precision(bits):
        m = make(kind, 7)
        x = rng.normal(50, 10, size=(2, 96, 7))
        base = m.forward(x).data
        for _ in range(5):
            perm = rng.permutation(7)
            out = m.forward(x[:, :, perm]).data
            assert np.array_equal(out, base[:, :, perm])


def test_tsmixer_rejects_wrong_channel_count():
    m = TSMixer(96, 96, 3, hidden=8)
    with pytest.raises(ModelError):
        m.forward(np.zeros((1, 96, 4)))
    with pytest.raises(ModelError):
        m.forward(np.zeros((1, 95, 3)))


def test_state_round_trip_via_checkpoint(tmp_path):
    a = make("patchtst", 2, seed=1)
    a.save(tmp_path / "m.gckp")
    b = make("patchtst", 2, seed=2)
    b.load(tmp_path / "m.gckp")
    x = np.random.default_rng(0).normal(size=(1, 96, 2))
    assert np.array_equal(a.forward(x).data, b.forward(x).data)


def test_load_state_mismatch():
    m = NLinear(96, 96, 1)
    with pytest.raises(ModelError):
        m.load_state_dict({"linear.weight": np.zeros((96, 96))})
    with pytest.raises(ModelError):
        m.load_state_dict({"linear.weight": np.zeros((96, 24)), "linear.bias": np.zeros(24)})


def test_build_model_errors():
    with pytest.raises(ConfigError):
        build_model("lstm", 96, 96, 1)
    with pytest.raises(ConfigError):
        build_model("nlinear", 96, 96, 1, hidden=3)


def test_seeded_init_deterministic():
    a, b = make("tsmixer", 3, seed=4), make("tsmixer", 3, seed=4)
    assert all(np.array_equal(a.state_dict()[k], b.state_dict()[k]) for k in a.state_dict())


def test_dlinear_learns_sinusoid():
    t = np.arange(1500)
    series = 50 + 10 * np.sin(2 * np.pi * t / 24)
    with precision(64):
        m = DLinear(96, 96, 1, seed=0)
        train = series[:1200]
        starts = np.arange(0, 1200 - 192 + 1)
        state = AdamState(lr=1e-2)
        rng = np.random.default_rng(0)
        for _ in range(200):
            idx = rng.choice(starts, 16)
            x = np.stack([train[s:s + 96] for s in idx])[..., None]
            y = np.stack([train[s + 96:s + 192] for s in idx])[..., None]
            m.zero_grad()
            with Tape() as tape:
                loss = mse_loss(m.forward(x), y)
            tape.backward(loss)
            adam_step(m.parameters(), None, state)
        errs = [smape(series[o:o + 96], m.predict(series[o - 96:o, None])[:, 0]) for o in range(1200, 1404, 24)]
    assert np.mean(errs) < 0.05
