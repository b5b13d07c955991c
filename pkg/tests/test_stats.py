import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridcast.errors import StatsError
from gridcast.stats import acf, pacf


def ols_pacf(x, max_lag):
    """Oracle: last coefficient of a least-squares AR(k) fit on the zero-padded, demeaned lag design."""
    d = np.asarray(x, float) - np.mean(x)
    n = d.size
    out = []
    for k in range(1, max_lag + 1):
        padded = np.concatenate([np.zeros(k), d, np.zeros(k)])
        X = np.column_stack([padded[k - j: k - j + n + k] for j in range(1, k + 1)])
        y = padded[k: k + n + k]
        out.append(np.linalg.lstsq(X, y, rcond=None)[0][-1])
    return np.array(out)


def ar1(n, phi, seed):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=n + 100)
    x = np.zeros(n + 100)
    for t in range(1, n + 100):
        x[t] = phi * x[t - 1] + e[t]
    return x[100:]


def test_ar1_pacf():
    x = ar1(5000, 0.8, 0)
    r = pacf(x, 40)
    assert 0.75 <= r.pacf[0] <= 0.85
    assert np.mean(np.abs(r.pacf[1:40]) <= r.band) >= 0.95
    np.testing.assert_allclose(r.pacf, ols_pacf(x, 40), rtol=0, atol=1e-6)


def test_white_noise_inside_band():
    x = np.random.default_rng(1).normal(size=5000)
    r = pacf(x, 100)
    assert np.mean(np.abs(r.pacf) <= r.band) >= 0.93
    assert r.band == pytest.approx(1.96 / np.sqrt(5000))


def test_constant_series_error():
    with pytest.raises(StatsError, match="zero variance"):
        pacf(np.full(100, 3.0), 10)


def test_too_short():
    with pytest.raises(StatsError):
        pacf(np.arange(5.0), 10)


def test_acf_lag0_and_bounds():
    x = np.random.default_rng(2).normal(size=300)
    a = acf(x, 20)
    assert a[0] == 1.0 and np.all(np.abs(a) <= 1.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), shift=st.floats(-1e3, 1e3), scale=st.floats(0.01, 100))
def test_shift_scale_invariance(seed, shift, scale):
    x = np.random.default_rng(seed).normal(size=400)
    np.testing.assert_allclose(pacf(x * scale + shift, 15).pacf, pacf(x, 15).pacf, rtol=0, atol=1e-9)


def test_significant_lags_ar2():
    rng = np.random.default_rng(3)
    e = rng.normal(size=6000)
    x = np.zeros(6000)
    for t in range(2, 6000):
        x[t] = 0.5 * x[t - 1] + 0.3 * x[t - 2] + e[t]
    lags = pacf(x, 30).significant_lags()
    assert lags[0] == 1 and lags[1] == 2
