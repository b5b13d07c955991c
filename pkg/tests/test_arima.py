import json

import numpy as np
import pytest
import scipy.optimize

from conftest import ar2_series
from gridcast.errors import ModelError
from gridcast.models import ArimaConfig, ArimaForecaster, ArimaModel, ArimaOrder, fit_arima, forecast_arima, select_order
from gridcast.models.arima import _css_and_grad, css_residuals, make_invertible


def simulate_arma(n, ar=(), ma=(), seed=0, burn=200):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=n + burn)
    x = np.zeros(n + burn)
    for t in range(n + burn):
        x[t] = e[t] + sum(a * x[t - i - 1] for i, a in enumerate(ar) if t - i - 1 >= 0) \
            + sum(b * e[t - j - 1] for j, b in enumerate(ma) if t - j - 1 >= 0)
    return x[burn:]


def test_random_walk_order_has_no_parameters():
    x = np.cumsum(np.random.default_rng(0).normal(size=300))
    m = fit_arima(x, (0, 1, 0))
    assert m.ar.size == 0 and m.ma.size == 0 and m.intercept == 0.0
    ctx = np.r_[np.random.default_rng(1).normal(size=95), 42.0]
    assert np.all(forecast_arima(m, ctx, 96) == 42.0)


def test_ar1_matches_yule_walker():
    x = simulate_arma(2000, ar=(0.8,), seed=1)
    m = fit_arima(x, (1, 0, 0))
    d = x - x.mean()
    yw = (d[1:] @ d[:-1]) / (d @ d)
    assert 0.75 <= m.ar[0] <= 0.85
    assert abs(m.ar[0] - yw) <= 0.02


def test_ma1_matches_css_grid_search():
    x = simulate_arma(2000, ma=(0.5,), seed=2)
    m = fit_arima(x, (0, 0, 1), ArimaConfig(include_intercept=False))
    grid = np.linspace(-0.95, 0.95, 1901)
    css = [float(np.sum(css_residuals(x, [], [th]) ** 2)) for th in grid]
    theta_grid = grid[int(np.argmin(css))]
    assert 0.4 <= m.ma[0] <= 0.6
    assert abs(m.ma[0] - theta_grid) <= 1e-3


def test_ar1_closed_form_forecast():
    m = ArimaModel(ArimaOrder(1, 0, 0), np.array([0.5]), np.zeros(0), 0.0)
    out = forecast_arima(m, np.array([3.0, 1.0, 8.0]), 6)
    assert out.tolist() == [4.0, 2.0, 1.0, 0.5, 0.25, 0.125]


def test_fitted_ar1_mean_reversion():
    x = 60 + simulate_arma(3000, ar=(0.7,), seed=3) * 4
    m = fit_arima(x, (1, 0, 0))
    mean = m.intercept / (1 - m.ar[0])
    out = forecast_arima(m, x[-96:], 96)
    assert abs(out[-1] - mean) <= 0.01 * abs(mean)
    assert abs(mean - x.mean()) <= 0.05 * abs(x.mean())


def test_analytic_gradient_matches_scipy():
    x = np.diff(ar2_series(500, seed=4))
    theta = np.array([0.3, -0.1, 0.2, 0.1])
    err = scipy.optimize.check_grad(lambda t: _css_and_grad(t, x, 2, 2, False)[0],
                                    lambda t: _css_and_grad(t, x, 2, 2, False)[1], theta)
    assert err < 1e-5


def test_make_invertible_reflects_roots():
    ma, flipped = make_invertible(np.array([2.0]))
    assert flipped and ma[0] == pytest.approx(0.5)
    ma, flipped = make_invertible(np.array([0.3]))
    assert not flipped and ma[0] == 0.3


def test_default_order_fit_and_serialisation():
    x = ar2_series(2000, seed=5)
    f = ArimaForecaster((2, 1, 2), horizon=96).fit(np.column_stack([x, x[::-1]]))
    doc = json.loads(f.to_json())
    assert len(doc) == 2 and doc[0]["order"] == [2, 1, 2]
    back = ArimaModel.from_json(json.dumps(doc[0]))
    np.testing.assert_array_equal(forecast_arima(back, x[-96:]), f.predict(np.column_stack([x, x[::-1]])[-96:])[:, 0])


def test_errors():
    with pytest.raises(ModelError):
        ArimaOrder(-1, 0, 0)
    with pytest.raises(ModelError):
        ArimaOrder(0, 0, 0)
    with pytest.raises(ModelError, match="too short"):
        fit_arima(np.arange(10.0), (2, 1, 2))
    with pytest.raises(ModelError):
        fit_arima(np.r_[np.arange(50.0), np.nan], (1, 0, 0))
    m = ArimaModel(ArimaOrder(2, 1, 0), np.array([0.1, 0.1]), np.zeros(0))
    with pytest.raises(ModelError):
        forecast_arima(m, np.array([1.0, 2.0]), 4)


def test_select_order_prefers_true_structure():
    x = simulate_arma(1500, ar=(0.6,), seed=6)
    m = select_order(x, p_values=range(3), d_values=(0,), q_values=range(2))
    assert m.order.p >= 1


def test_arima_beats_naive_on_ar2():
    from gridcast.metrics import smape
    x = ar2_series(6000, seed=7)
    m = fit_arima(x[:2000], (2, 1, 2))
    ours, naive = [], []
    for o in range(2096, 6000 - 96, 24):
        ours.append(smape(x[o:o + 96], forecast_arima(m, x[o - 96:o], 96)))
        naive.append(smape(x[o:o + 96], np.full(96, x[o - 1])))
    assert np.mean(ours) < np.mean(naive)
