"""ARIMA(p, d, q) by conditional sum of squares, with recursive multi-step forecasts.

The model on the ``d``-times differenced series ``w`` is

    w_t = c + sum_i phi_i w_{t-i} + e_t + sum_j theta_j e_{t-j}

with residuals before the first usable step (``t < p``) taken as zero.
The intercept ``c`` is only estimated when ``d == 0``.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from ..errors import ModelError
from ..panel import HORIZON

INVERTIBILITY_TOL = 1e-6


@dataclass(frozen=True)
class ArimaOrder:
    p: int = 2
    d: int = 1
    q: int = 2

    def __post_init__(self):
        if min(self.p, self.d, self.q) < 0:
            raise ModelError(f"ARIMA orders must be >= 0, got {self.as_tuple()}")
        if self.p + self.q < 1 and self.d < 1:
            raise ModelError("ARIMA(0,0,0) has nothing to model; need p + q >= 1 or d >= 1")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.p, self.d, self.q)


@dataclass(frozen=True)
class ArimaConfig:
    max_iter: int = 500
    tol: float = 1e-10
    include_intercept: bool = True  # only honoured when d == 0


@dataclass
class ArimaModel:
    order: ArimaOrder
    ar: np.ndarray
    ma: np.ndarray
    intercept: float = 0.0
    sigma2: float = float("nan")
    converged: bool = True
    status: str = "ok"
    n_iter: int = 0
    css: float = float("nan")
    n_obs: int = 0
    reflected: bool = field(default=False)

    def to_dict(self) -> dict:
        return {"order": list(self.order.as_tuple()), "ar": [float(v) for v in self.ar],
                "ma": [float(v) for v in self.ma], "intercept": float(self.intercept),
                "sigma2": float(self.sigma2), "converged": self.converged, "status": self.status}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> ArimaModel:
        order = ArimaOrder(*doc["order"])
        ar, ma = np.asarray(doc["ar"], float), np.asarray(doc["ma"], float)
        if ar.shape != (order.p,) or ma.shape != (order.q,):
            raise ModelError("coefficient counts do not match the order")
        return cls(order, ar, ma, float(doc.get("intercept", 0.0)), float(doc.get("sigma2", "nan")),
                   bool(doc.get("converged", True)), str(doc.get("status", "ok")))

    @classmethod
    def from_json(cls, text: str) -> ArimaModel:
        return cls.from_dict(json.loads(text))

    @property
    def aic(self) -> float:
        k = self.order.p + self.order.q + (1 if self.intercept != 0.0 else 0)
        n = self.n_obs
        return n * np.log(self.css / n) + 2 * k if n else float("nan")


def difference(x: np.ndarray, d: int) -> np.ndarray:
    for _ in range(d):
        x = np.diff(x)
    return x


def _lagged(w: np.ndarray, p: int) -> np.ndarray:
    """Design matrix with column ``i`` holding ``w_{t-i-1}`` for ``t = p .. n-1``."""
    n = w.size
    return np.column_stack([w[p - i - 1:n - i - 1] for i in range(p)]) if p else np.zeros((n - p, 0))


def css_residuals(w: np.ndarray, ar, ma, intercept: float = 0.0) -> np.ndarray:
    """Residuals ``e_t`` for ``t = p .. n-1`` of the ARMA recursion on ``w``."""
    ar, ma = np.asarray(ar, float), np.asarray(ma, float)
    p = ar.size
    u = w[p:] - intercept - (_lagged(w, p) @ ar if p else 0.0)
    return lfilter([1.0], np.r_[1.0, ma], u) if ma.size else u


def _css_and_grad(theta: np.ndarray, w: np.ndarray, p: int, q: int, with_c: bool):
    ar, ma = theta[:p], theta[p:p + q]
    c = theta[p + q] if with_c else 0.0
    X = _lagged(w, p)
    u = w[p:] - c - (X @ ar if p else 0.0)
    den = np.r_[1.0, ma]
    e = lfilter([1.0], den, u)
    n = e.size
    css = float(e @ e) / n
    if not np.isfinite(css):
        return 1e100, np.zeros_like(theta)
    grad = np.empty_like(theta)
    # every partial derivative of e obeys the same MA filter driven by -(regressor)
    for i in range(p):
        grad[i] = 2 * e @ lfilter([1.0], den, -X[:, i]) / n
    for j in range(q):
        lag = np.r_[np.zeros(j + 1), e[:n - j - 1]]
        grad[p + j] = 2 * e @ lfilter([1.0], den, -lag) / n
    if with_c:
        grad[p + q] = 2 * e @ lfilter([1.0], den, -np.ones(n)) / n
    if not np.all(np.isfinite(grad)):
        return 1e100, np.zeros_like(theta)
    return css, grad


def make_invertible(ma: np.ndarray, tol: float = INVERTIBILITY_TOL) -> tuple[np.ndarray, bool]:
    """Reflect roots of ``1 + sum theta_j z^j`` lying inside the unit circle to ``1 / conj(z)``."""
    ma = np.asarray(ma, float)
    if ma.size == 0 or not np.any(ma):
        return ma, False
    roots = np.roots(np.r_[ma[::-1], 1.0])
    inside = np.abs(roots) < 1.0 - tol
    if not np.any(inside):
        return ma, False
    roots = np.where(inside, 1.0 / np.conj(roots), roots)
    poly = np.real(np.poly(roots))  # monic, highest power first
    poly = poly[::-1] / poly[-1]    # constant term 1
    return poly[1:], True


def fit_arima(series, order: ArimaOrder | tuple = ArimaOrder(), config: ArimaConfig = ArimaConfig()) -> ArimaModel:
    """Minimise the conditional sum of squares with quasi-Newton steps on the analytic gradient."""
    order = order if isinstance(order, ArimaOrder) else ArimaOrder(*order)
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ModelError("ARIMA is univariate; pass a 1-D series")
    p, d, q = order.as_tuple()
    if x.size <= p + d + q + 10:
        raise ModelError(f"series of length {x.size} too short for ARIMA{order.as_tuple()}")
    if not np.all(np.isfinite(x)):
        raise ModelError("series contains non-finite values")
    w = difference(x, d)
    with_c = config.include_intercept and d == 0
    if p + q + with_c == 0:
        e = w[p:]
        return ArimaModel(order, np.zeros(0), np.zeros(0), 0.0, float(e @ e / e.size), css=float(e @ e),
                          n_obs=e.size)
    theta0 = np.zeros(p + q + with_c)
    if with_c:
        theta0[-1] = w.mean()
    with np.errstate(over="ignore", invalid="ignore"):
        res = minimize(_css_and_grad, theta0, args=(w, p, q, with_c), jac=True, method="L-BFGS-B",
                       options={"maxiter": config.max_iter, "ftol": config.tol, "gtol": 1e-9})
    theta = res.x
    ar, ma = theta[:p].copy(), theta[p:p + q].copy()
    c = float(theta[p + q]) if with_c else 0.0
    ma, reflected = make_invertible(ma)
    e = css_residuals(w, ar, ma, c)
    css = float(e @ e)
    converged = bool(res.success)
    status = "ok" if converged else f"not converged: {res.message}"
    if not converged:
        warnings.warn(f"ARIMA{order.as_tuple()} CSS fit stopped early ({res.message}); using best iterate",
                      RuntimeWarning, stacklevel=2)
    return ArimaModel(order, ar, ma, c, css / e.size, converged, status, int(res.nit), css, e.size, reflected)


def select_order(series, p_values=range(4), d_values=(0, 1), q_values=range(4),
                 config: ArimaConfig = ArimaConfig()) -> ArimaModel:
    """Fit every admissible order in the grid and keep the lowest AIC."""
    best = None
    for p, d, q in itertools.product(p_values, d_values, q_values):
        if p + q < 1 and d < 1:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            m = fit_arima(series, ArimaOrder(p, d, q), config)
        if best is None or m.aic < best.aic:
            best = m
    return best


def forecast_arima(model: ArimaModel, context, horizon: int = HORIZON) -> np.ndarray:
    """Recursive forecast on the differenced scale with future shocks at zero, then undifference."""
    x = np.asarray(context, dtype=float)
    p, d, q = model.order.as_tuple()
    if x.ndim != 1:
        raise ModelError("ARIMA context must be 1-D")
    if x.size < p + d or x.size < 1:
        raise ModelError(f"context of length {x.size} shorter than required lags p + d = {p + d}")
    levels = [x]
    for _ in range(d):
        levels.append(np.diff(levels[-1]))
    w = levels[-1]
    e = css_residuals(w, model.ar, model.ma, model.intercept) if w.size > p else np.zeros(0)
    hist_w = list(w[w.size - p:]) if p else []
    hist_e = list(np.r_[np.zeros(max(q - e.size, 0)), e[max(e.size - q, 0):]]) if q else []
    out = np.empty(horizon)
    for h in range(horizon):
        val = model.intercept
        for i in range(p):
            val += model.ar[i] * hist_w[-1 - i]
        for j in range(q):
            val += model.ma[j] * hist_e[-1 - j]
        out[h] = val
        if p:
            hist_w.append(val)
        if q:
            hist_e.append(0.0)
    for k in range(d, 0, -1):
        out = levels[k - 1][-1] + np.cumsum(out)
    return out


class ArimaForecaster:
    """Univariate ARIMA fitted independently per channel; refit rather than warm-started."""

    kind = "arima"
    univariate = True

    def __init__(self, order: ArimaOrder | tuple = ArimaOrder(), horizon: int = HORIZON, auto: bool = False,
                 config: ArimaConfig = ArimaConfig()):
        self.order = order if isinstance(order, ArimaOrder) else ArimaOrder(*order)
        self.horizon = horizon
        self.auto = auto
        self.config = config
        self.models: list[ArimaModel] = []

    def fit(self, block: np.ndarray) -> ArimaForecaster:
        """Fit one model per column of a ``[T, C]`` block of raw prices."""
        block = np.asarray(block, float)
        if block.ndim == 1:
            block = block[:, None]
        self.models = [select_order(block[:, c], config=self.config) if self.auto
                       else fit_arima(block[:, c], self.order, self.config) for c in range(block.shape[1])]
        return self

    def predict(self, context: np.ndarray) -> np.ndarray:
        ctx = np.asarray(context, float)
        if ctx.ndim == 1:
            ctx = ctx[:, None]
        if ctx.shape[1] != len(self.models):
            raise ModelError(f"fitted for {len(self.models)} channels, context has {ctx.shape[1]}")
        return np.column_stack([forecast_arima(m, ctx[:, c], self.horizon) for c, m in enumerate(self.models)])

    def to_json(self) -> str:
        return json.dumps([m.to_dict() for m in self.models], sort_keys=True)
