"""Sample autocorrelation and partial autocorrelation for lag selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StatsError


@dataclass(frozen=True, eq=False)
class PacfResult:
    acf: np.ndarray  # lags 0..max_lag
    pacf: np.ndarray  # lags 1..max_lag, pacf[0] is lag 1
    band: float
    n: int

    def significant_lags(self) -> np.ndarray:
        return np.flatnonzero(np.abs(self.pacf) > self.band) + 1


def acf(series, max_lag: int) -> np.ndarray:
    """Autocorrelation with the biased (1/n) autocovariance estimator."""
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    if max_lag < 0 or n <= max_lag:
        raise StatsError(f"max_lag {max_lag} needs at least {max_lag + 1} observations, got {n}")
    d = x - x.mean()
    c0 = d @ d / n
    if not c0 > 0:
        raise StatsError("series has zero variance")
    gamma = np.array([d[: n - k] @ d[k:] for k in range(max_lag + 1)]) / n
    return gamma / gamma[0]


def durbin_levinson(rho: np.ndarray) -> np.ndarray:
    """Partial autocorrelations from autocorrelations ``rho[0..K]`` (rho[0] == 1)."""
    K = len(rho) - 1
    out = np.empty(K)
    phi = np.zeros(K + 1)
    v = 1.0
    for k in range(1, K + 1):
        a = (rho[k] - phi[1:k] @ rho[k - 1:0:-1]) / v
        prev = phi[1:k].copy()
        phi[1:k] = prev - a * prev[::-1]
        phi[k] = a
        v *= 1.0 - a * a
        out[k - 1] = a
    return out


def pacf(series, max_lag: int) -> PacfResult:
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    if not np.all(np.isfinite(x)):
        raise StatsError("series contains non-finite values")
    if max_lag < 1 or n <= max_lag + 1:
        raise StatsError(f"max_lag {max_lag} too large for series of length {n}")
    rho = acf(x, max_lag)
    phis = durbin_levinson(rho)
    phis[0] = rho[1]
    return PacfResult(acf=rho, pacf=phis, band=1.96 / np.sqrt(n), n=n)
