"""Synthetic hourly price-like series: piecewise trend, sinusoidal seasonals, decaying jumps, noise."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import SynthError
from .panel import PricePanel, hourly_index

DEFAULT_START = "2023-09-05T16:00:00Z"


@dataclass(frozen=True)
class JumpSpec:
    rate: float = 0.0  # expected jumps per hour
    magnitude_mean: float = 0.0
    magnitude_std: float = 0.0
    half_life: float = 1.0  # hours


@dataclass(frozen=True)
class SynthSpec:
    n_hours: int
    base_level: float = 0.0
    trend_segments: tuple[tuple[int, float], ...] = ()
    seasonals: tuple[tuple[float, float, float], ...] = ()
    jumps: JumpSpec = field(default_factory=JumpSpec)
    noise_std: float = 0.0
    seed: int = 0
    channel: str = "S0"

    def __post_init__(self):
        object.__setattr__(self, "trend_segments", tuple((int(n), float(s)) for n, s in self.trend_segments))
        object.__setattr__(self, "seasonals", tuple(tuple(float(v) for v in s) for s in self.seasonals))
        if isinstance(self.jumps, dict):
            object.__setattr__(self, "jumps", JumpSpec(**self.jumps))
        self.validate()

    def validate(self) -> None:
        if self.n_hours < 1:
            raise SynthError(f"n_hours must be >= 1, got {self.n_hours}")
        if self.noise_std < 0:
            raise SynthError("noise_std must be >= 0")
        for seg in self.trend_segments:
            if seg[0] < 1:
                raise SynthError(f"trend segment length must be >= 1, got {seg[0]}")
        for s in self.seasonals:
            if len(s) != 3:
                raise SynthError("seasonal components are (period, amplitude, phase)")
            if s[0] < 2:
                raise SynthError(f"seasonal period must be >= 2, got {s[0]}")
        j = self.jumps
        if j.rate < 0 or j.magnitude_std < 0 or j.half_life <= 0:
            raise SynthError("jump rate and magnitude_std must be >= 0, half_life > 0")
        if not 0 <= self.seed < 2**64:
            raise SynthError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["trend_segments"] = [list(s) for s in self.trend_segments]
        d["seasonals"] = [list(s) for s in self.seasonals]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SynthSpec:
        d = dict(d)
        if "jumps" in d and isinstance(d["jumps"], dict):
            d["jumps"] = JumpSpec(**d["jumps"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise SynthError(str(exc)) from None


def _trend(spec: SynthSpec) -> np.ndarray:
    """Cumulative piecewise-linear trend; segments are cycled when shorter than the series."""
    n = spec.n_hours
    if not spec.trend_segments:
        return np.zeros(n)
    slopes = np.empty(n)
    pos = 0
    while pos < n:
        for length, slope in spec.trend_segments:
            end = min(pos + length, n)
            slopes[pos:end] = slope
            pos = end
            if pos >= n:
                break
    # value(0) carries no trend; the increment into hour t uses the slope active at t-1
    out = np.zeros(n)
    out[1:] = np.cumsum(slopes[:-1])
    return out


def closed_form(spec: SynthSpec) -> np.ndarray:
    """Deterministic part of the series (base + trend + seasonals)."""
    t = np.arange(spec.n_hours, dtype=np.float64)
    y = np.full(spec.n_hours, spec.base_level, dtype=np.float64) + _trend(spec)
    for period, amplitude, phase in spec.seasonals:
        y += amplitude * np.sin(2.0 * np.pi * t / period + phase)
    return y


def generate_series(spec: SynthSpec) -> np.ndarray:
    y = closed_form(spec)
    rng = np.random.default_rng(spec.seed)
    n = spec.n_hours
    j = spec.jumps
    if j.rate > 0:
        arrivals = rng.poisson(j.rate, size=n)
        impulses = np.zeros(n)
        for i in np.flatnonzero(arrivals):
            impulses[i] = rng.normal(j.magnitude_mean, j.magnitude_std, size=arrivals[i]).sum()
        decay = 0.5 ** (1.0 / j.half_life)
        y += lfilter([1.0], [1.0, -decay], impulses)
    if spec.noise_std > 0:
        y += rng.normal(0.0, spec.noise_std, size=n)
    return y


def generate_panel(specs: Sequence[SynthSpec], start: str = DEFAULT_START) -> PricePanel:
    if not specs:
        raise SynthError("need at least one series spec")
    lengths = {s.n_hours for s in specs}
    if len(lengths) != 1:
        raise SynthError(f"all series must share n_hours, got {sorted(lengths)}")
    values = np.column_stack([generate_series(s) for s in specs])
    channels = tuple(s.channel for s in specs)
    return PricePanel(hourly_index(start, specs[0].n_hours), channels, values, provenance="synthetic")


def load_specs(doc: dict[str, Any]) -> tuple[list[SynthSpec], str]:
    """Read ``[[series]]`` tables (plus optional top-level ``start``) from a parsed config document."""
    series = doc.get("series")
    if not series:
        raise SynthError("synthetic config needs at least one [[series]] table")
    return [SynthSpec.from_dict(s) for s in series], doc.get("start", DEFAULT_START)
