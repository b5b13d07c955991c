"""Black-box forecasters run as child processes over a line-oriented stdin/stdout protocol.

Request (one per channel)::

    GRIDCAST/1 FORECAST
    context_len=<L> horizon=<H>
    <L decimal lines>
    END

Response: ``H`` decimal lines then ``END``; exit status 0.
"""

from __future__ import annotations

import shlex
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, ExternalTimeout, ProtocolError
from .panel import HORIZON

HEADER = "GRIDCAST/1 FORECAST"
TERMINATOR = "END"


@dataclass(frozen=True)
class ExternalForecasterSpec:
    name: str
    command: tuple[str, ...]
    timeout: float = 60.0
    channel_mode: str = "univariate"

    def __post_init__(self):
        cmd = self.command
        if isinstance(cmd, str):
            cmd = tuple(shlex.split(cmd))
        object.__setattr__(self, "command", tuple(cmd))
        if not self.command:
            raise ConfigError(f"external model {self.name!r} has an empty command")
        if not self.timeout > 0:
            raise ConfigError(f"external model {self.name!r} needs timeout > 0")
        if self.channel_mode != "univariate":
            raise ConfigError(f"unsupported channel_mode {self.channel_mode!r}; only 'univariate' is available")


def format_request(context, horizon: int) -> str:
    ctx = np.asarray(context, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(ctx)):
        raise ProtocolError("context contains non-finite values")
    lines = [HEADER, f"context_len={ctx.size} horizon={horizon}", *(repr(float(v)) for v in ctx), TERMINATOR]
    return "\n".join(lines) + "\n"


def parse_request(text: str) -> tuple[np.ndarray, int]:
    lines = text.split("\n")
    if len(lines) < 3 or lines[0].strip() != HEADER:
        raise ProtocolError("request does not start with the protocol header")
    try:
        fields = dict(part.split("=", 1) for part in lines[1].split())
        n, horizon = int(fields["context_len"]), int(fields["horizon"])
    except (KeyError, ValueError) as exc:
        raise ProtocolError(f"bad request parameter line {lines[1]!r}") from exc
    body = lines[2:2 + n]
    if len(body) != n or len(lines) < 3 + n or lines[2 + n].strip() != TERMINATOR:
        raise ProtocolError("request body length does not match context_len")
    return np.array([float(v) for v in body]), horizon


def format_response(values) -> str:
    return "\n".join([*(repr(float(v)) for v in np.asarray(values).reshape(-1)), TERMINATOR]) + "\n"


def parse_response(text: str, horizon: int, channel: str = "?") -> np.ndarray:
    lines = [ln.strip() for ln in text.split("\n")]
    while lines and lines[-1] == "":
        lines.pop()
    if TERMINATOR not in lines:
        raise ProtocolError(f"channel {channel}: response has no {TERMINATOR} line")
    body = lines[:lines.index(TERMINATOR)]
    if len(body) != horizon:
        raise ProtocolError(f"channel {channel}: expected {horizon} values, got {len(body)}")
    try:
        out = np.array([float(v) for v in body])
    except ValueError as exc:
        raise ProtocolError(f"channel {channel}: malformed value in response ({exc})") from exc
    if not np.all(np.isfinite(out)):
        raise ProtocolError(f"channel {channel}: non-finite forecast values")
    return out


def run_child(spec: ExternalForecasterSpec, context, horizon: int, channel: str = "?") -> np.ndarray:
    """One protocol round trip; the child is killed if it overruns the timeout."""
    request = format_request(context, horizon)
    try:
        proc = subprocess.run(list(spec.command), input=request.encode("utf-8"), capture_output=True,
                              timeout=spec.timeout, check=False)
    except subprocess.TimeoutExpired as exc:
        raise ExternalTimeout(f"{spec.name} channel {channel}: no response within {spec.timeout} s") from exc
    except OSError as exc:
        raise ProtocolError(f"{spec.name}: cannot start {spec.command[0]!r}: {exc}") from exc
    if proc.returncode != 0:
        tail = proc.stderr.decode("utf-8", "replace").strip()[-300:]
        raise ProtocolError(f"{spec.name} channel {channel}: exit status {proc.returncode}: {tail}")
    try:
        text = proc.stdout.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtocolError(f"{spec.name} channel {channel}: response is not UTF-8") from exc
    return parse_response(text, horizon, channel)


class ExternalForecaster:
    """Zero-shot model: one child invocation per channel, original price scale."""

    kind = "external"
    univariate = True

    def __init__(self, spec: ExternalForecasterSpec, horizon: int = HORIZON, jobs: int = 1):
        self.spec = spec
        self.horizon = horizon
        self.jobs = max(1, jobs)

    def predict(self, context, channels: Sequence[str] | None = None) -> np.ndarray:
        ctx = np.asarray(context, dtype=np.float64)
        if ctx.ndim == 1:
            ctx = ctx[:, None]
        names = list(channels) if channels is not None else [str(c) for c in range(ctx.shape[1])]
        calls = [(ctx[:, c], names[c]) for c in range(ctx.shape[1])]
        if self.jobs == 1 or len(calls) == 1:
            cols = [run_child(self.spec, col, self.horizon, name) for col, name in calls]
        else:
            with ThreadPoolExecutor(self.jobs) as pool:
                cols = list(pool.map(lambda a: run_child(self.spec, a[0], self.horizon, a[1]), calls))
        return np.column_stack(cols)


def naive_stub_command() -> tuple[str, ...]:
    """Command line of the bundled last-value reference stub."""
    return (sys.executable, "-m", "gridcast.stubs", "naive")


def forecast_external(spec: ExternalForecasterSpec, context, horizon: int = HORIZON,
                      channels: Sequence[str] | None = None) -> np.ndarray:
    return ExternalForecaster(spec, horizon).predict(context, channels)


__all__ = ["ExternalForecaster", "ExternalForecasterSpec", "forecast_external", "format_request",
           "format_response", "naive_stub_command", "parse_request", "parse_response", "run_child"]
