"""Long-format hourly price CSV parsing, gap repair and CSV export."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import IngestError, PanelError
from .panel import PricePanel, _to_utc_seconds, build_panel

GapPolicy = Literal["error", "forward_fill", "linear_interpolate"]
GAP_POLICIES = ("error", "forward_fill", "linear_interpolate")

# Country names used by the Ember wholesale price export, mapped to ISO 3166-1 alpha-2.
COUNTRY_CODES = {
    "Austria": "AT", "Belgium": "BE", "Bulgaria": "BG", "Croatia": "HR",
    "Czechia": "CZ", "Czech Republic": "CZ", "Denmark": "DK", "Estonia": "EE",
    "Finland": "FI", "France": "FR", "Germany": "DE", "Greece": "GR",
    "Hungary": "HU", "Ireland": "IE", "Italy": "IT", "Latvia": "LV",
    "Lithuania": "LT", "Luxembourg": "LU", "Netherlands": "NL", "North Macedonia": "MK",
    "Norway": "NO", "Poland": "PL", "Portugal": "PT", "Romania": "RO",
    "Serbia": "RS", "Slovakia": "SK", "Slovenia": "SI", "Spain": "ES",
    "Sweden": "SE", "Switzerland": "CH",
}


def country_code(name: str) -> str:
    """Map a country name to its alpha-2 code; codes and unknown names pass through."""
    name = name.strip()
    return COUNTRY_CODES.get(name, name)


@dataclass(frozen=True)
class IngestOptions:
    datetime_column: str = "datetime"
    country_column: str = "country"
    price_column: str = "price"
    gap_policy: GapPolicy = "error"
    time_range: tuple[str, str] | None = None
    country_filter: Sequence[str] | None = None
    map_country_names: bool = True

    def __post_init__(self):
        if self.gap_policy not in GAP_POLICIES:
            raise IngestError(f"gap_policy must be one of {GAP_POLICIES}, got {self.gap_policy!r}")


def parse_price_csv(data: bytes | str, options: IngestOptions | None = None, provenance: str = "") -> PricePanel:
    """Parse a long-format CSV (one row per hour and country) into a panel.

    Rows outside ``time_range`` (half-open, UTC) or ``country_filter`` are
    dropped before gap repair. Errors name the 1-based line number.
    """
    options = options or IngestOptions()
    text = data.decode("utf-8-sig") if isinstance(data, bytes) else data
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise IngestError("CSV is empty or has no header row")
    header = [h.strip() for h in reader.fieldnames]
    reader.fieldnames = header
    for col in (options.datetime_column, options.country_column, options.price_column):
        if col not in header:
            raise IngestError(f"missing required column {col!r}; header is {header}")

    lo = hi = None
    if options.time_range is not None:
        lo = _to_utc_seconds(options.time_range[0])[0]
        hi = _to_utc_seconds(options.time_range[1])[0]
    wanted = None
    if options.country_filter:
        wanted = {country_code(c) if options.map_country_names else c for c in options.country_filter}

    records = []
    for row in reader:
        line = reader.line_num
        raw_ts = row[options.datetime_column]
        try:
            t64, aware = _to_utc_seconds(raw_ts)
        except PanelError:
            raise IngestError(f"line {line}: unparseable datetime {raw_ts!r}") from None
        raw_price = (row[options.price_column] or "").strip()
        try:
            price = float(raw_price)
        except ValueError:
            raise IngestError(f"line {line}: unparseable price {raw_price!r}") from None
        if not np.isfinite(price):
            raise IngestError(f"line {line}: non-finite price {raw_price!r}")
        country = row[options.country_column].strip()
        if options.map_country_names:
            country = country_code(country)
        if wanted is not None and country not in wanted:
            continue
        if lo is not None and not (lo <= t64 < hi):
            continue
        records.append((raw_ts if aware else t64, country, price))
    if not records:
        raise IngestError("no rows left after filtering")
    try:
        panel = build_panel(records, provenance=provenance)
    except PanelError as exc:
        raise IngestError(str(exc)) from None
    return repair_gaps(panel, options.gap_policy)[0]


def repair_gaps(panel: PricePanel, policy: GapPolicy = "error") -> tuple[PricePanel, int]:
    """Fill NaN cells per ``policy``; returns the repaired panel and the number of cells filled."""
    if policy not in GAP_POLICIES:
        raise IngestError(f"unknown gap policy {policy!r}")
    mask = panel.gap_mask
    n_gaps = int(mask.sum())
    if n_gaps == 0:
        return panel, 0
    if policy == "error":
        first = np.argwhere(mask)[0]
        raise IngestError(
            f"{n_gaps} missing cell(s); first at {panel.timestamps[first[0]]}Z channel {panel.channels[first[1]]}"
        )
    values = panel.values.copy()
    for j, channel in enumerate(panel.channels):
        col = values[:, j]
        bad = mask[:, j]
        if not bad.any():
            continue
        if bad[0]:
            raise IngestError(f"leading gap in channel {channel} has no predecessor to fill from")
        good = np.flatnonzero(~bad)
        if policy == "forward_fill":
            last_good = np.maximum.accumulate(np.where(bad, 0, np.arange(len(col))))
            values[:, j] = col[last_good]
        else:
            if bad[-1]:
                raise IngestError(f"trailing gap in channel {channel} cannot be interpolated")
            missing = np.flatnonzero(bad)
            values[missing, j] = np.interp(missing, good, col[good])
    return PricePanel(panel.timestamps, panel.channels, values, panel.provenance), n_gaps


def _format_ts(t64: np.datetime64) -> str:
    return str(t64.astype("datetime64[s]")) + "Z"


def serialize_price_csv(panel: PricePanel, options: IngestOptions | None = None) -> str:
    """Long-format export; ``parse_price_csv`` of the result reproduces a gap-free panel."""
    options = options or IngestOptions()
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([options.datetime_column, options.country_column, options.price_column])
    for i, t in enumerate(panel.timestamps):
        stamp = _format_ts(t)
        for j, channel in enumerate(panel.channels):
            v = panel.values[i, j]
            if np.isfinite(v):
                writer.writerow([stamp, channel, repr(float(v))])
    return out.getvalue()


def to_wide_csv(panel: PricePanel) -> str:
    """One row per hour, one column per channel; for inspection only."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["datetime", *panel.channels])
    for i, t in enumerate(panel.timestamps):
        writer.writerow([_format_ts(t), *("" if not np.isfinite(v) else repr(float(v)) for v in panel.values[i])])
    return out.getvalue()
