"""Command-line entry point: ``gridcast <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 partial benchmark
failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
import zipfile
from pathlib import Path

import tomli

from .autodiff import set_default_precision
from .bench import ResultStore, load_config, run_benchmark
from .errors import ConfigError, GridcastError
from .ingest import GAP_POLICIES, IngestOptions, parse_price_csv
from .metrics import MetricSet, performance_indicator
from .panel import PricePanel
from .ranking import ScoreTable, pairwise_vs_best, rank_models
from .reports import REPORT_KINDS, emit_report, fmt
from .stats import pacf
from .synth import generate_panel, load_specs

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("gridcast")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_range(text: str) -> tuple[str, str]:
    if ".." not in text:
        raise argparse.ArgumentTypeError("range must look like START..END")
    a, b = text.split("..", 1)
    return a.strip(), b.strip()


def cmd_ingest(args) -> int:
    opts = IngestOptions(gap_policy=args.fill, time_range=args.range,
                         country_filter=args.countries.split(",") if args.countries else None,
                         datetime_column=args.datetime_column, country_column=args.country_column,
                         price_column=args.price_column)
    panel = parse_price_csv(Path(args.csv).read_bytes(), opts, provenance=str(args.csv))
    panel.save(args.output)
    print(f"{panel.n_hours} hours x {panel.n_channels} channels -> {args.output}")
    return EXIT_OK


def cmd_synth(args) -> int:
    with open(args.spec, "rb") as fh:
        doc = tomli.load(fh)
    specs, start = load_specs(doc)
    if args.seed is not None:
        specs = [type(s).from_dict({**s.to_dict(), "seed": s.seed + args.seed}) for s in specs]
    panel = generate_panel(specs, start)
    panel.save(args.output)
    print(f"{panel.n_hours} hours x {panel.n_channels} channels -> {args.output}")
    return EXIT_OK


def cmd_pacf(args) -> int:
    panel = PricePanel.load(args.panel)
    res = pacf(panel.column(args.channel), args.max_lag)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lag", "acf", "pacf", "band", "significant"])
    for lag in range(1, args.max_lag + 1):
        v = res.pacf[lag - 1]
        w.writerow([lag, fmt(res.acf[lag]), fmt(v), fmt(res.band), int(abs(v) > res.band)])
    _write_or_print(buf.getvalue(), args.output)
    return EXIT_OK


def cmd_bench(args) -> int:
    config = load_config(args.config)
    overrides = {k: v for k, v in (("seed", args.seed), ("jobs", args.jobs), ("precision", args.precision))
                 if v is not None}
    if overrides:
        config = config.replace(**overrides)
    outcome = run_benchmark(config, args.output)
    n_missing = len(outcome.expected - set(outcome.store.records))
    print(f"{len(outcome.store.records)} records in {args.output}; {n_missing} missing; "
          f"{len(outcome.failed_cells)} failed cell(s)")
    for (model, fold), msg in sorted(outcome.failed_cells.items()):
        print(f"  {model} fold {fold}: {msg}", file=sys.stderr)
    return EXIT_OK if outcome.complete else EXIT_PARTIAL


def cmd_report(args) -> int:
    store = ResultStore.open(args.rundir)
    kinds = REPORT_KINDS if args.kind == "all" else (args.kind,)
    out = args.output or Path(args.rundir) / "reports"
    for kind in kinds:
        for name in emit_report(store, kind, out):
            print(Path(out) / name)
    return EXIT_OK


def cmd_rank(args) -> int:
    """Rank models from a CSV with model, country and either indicator or smape + rmse columns."""
    with open(args.scores, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{args.scores} has no rows")
    cells = {}
    for i, r in enumerate(rows, start=2):
        try:
            if "indicator" in r and r["indicator"] not in (None, ""):
                value = float(r["indicator"])
            else:
                value = performance_indicator(MetricSet(float(r["smape"]), float("nan"), float("nan"),
                                                        float(r["rmse"])))
            cells[(r["model"], r["country"])] = value
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{args.scores}:{i}: {exc}") from exc
    table = ScoreTable.from_cells(cells)
    ranks = rank_models(table)
    tests = pairwise_vs_best(table) if len(table.models) > 1 and len(table.countries) > 1 else {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "avg_rank", "friedman_chi2", "friedman_p"])
    for m in ranks.order():
        t = tests.get(m)
        w.writerow([m, fmt(ranks.average_rank(m)), fmt(t.statistic) if t else "", fmt(t.p_value) if t else ""])
    _write_or_print(buf.getvalue(), args.output)
    return EXIT_OK


def _write_or_print(text: str, output) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gridcast", description="Electricity-price forecasting benchmark workbench.")
    p.add_argument("--seed", type=int, default=None, help="override the run seed")
    p.add_argument("--jobs", type=int, default=None, help="parallel model jobs / child processes")
    p.add_argument("--precision", type=int, choices=(32, 64), default=None, help="float width for neural models")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="parse a long-format price CSV into a panel file")
    s.add_argument("csv")
    s.add_argument("--fill", choices=GAP_POLICIES, default="error", help="gap policy")
    s.add_argument("--range", type=_parse_range, default=None, help="half-open UTC range START..END")
    s.add_argument("--countries", default=None, help="comma-separated country filter")
    s.add_argument("--datetime-column", default="datetime")
    s.add_argument("--country-column", default="country")
    s.add_argument("--price-column", default="price")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("synth", help="generate a synthetic panel from a TOML spec")
    s.add_argument("spec")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("pacf", help="partial autocorrelation of one channel")
    s.add_argument("panel")
    s.add_argument("--channel", required=True)
    s.add_argument("--max-lag", type=int, default=100)
    s.add_argument("-o", "--output", default=None)
    s.set_defaults(func=cmd_pacf)

    s = sub.add_parser("bench", help="run or resume a benchmark")
    s.add_argument("config")
    s.add_argument("-o", "--output", required=True, help="run directory")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("report", help="emit report CSVs from a run directory")
    s.add_argument("rundir")
    s.add_argument("--kind", choices=(*REPORT_KINDS, "all"), default="all")
    s.add_argument("-o", "--output", default=None, help="output directory (default RUNDIR/reports)")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("rank", help="rank models from a per-country scores CSV")
    s.add_argument("scores")
    s.add_argument("-o", "--output", default=None)
    s.set_defaults(func=cmd_rank)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.precision is not None:
        set_default_precision(args.precision)
    try:
        return args.func(args)
    except (OSError, EOFError, zipfile.BadZipFile) as exc:
        print(f"gridcast: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (GridcastError, tomli.TOMLDecodeError) as exc:
        print(f"gridcast: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
