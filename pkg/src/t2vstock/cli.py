"""Command line: ``t2vstock {synth,ingest,prepare,train,evaluate,report}``.

Exit codes: 0 success, 2 input error, 3 training failure, 4 artifact mismatch.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import evaluation as ev
from . import runner
from .ingest import IngestError, parse_eod_csv, resample_weekly, extract_ticker, summarize_bars, \
    tickers as list_tickers, write_eod_csv, write_stats_csv
from .pipeline import DegenerateFeature, SeriesTooShort, TooFewSamples
from .runner import ArtifactMismatch, RunConfig
from .synth import DEFAULT_TICKERS, generate
from .train import CorruptCheckpoint, NameCollision, NonFiniteLoss

log = logging.getLogger("t2vstock")

EXIT_OK, EXIT_INPUT, EXIT_TRAIN, EXIT_ARTIFACT = 0, 2, 3, 4
INPUT_ERRORS = (IngestError, DegenerateFeature, SeriesTooShort, TooFewSamples, OSError, ValueError)


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _add_knobs(p: argparse.ArgumentParser) -> None:
    # defaults are None so we can tell supplied flags from inherited values
    for key in RunConfig.keys():
        default = RunConfig.default_of(key)
        kind = type(default) if not isinstance(default, str) else str
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=kind, default=None,
                       help=f"(default {default})")


def _add_common(p: argparse.ArgumentParser, data: bool = True) -> None:
    if data:
        p.add_argument("--data", required=True, help="EOD CSV file")
    p.add_argument("--ticker", action="append", default=[], help="trading code (repeatable)")
    p.add_argument("--chart", choices=("daily", "weekly", "both"), default="daily")
    p.add_argument("--all", action="store_true", help="every ticker in the data, daily and weekly")
    p.add_argument("--config", help="key=value file of run knobs; flags override it")
    p.add_argument("--out", default="runs", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="models trained or scored in parallel")
    _add_knobs(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="t2vstock", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a seeded synthetic EOD CSV")
    p.add_argument("--out", required=True, help="CSV path to write")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--days", type=int, default=2000)
    p.add_argument("--ticker", action="append", default=[])

    p = sub.add_parser("ingest", help="per-ticker bar counts and column statistics")
    p.add_argument("--data", required=True)
    p.add_argument("--ticker", action="append", default=[])
    p.add_argument("--out", help="directory for stats CSVs")
    p.add_argument("--week-start", default="sunday")

    for name, text in (("prepare", "write windowed datasets as CSV"),
                       ("train", "train one model per (ticker, chart)"),
                       ("evaluate", "score saved models and write reports")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        if name == "evaluate":
            p.add_argument("--svg", action="store_true", help="also render prediction SVGs")

    p = sub.add_parser("report", help="merge per-model metrics under --out into report.csv")
    p.add_argument("--out", default="runs")
    return parser


def _overrides(args) -> dict:
    values = runner.read_key_values(args.config) if getattr(args, "config", None) else {}
    unknown = set(values) - set(RunConfig.keys())
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}", EXIT_INPUT)
    for key in RunConfig.keys():
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return values


def _run_config(overrides: dict) -> RunConfig:
    try:
        return RunConfig(**overrides)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid configuration: {exc}", EXIT_INPUT) from None


def _load_bars(path):
    if not Path(path).exists():
        raise CliError(f"data file not found: {path}", EXIT_INPUT)
    try:
        return parse_eod_csv(path)
    except IngestError as exc:
        raise CliError(f"{path}: {exc}", EXIT_INPUT) from None


def _targets(args, bars) -> list[tuple[str, str]]:
    names = args.ticker or (list_tickers(bars) if args.all else [])
    if not names:
        raise CliError("give --ticker CODE or --all", EXIT_INPUT)
    charts = ("daily", "weekly") if args.all or args.chart == "both" else (args.chart,)
    return [(c, t) for c in charts for t in names]


def _series(bars, ticker, chart, week_start):
    try:
        return runner.series_for(bars, ticker, chart, week_start)
    except IngestError as exc:
        raise CliError(str(exc), EXIT_INPUT) from None


def cmd_synth(args) -> int:
    names = args.ticker or list(DEFAULT_TICKERS)
    bars = generate(names, n_days=args.days, seed=args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_eod_csv(bars, args.out)
    print(f"wrote {len(bars)} bars for {len(names)} tickers to {args.out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    bars = _load_bars(args.data)
    names = args.ticker or list_tickers(bars)
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    for name in names:
        try:
            daily = extract_ticker(bars, name)
        except IngestError as exc:
            raise CliError(str(exc), EXIT_INPUT) from None
        weekly = resample_weekly(daily, args.week_start)
        for chart, series in (("daily", daily), ("weekly", weekly)):
            stats = summarize_bars(series)
            print(f"{name} {chart}: {len(series)} bars")
            print(f"  {'column':<8}{'min':>14}{'max':>14}{'mean':>14}{'std':>14}")
            for col, s in stats.items():
                print(f"  {col:<8}{s.min:>14.6g}{s.max:>14.6g}{s.mean:>14.6g}{s.std:>14.6g}")
            if out:
                write_stats_csv(stats, out / f"stats_{name}_{chart}.csv")
    return EXIT_OK


def cmd_prepare(args) -> int:
    cfg = _run_config(_overrides(args))
    bars = _load_bars(args.data)
    for chart, name in _targets(args, bars):
        _, matrix = _series(bars, name, chart, cfg.week_start)
        try:
            dataset, _ = runner.prepare_for(matrix, cfg)
        except INPUT_ERRORS as exc:
            raise CliError(f"{chart}/{name}: {exc}", EXIT_INPUT) from None
        directory = runner.model_dir(args.out, name, chart)
        runner.write_prepared(dataset, directory)
        n_tr, n_va, n_te = dataset.sizes
        print(f"{chart}/{name}: {n_tr}/{n_va}/{n_te} samples -> {directory}")
    return EXIT_OK


def _train_task(task):
    dates, matrix, name, chart, knobs, out = task
    try:
        runner.train_model(dates, matrix, name, chart, RunConfig(**knobs), out)
        return chart, name, EXIT_OK, ""
    except NonFiniteLoss as exc:
        return chart, name, EXIT_TRAIN, str(exc)
    except INPUT_ERRORS as exc:
        return chart, name, EXIT_INPUT, str(exc)


def _map(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def cmd_train(args) -> int:
    overrides = _overrides(args)
    cfg = _run_config(overrides)
    bars = _load_bars(args.data)
    tasks = []
    for chart, name in _targets(args, bars):
        dates, matrix = _series(bars, name, chart, cfg.week_start)
        tasks.append((dates, matrix, name, chart, cfg.knobs(), args.out))
    worst = EXIT_OK
    for chart, name, code, msg in _map(_train_task, tasks, args.jobs):
        if code == EXIT_OK:
            print(f"{chart}/{name}: trained -> {runner.model_dir(args.out, name, chart)}")
        else:
            print(f"{chart}/{name}: FAILED ({msg})", file=sys.stderr)
            worst = max(worst, code)
    return worst


def _evaluate_task(task):
    dates, matrix, name, chart, cfg, out, svg = task
    try:
        rows, base = runner.evaluate_model(dates, matrix, name, chart, cfg, out, svg)
        return chart, name, EXIT_OK, ""
    except (ArtifactMismatch, CorruptCheckpoint, NameCollision) as exc:
        return chart, name, EXIT_ARTIFACT, str(exc)
    except INPUT_ERRORS as exc:
        return chart, name, EXIT_INPUT, str(exc)


def cmd_evaluate(args) -> int:
    overrides = _overrides(args)
    bars = _load_bars(args.data)
    tasks, failures = [], []
    for chart, name in _targets(args, bars):
        try:
            cfg = runner.load_saved_config(runner.model_dir(args.out, name, chart), overrides)
        except ArtifactMismatch as exc:
            failures.append((chart, name, EXIT_ARTIFACT, str(exc)))
            continue
        dates, matrix = _series(bars, name, chart, cfg.week_start)
        tasks.append((dates, matrix, name, chart, cfg, args.out, args.svg))
    worst = EXIT_OK
    for chart, name, code, msg in failures + _map(_evaluate_task, tasks, args.jobs):
        if code != EXIT_OK:
            print(f"{chart}/{name}: FAILED ({msg})", file=sys.stderr)
            worst = max(worst, code)
    _merge_reports(args.out)
    return worst


def _merge_reports(out) -> bool:
    rows = runner.collect_reports(out)
    if not rows:
        return False
    base = runner.collect_reports(out, "baseline_metrics.csv")
    ev.emit_report(rows, Path(out) / "report.csv")
    if base:
        ev.emit_report(base, Path(out) / "baseline_report.csv")
    print(ev.pivot_table(rows))
    if base:
        print()
        print(runner.baseline_summary(rows, base))
    print(f"\nreport: {Path(out) / 'report.csv'}")
    return True


def cmd_report(args) -> int:
    if not _merge_reports(args.out):
        raise CliError(f"no metrics.csv files under {args.out}; run evaluate first", EXIT_ARTIFACT)
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
