"""Command line surface.

Subcommands: ingest, estimate, benchmark, detect, allocate, importance,
diagnostics, plot, synth.  Flags beat config-file values beat built-in
defaults; the effective configuration is logged at startup.  The config file
is INI with a ``[casegrowth]`` section whose keys are the long flag names
with dashes replaced by underscores.

Exit codes: 0 success, 1 data/processing error (with context on stderr),
2 usage error.  ``COVID_GROWTH_THREADS`` caps worker parallelism.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import math
import os
import sys
from datetime import date
from pathlib import Path

from casegrowth.baseline import DELTA_GRID, ols_fixed_rate
from casegrowth.forecast import run_benchmark
from casegrowth.detect import (
    DetectionConfig,
    allocate_investigations,
    absolute_threshold_counts,
    evaluate_allocation,
    load_decision_points,
    tune_threshold,
)
from casegrowth.errors import CaseGrowthError
from casegrowth.forest import ForestBank, ForestParams, feature_importance, forest_diagnostics
from casegrowth.panel import (
    apply_min_count_filter,
    build_modeling_table,
    incident_series,
    load_cumulative_cases,
    load_features,
    load_schema,
    smooth_moving_average,
    write_modeling_table,
)
from casegrowth.svg import line_chart
from casegrowth.synthetic import SynthConfig, write_synth_files
from casegrowth.windows import select_ctcv, select_tcv
from casegrowth import _kernels

log = logging.getLogger("casegrowth")

ESTIMATE_METHODS = ("ols", "tcv", "ctcv", "kmeans", "tlgrf", "tlgrf-delta", "tlgrf-time-only")
SEEDED_METHODS = ("kmeans", "tlgrf", "tlgrf-delta", "tlgrf-time-only")


def _add_data_flags(p):
    p.add_argument("--cases", help="cases CSV (date,county,cases)")
    p.add_argument("--cases-kind", choices=("cumulative", "incident"), default=None)
    p.add_argument("--features", action="append", default=None, help="feature CSV (repeatable)")
    p.add_argument("--schema", help="column-kind config with a [columns] section")
    p.add_argument("--min-count", type=float, default=None)
    p.add_argument("--incidence-window", type=int, default=None)
    p.add_argument("--smooth-window", type=int, default=None)


def _add_forest_flags(p):
    p.add_argument("--trees", type=int, default=None)
    p.add_argument("--min-node", type=int, default=None)
    p.add_argument("--mtry", type=int, default=None)
    p.add_argument("--subsample", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)


_DEFAULTS = {
    "cases_kind": "cumulative",
    "min_count": 20.0,
    "incidence_window": 22,
    "smooth_window": 7,
    "trees": 200,
    "min_node": 5,
    "subsample": 0.5,
    "workers": 1,
    "grid": "2..14",
    "horizon": 7,
    "scale": "log",
    "lookahead": 7,
    "metric": "mae",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="casegrowth",
        description="County-level case growth estimation, forecasting and outbreak tooling",
    )
    parser.add_argument("--config", help="INI config file with a [casegrowth] section")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build and dump the modeling table")
    _add_data_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("estimate", help="emit (county, day, rate) for one method")
    _add_data_flags(p)
    _add_forest_flags(p)
    p.add_argument("--method", choices=ESTIMATE_METHODS, required=True)
    p.add_argument("--delta", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--grid", default=None, help="window grid, e.g. 2..14 or 2,3,5")
    p.add_argument("--day", default=None, help="day index or ISO date (default: last day)")
    p.add_argument("--all-days", action="store_true")
    p.add_argument("--out", default=None, help="output CSV (default: stdout)")
    p.add_argument("--clusters-out", default=None,
                   help="with --method kmeans, also write the county,cluster table here")

    p = sub.add_parser("benchmark", help="forward-chained method comparison")
    _add_data_flags(p)
    _add_forest_flags(p)
    p.add_argument("--methods", required=True, help="comma list, e.g. tlgrf,ols:2,ols:14,tcv")
    p.add_argument("--from", dest="day_from", required=True, help="first forecast target day")
    p.add_argument("--to", dest="day_to", required=True, help="last forecast target day")
    p.add_argument("--grid", default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--scale", choices=("log", "count"), default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("detect", help="threshold outbreak classification")
    _add_data_flags(p)
    p.add_argument("--estimates", required=True, help="CSV county,day,rate")
    p.add_argument("--labels", required=True, help="CSV county,day,label")
    p.add_argument("--threshold", required=True, help="a rate value, or 'auto' to tune")
    p.add_argument("--lookahead", type=int, choices=(7, 14, 21), default=None)
    p.add_argument("--split", help="train_end,validation_end,test_end (days); needed for auto")
    p.add_argument("--thresholds", help="comma list of candidate thresholds for auto")
    p.add_argument("--f1-variant", choices=("standard", "tpr-fpr"), default="standard")
    p.add_argument("--out", default=None)

    p = sub.add_parser("allocate", help="top-k investigation recommendations")
    _add_data_flags(p)
    p.add_argument("--estimates", required=True, help="CSV county,day,rate")
    p.add_argument("--points", required=True, help="CSV day,capacity,excluded")
    p.add_argument("--lookahead", type=int, default=None)
    p.add_argument("--abs-threshold", type=float, default=None,
                   help="also count counties with projected increase above this")
    p.add_argument("--out", default=None)

    p = sub.add_parser("importance", help="ranked feature importance of a trained forest")
    _add_data_flags(p)
    _add_forest_flags(p)
    p.add_argument("--day", default=None, help="pooling day (default: last day)")
    p.add_argument("--out", default=None)

    p = sub.add_parser("diagnostics", help="tree depth and leaf size tables")
    _add_data_flags(p)
    _add_forest_flags(p)
    p.add_argument("--day", default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("plot", help="render per-day metric series from a report to SVG")
    p.add_argument("--report", required=True)
    p.add_argument("--metric", choices=("mae", "rmse", "mape"), default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="generate a synthetic panel file set")
    p.add_argument("--counties", type=int, default=20)
    p.add_argument("--days", type=int, default=120)
    p.add_argument("--break-day", type=int, default=60)
    p.add_argument("--rate-before", type=float, default=0.10)
    p.add_argument("--rate-after", type=float, default=-0.15)
    p.add_argument("--base-incident", type=float, default=200.0)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--noise-features", type=int, default=8)
    p.add_argument("--min-count", type=float, default=20.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")

    return parser


def _apply_config(args, parser):
    """Fill unset args from the config file, then from built-in defaults."""
    file_values = {}
    if args.config:
        cp = configparser.ConfigParser()
        read = cp.read(args.config)
        if not read:
            parser.error(f"config file {args.config} not readable")
        if cp.has_section("casegrowth"):
            file_values = dict(cp.items("casegrowth"))
    for key, value in vars(args).items():
        if value is None and key in file_values:
            setattr(args, key, file_values[key])
        elif value is None and key in _DEFAULTS:
            setattr(args, key, _DEFAULTS[key])
    # typed coercions for values that may arrive from the config file as text
    for key, cast in (
        ("min_count", float), ("incidence_window", int), ("smooth_window", int),
        ("trees", int), ("min_node", int), ("subsample", float), ("seed", int),
        ("workers", int), ("horizon", int), ("lookahead", int), ("delta", int),
        ("k", int), ("mtry", int),
    ):
        if hasattr(args, key) and isinstance(getattr(args, key), str):
            setattr(args, key, cast(getattr(args, key)))
    return args


def _resolve_workers(args):
    workers = getattr(args, "workers", 1) or 1
    cap = os.environ.get("COVID_GROWTH_THREADS")
    if cap:
        workers = max(1, min(workers, int(cap)))
    return workers


def _parse_grid(text):
    if isinstance(text, (tuple, list)):
        return tuple(text)
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(sorted(int(v) for v in text.split(",")))


def _load_table(args, parser):
    if not getattr(args, "cases", None):
        parser.error("--cases is required for this command")
    panel = load_cumulative_cases(args.cases, kind=args.cases_kind)
    if args.cases_kind == "cumulative":
        panel = incident_series(panel, args.incidence_window)
    if args.smooth_window > 1:
        panel = smooth_moving_average(panel, args.smooth_window)
    panel = apply_min_count_filter(panel, args.min_count)
    sources = args.features or []
    if sources:
        if not args.schema:
            parser.error("--schema is required when --features is given")
        schema = load_schema(args.schema)
        features = load_features(sources, schema, panel)
    else:
        # featureless table: day index is the only signal beyond incidence
        import numpy as np

        from casegrowth.panel import FeatureFrame

        values = np.zeros((panel.n_days + 1, len(panel.counties), 0))
        features = FeatureFrame([], [], values, np.zeros(0, dtype=bool), list(panel.counties))
    return build_modeling_table(panel, features)


def _parse_day(value, table, parser, default=None):
    if value is None:
        return default
    text = str(value)
    try:
        return int(text)
    except ValueError:
        pass
    try:
        d = date.fromisoformat(text)
    except ValueError:
        parser.error(f"cannot parse day {value!r} (use a day index or ISO date)")
    if table.epoch is None:
        parser.error("table has no epoch date; use integer day indices")
    return (d - table.epoch).days + 1


def _write_rates(rows, out):
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["county", "day", "rate"])
        for county, day, rate in rows:
            writer.writerow([county, day, format(rate, ".12g")])
    finally:
        if out:
            fh.close()


def _load_rates(path):
    rates = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rates[(rec["county"], int(rec["day"]))] = float(rec["rate"])
    return rates


def _forest_params(args):
    return ForestParams(
        num_trees=args.trees,
        min_node_size=args.min_node,
        mtry=args.mtry,
        subsample_fraction=args.subsample,
    )


def _require_seed(args, parser):
    if args.seed is None:
        parser.error(f"--seed is mandatory for method {args.method!r}")


def _cmd_estimate(args, parser):
    from casegrowth._rng import derive_seed
    from casegrowth.forest import estimate_time_only, estimate_tlgrf_delta
    from casegrowth.windows import kmeans_clusters, select_cluster_window

    if args.method in ("ols", "tlgrf-delta"):
        if args.delta is None:
            parser.error(f"--delta is required for method {args.method!r}")
        if args.delta < 2:
            parser.error("--delta must be >= 2 (a rate needs two days)")
    if args.method == "kmeans" and args.k is None:
        parser.error("--k is required for method 'kmeans'")
    if args.method in SEEDED_METHODS:
        _require_seed(args, parser)

    table = _load_table(args, parser)
    grid = _parse_grid(args.grid)
    workers = _resolve_workers(args)
    last = table.n_days
    if args.all_days:
        days = range(2, last + 1)
    else:
        days = [_parse_day(args.day, table, parser, default=last)]

    params = _forest_params(args)
    bank = None
    clusters = None
    if args.method in ("tlgrf", "tlgrf-delta"):
        bank = ForestBank(table, params, args.seed, workers=workers)
    if args.method == "kmeans":
        clusters = kmeans_clusters(table, args.k, args.seed)
        if args.clusters_out:
            with open(args.clusters_out, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["county", "cluster"])
                for county in table.counties:
                    writer.writerow([county, clusters.assignment[county]])

    rows = []
    skipped = 0
    for t in days:
        view = table.restricted(t)
        for ci, county in enumerate(view.counties):
            try:
                if args.method == "ols":
                    rate = ols_fixed_rate(view, county, t, args.delta).rate
                elif args.method == "tcv":
                    delta = select_tcv(view, t, grid).delta
                    rate = ols_fixed_rate(view, county, t, delta).rate
                elif args.method == "ctcv":
                    delta = select_ctcv(view, t, county, grid).delta
                    rate = ols_fixed_rate(view, county, t, delta).rate
                elif args.method == "kmeans":
                    cid = clusters.assignment[county]
                    delta = select_cluster_window(view, clusters, t, cid, grid).delta
                    rate = ols_fixed_rate(view, county, t, delta).rate
                elif args.method == "tlgrf":
                    rate = bank.estimate(t, county).rate
                elif args.method == "tlgrf-delta":
                    rate = estimate_tlgrf_delta(bank, view, county, t, args.delta).rate
                else:  # tlgrf-time-only
                    seed = derive_seed(args.seed, t, ci)
                    rate = estimate_time_only(view, county, t, params, seed).rate
            except CaseGrowthError:
                skipped += 1
                continue
            rows.append((county, t, rate))
    _write_rates(rows, args.out)
    log.info("estimate %s: %d rates, %d cells skipped", args.method, len(rows), skipped)
    return 0


def _cmd_benchmark(args, parser):
    table = _load_table(args, parser)
    if args.seed is None:
        parser.error("--seed is mandatory for benchmark runs")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    first = _parse_day(args.day_from, table, parser)
    last = _parse_day(args.day_to, table, parser)
    report = run_benchmark(
        table,
        methods,
        (first, last),
        seed=args.seed,
        horizon=args.horizon,
        grid=_parse_grid(args.grid),
        forest_params=_forest_params(args),
        scale=args.scale,
        workers=_resolve_workers(args),
    )
    report.to_csv(args.out)
    if table.leak_count:
        log.error("benchmark performed %d future-day reads", table.leak_count)
        return 1
    for method in report.methods:
        s = report.medians.get(method)
        if s:
            log.info(
                "%s: median MAE %.4f RMSE %.4f MAPE %.4f over %d days",
                method, s.mae, s.rmse, s.mape, s.n,
            )
    return 0


def _cmd_detect(args, parser):
    estimates = _load_rates(args.estimates)
    labels = {}
    with open(args.labels, newline="") as fh:
        for rec in csv.DictReader(fh):
            labels[(rec["county"], int(rec["day"]))] = rec["label"].strip() in ("1", "true", "True")

    out_lines = []
    if args.threshold == "auto":
        if not args.split:
            parser.error("--split is required with --threshold auto")
        ends = [int(v) for v in args.split.split(",")]
        if len(ends) != 3:
            parser.error("--split needs train_end,validation_end,test_end")
        lo = min(d for _, d in estimates) if estimates else 1
        split = ((lo, ends[0]), (ends[0] + 1, ends[1]), (ends[1] + 1, ends[2]))
        config = DetectionConfig(threshold=math.nan, lookahead=args.lookahead, split=split)
        if args.thresholds:
            grid = [float(v) for v in args.thresholds.split(",")]
        else:
            values = sorted(estimates.values())
            grid = [values[int(i * (len(values) - 1) / 40)] for i in range(41)]
        result = tune_threshold(estimates, labels, config, grid, f1_variant=args.f1_variant)
        out_lines.append(f"threshold,{format(result.config.threshold, '.12g')}")
        out_lines.append(f"validation_f1,{format(result.validation_f1, '.12g')}")
        cm = result.test_cm
        out_lines.append(f"test_f1,{format(result.test_f1, '.12g')}")
        out_lines.append(f"test_tp,{cm.tp}")
        out_lines.append(f"test_fp,{cm.fp}")
        out_lines.append(f"test_fn,{cm.fn}")
        out_lines.append(f"test_tn,{cm.tn}")
    else:
        from casegrowth.detect import classify_outbreaks

        result = classify_outbreaks(estimates, labels, float(args.threshold))
        cm = result.cm
        out_lines.append(f"threshold,{format(float(args.threshold), '.12g')}")
        out_lines.extend([f"tp,{cm.tp}", f"fp,{cm.fp}", f"fn,{cm.fn}", f"tn,{cm.tn}"])
        out_lines.append(f"missing_labels,{result.missing_labels}")

    text = "\n".join(out_lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_allocate(args, parser):
    table = _load_table(args, parser)
    estimates = _load_rates(args.estimates)
    points = load_decision_points(args.points)
    recs = allocate_investigations(estimates, table, points)
    report = evaluate_allocation(recs, table, points, lookahead=args.lookahead)

    lines = ["day,recommended,shortfall"]
    for rec in recs:
        lines.append(f"{rec.day},{'|'.join(rec.counties)},{rec.shortfall}")
    cm = report.cm
    lines.append(f"tp,{cm.tp},")
    lines.append(f"fp,{cm.fp},")
    lines.append(f"fn,{cm.fn},")
    lines.append(f"tn,{cm.tn},")
    ppv = cm.ppv
    lines.append(f"ppv,{'' if ppv is None else format(ppv, '.4f')},")
    lines.append(f"skipped_points,{report.skipped_points},")
    if args.abs_threshold is not None:
        counts = absolute_threshold_counts(estimates, table, args.abs_threshold)
        for day in sorted(counts):
            lines.append(f"abs_threshold_count_{day},{counts[day]},")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _train_for_report(args, parser):
    if args.seed is None:
        parser.error("--seed is mandatory for forest commands")
    table = _load_table(args, parser)
    t = _parse_day(args.day, table, parser, default=table.n_days)
    bank = ForestBank(table, _forest_params(args), args.seed, workers=_resolve_workers(args))
    return bank.forest(t), t


def _cmd_importance(args, parser):
    forest, t = _train_for_report(args, parser)
    report = feature_importance(forest)
    lines = ["feature,importance"]
    for name, score in report.ranked():
        lines.append(f"{name},{format(score, '.12g')}")
    if report.degenerate:
        lines.append("# degenerate: forest contains no splits")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    log.info("importance over forest pooled at day %d", t)
    return 0


def _cmd_diagnostics(args, parser):
    forest, t = _train_for_report(args, parser)
    diag = forest_diagnostics(forest)
    lines = [
        "metric,value",
        f"trees,{len(diag.depths)}",
        f"mean_depth,{format(diag.mean_depth, '.12g')}",
        f"median_depth,{format(diag.median_depth, '.12g')}",
        f"mean_leaf_size,{format(diag.mean_leaf_size, '.12g')}",
        f"median_leaf_size,{format(diag.median_leaf_size, '.12g')}",
    ]
    for i, depth in enumerate(diag.depths):
        lines.append(f"tree_{i}_depth,{depth}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    log.info("diagnostics over forest pooled at day %d", t)
    return 0


def _cmd_plot(args, parser):
    series = {}
    with open(args.report, newline="") as fh:
        for rec in csv.DictReader(fh):
            if rec["day"] in ("median", "skipped"):
                continue
            value = rec[args.metric]
            if value == "":
                continue
            series.setdefault(rec["method"], []).append((int(rec["day"]), float(value)))
    if not series:
        log.error("report %s has no per-day rows", args.report)
        return 1
    svg = line_chart(
        series,
        title=f"{args.metric.upper()} by forecast day",
        x_label="day",
        y_label=args.metric.upper(),
    )
    out = Path(args.out)
    out.write_text(svg)
    data_out = out.with_suffix(".csv")
    with open(data_out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "day", args.metric])
        for method in sorted(series):
            for day, value in sorted(series[method]):
                writer.writerow([method, day, format(value, ".12g")])
    log.info("wrote %s and %s", out, data_out)
    return 0


def _cmd_synth(args, parser):
    cfg = SynthConfig(
        counties=args.counties,
        days=args.days,
        break_day=args.break_day,
        rate_before=args.rate_before,
        rate_after=args.rate_after,
        base_incident=args.base_incident,
        noise_sigma=args.noise,
        noise_features=args.noise_features,
        min_count=args.min_count,
        seed=args.seed,
    )
    paths = write_synth_files(cfg, args.out)
    for name, path in sorted(paths.items()):
        log.info("wrote %s: %s", name, path)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = _apply_config(args, parser)
    shown = {k: v for k, v in vars(args).items() if v is not None and k != "command"}
    log.info("command %s (kernels: %s): %s", args.command, _kernels.backend_name(), shown)

    handlers = {
        "ingest": lambda: _cmd_ingest(args, parser),
        "estimate": lambda: _cmd_estimate(args, parser),
        "benchmark": lambda: _cmd_benchmark(args, parser),
        "detect": lambda: _cmd_detect(args, parser),
        "allocate": lambda: _cmd_allocate(args, parser),
        "importance": lambda: _cmd_importance(args, parser),
        "diagnostics": lambda: _cmd_diagnostics(args, parser),
        "plot": lambda: _cmd_plot(args, parser),
        "synth": lambda: _cmd_synth(args, parser),
    }
    try:
        return handlers[args.command]()
    except CaseGrowthError as exc:
        log.error("%s", exc)
        return 1


def _cmd_ingest(args, parser):
    table = _load_table(args, parser)
    write_modeling_table(table, args.out)
    log.info("wrote %d rows over %d counties to %s", table.n_rows, table.n_counties, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
