"""Seven-day-ahead forecasting, error metrics, and the benchmark harness.

The forecast rule exponentiates the current log incidence advanced by
``horizon * rate``.  Errors are scored on the log scale by default (absolute
difference of log incidence), with raw-count errors available as an option;
MAPE is the log-scale absolute error relative to the magnitude of the true
log incidence.  Per-method summary values are medians over days of the
per-day cross-county means.

The benchmark walks forward through time: to score predictions FOR day ``d``
each estimator runs at base day ``t = d - horizon`` on a day-guarded view of
the table, so nothing after ``t`` is readable while estimating.  Cells where
an estimator cannot produce a rate are skipped and counted, never fatal.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from casegrowth._rng import derive_seed
from casegrowth.baseline import DELTA_GRID, ols_fixed_rate
from casegrowth.errors import (
    CaseGrowthError,
    DomainError,
    EmptyWeightsError,
    InsufficientDataError,
    SelectionError,
)
from casegrowth.forest import ForestBank, ForestParams, estimate_time_only, estimate_tlgrf_delta
from casegrowth.windows import kmeans_clusters, select_cluster_window, select_ctcv, select_tcv

log = logging.getLogger(__name__)

DEFAULT_HORIZON = 7

_SKIPPABLE = (InsufficientDataError, SelectionError, EmptyWeightsError, DomainError)


class ReportError(CaseGrowthError):
    """No prediction matched any truth cell."""


@dataclass(frozen=True)
class Forecast:
    county: str
    base_day: int
    horizon: int
    predicted_incident: float


def forecast(ln_now: float, rate: float, h: int = DEFAULT_HORIZON, county: str = "", base_day: int = 0) -> Forecast:
    """Project incident cases ``h`` days ahead at a constant growth rate."""
    if not math.isfinite(ln_now):
        raise DomainError("forecast needs a finite current log incidence")
    return Forecast(
        county=county,
        base_day=base_day,
        horizon=h,
        predicted_incident=math.exp(ln_now + h * rate),
    )


@dataclass(frozen=True)
class CellStats:
    mae: float
    rmse: float
    mape: float
    n: int


@dataclass
class EvalReport:
    methods: list[str]
    per_day: dict  # (method, day) -> CellStats
    medians: dict  # method -> CellStats (n = number of contributing days)
    skipped: dict  # method -> count of (county, day) cells an estimator missed
    horizon: int = DEFAULT_HORIZON
    scale: str = "log"

    def days(self, method: str) -> list[int]:
        return sorted(d for (m, d) in self.per_day if m == method)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["method", "day", "mae", "rmse", "mape", "n"])
            for method in self.methods:
                for day in self.days(method):
                    s = self.per_day[(method, day)]
                    writer.writerow(
                        [method, day] + [format(v, ".12g") for v in (s.mae, s.rmse, s.mape)] + [s.n]
                    )
            for method in self.methods:
                if method in self.medians:
                    s = self.medians[method]
                    writer.writerow(
                        [method, "median"]
                        + [format(v, ".12g") for v in (s.mae, s.rmse, s.mape)]
                        + [s.n]
                    )
                writer.writerow([method, "skipped", "", "", "", self.skipped.get(method, 0)])


def metric_table(predictions, truth, scale: str = "log", methods=None) -> EvalReport:
    """Score (method, county, day, predicted_incident) records against realized
    incident counts keyed by (county, day)."""
    groups = {}
    matched = 0
    seen_methods = []
    for method, county, day, predicted in predictions:
        if method not in seen_methods:
            seen_methods.append(method)
        actual = truth.get((county, day))
        if actual is None or not math.isfinite(actual) or actual <= 0 or predicted <= 0:
            continue
        matched += 1
        if scale == "log":
            err = math.log(predicted) - math.log(actual)
            denom = abs(math.log(actual))
        else:
            err = predicted - actual
            denom = abs(actual)
        groups.setdefault((method, day), []).append((err, denom))
    if not matched:
        raise ReportError("no prediction aligned with a truth cell")

    per_day = {}
    for key, errs in groups.items():
        abs_errs = [abs(e) for e, _ in errs]
        mapes = [abs(e) / d for e, d in errs if d > 0]
        per_day[key] = CellStats(
            mae=float(np.mean(abs_errs)),
            rmse=float(math.sqrt(np.mean([e * e for e, _ in errs]))),
            mape=float(np.mean(mapes)) if mapes else float("nan"),
            n=len(errs),
        )

    medians = {}
    order = methods if methods is not None else seen_methods
    for method in order:
        rows = [s for (m, _), s in per_day.items() if m == method]
        if rows:
            medians[method] = CellStats(
                mae=float(np.median([s.mae for s in rows])),
                rmse=float(np.median([s.rmse for s in rows])),
                mape=float(np.median([s.mape for s in rows])),
                n=len(rows),
            )
    return EvalReport(
        methods=list(order), per_day=per_day, medians=medians, skipped={}, scale=scale
    )


# ---------------------------------------------------------------------------
# benchmark methods


class _OLSMethod:
    def __init__(self, delta):
        self.delta = delta
        self.name = f"ols:{delta}"

    def rates(self, view, t):
        out, skipped = {}, 0
        for county in view.counties:
            try:
                out[county] = ols_fixed_rate(view, county, t, self.delta).rate
            except _SKIPPABLE:
                skipped += 1
        return out, skipped


class _TCVMethod:
    def __init__(self, grid):
        self.grid = grid
        self.name = "tcv"

    def rates(self, view, t):
        try:
            delta = select_tcv(view, t, self.grid).delta
        except _SKIPPABLE:
            return {}, view.n_counties
        out, skipped = {}, 0
        for county in view.counties:
            try:
                out[county] = ols_fixed_rate(view, county, t, delta).rate
            except _SKIPPABLE:
                skipped += 1
        return out, skipped


class _CTCVMethod:
    def __init__(self, grid):
        self.grid = grid
        self.name = "ctcv"

    def rates(self, view, t):
        out, skipped = {}, 0
        for county in view.counties:
            try:
                delta = select_ctcv(view, t, county, self.grid).delta
                out[county] = ols_fixed_rate(view, county, t, delta).rate
            except _SKIPPABLE:
                skipped += 1
        return out, skipped


class _KMeansMethod:
    def __init__(self, k, grid, table, seed):
        self.k = k
        self.grid = grid
        self.seed = seed
        self.name = f"kmeans:{k}"
        self._table = table
        self._clusters = None

    def clusters(self):
        if self._clusters is None:
            self._clusters = kmeans_clusters(self._table, self.k, self.seed)
        return self._clusters

    def rates(self, view, t):
        clusters = self.clusters()
        out, skipped = {}, 0
        for cid in range(clusters.k):
            members = clusters.members(cid)
            try:
                delta = select_cluster_window(view, clusters, t, cid, self.grid).delta
            except _SKIPPABLE:
                skipped += len(members)
                continue
            for county in members:
                try:
                    out[county] = ols_fixed_rate(view, county, t, delta).rate
                except _SKIPPABLE:
                    skipped += 1
        return out, skipped


class _TLGRFMethod:
    def __init__(self, table, params, seed, workers=1):
        self.name = "tlgrf"
        self.bank = ForestBank(table, params, seed, workers=workers)

    def rates(self, view, t):
        out, skipped = {}, 0
        try:
            self.bank.forest(t)
        except _SKIPPABLE:
            return {}, view.n_counties
        for county in view.counties:
            try:
                out[county] = self.bank.estimate(t, county).rate
            except _SKIPPABLE:
                skipped += 1
        return out, skipped


class _TLGRFDeltaMethod:
    def __init__(self, delta, table, params, seed, workers=1):
        self.delta = delta
        self.name = f"tlgrf-delta:{delta}"
        self.bank = ForestBank(table, params, seed, workers=workers)

    def rates(self, view, t):
        out, skipped = {}, 0
        for county in view.counties:
            try:
                out[county] = estimate_tlgrf_delta(self.bank, view, county, t, self.delta).rate
            except _SKIPPABLE:
                skipped += 1
        return out, skipped


class _TimeOnlyMethod:
    def __init__(self, params, seed):
        self.name = "tlgrf-time-only"
        self.params = params
        self.seed = seed

    def rates(self, view, t):
        out, skipped = {}, 0
        for ci, county in enumerate(view.counties):
            try:
                est = estimate_time_only(view, county, t, self.params, derive_seed(self.seed, t, ci))
                out[county] = est.rate
            except _SKIPPABLE:
                skipped += 1
        return out, skipped


class _TrueRateMethod:
    """Reads the generating rate off a synthetic table; benchmark sanity oracle."""

    def __init__(self, table):
        self.name = "true-rate"
        self._table = table
        if table.true_rates is None:
            raise DomainError("true-rate method needs a synthetic table with generating rates")

    def rates(self, view, t):
        out = {}
        for ci, county in enumerate(view.counties):
            r = self._table.true_rate(t, ci)
            if math.isfinite(r):
                out[county] = r
        return out, 0


def build_method(spec: str, table, seed: int, grid=DELTA_GRID, forest_params=None, workers: int = 1):
    """Instantiate a benchmark method from its spec string.

    Specs: ``ols:<delta>``, ``tcv``, ``ctcv``, ``kmeans:<k>``, ``tlgrf``,
    ``tlgrf-delta:<delta>``, ``tlgrf-time-only``, ``true-rate``.
    """
    params = forest_params or ForestParams()
    name, _, arg = spec.partition(":")
    if name == "ols":
        return _OLSMethod(int(arg))
    if name == "tcv":
        return _TCVMethod(grid)
    if name == "ctcv":
        return _CTCVMethod(grid)
    if name == "kmeans":
        return _KMeansMethod(int(arg), grid, table, seed)
    if name == "tlgrf":
        return _TLGRFMethod(table, params, seed, workers=workers)
    if name == "tlgrf-delta":
        return _TLGRFDeltaMethod(int(arg), table, params, seed, workers=workers)
    if name == "tlgrf-time-only":
        return _TimeOnlyMethod(params, seed)
    if name == "true-rate":
        return _TrueRateMethod(table)
    raise DomainError(f"unknown method spec {spec!r}")


def run_benchmark(
    table,
    methods,
    day_range,
    seed: int,
    horizon: int = DEFAULT_HORIZON,
    grid=DELTA_GRID,
    forest_params: ForestParams | None = None,
    scale: str = "log",
    workers: int = 1,
) -> EvalReport:
    """Forward-chained comparison of estimation methods.

    ``day_range`` is the inclusive range of forecast TARGET days; a day ``d``
    is scored from estimates made at base day ``d - horizon`` on a view that
    exposes nothing newer.  Results are deterministic given the seed.
    """
    first, last = day_range
    if first - horizon < 2:
        raise DomainError(f"target day {first} leaves no base day history")
    if last > table.n_days:
        raise DomainError(f"target day {last} exceeds the table's {table.n_days} days")

    instances = [
        build_method(spec, table, derive_seed(seed, i), grid, forest_params, workers)
        for i, spec in enumerate(methods)
    ]

    predictions = []
    skipped = {m.name: 0 for m in instances}
    for target in range(first, last + 1):
        t = target - horizon
        view = table.restricted(t)
        for method in instances:
            rates, miss = method.rates(view, t)
            skipped[method.name] += miss
            for county, rate in rates.items():
                ci = table.county_index(county)
                if not view.has_ln(t, ci):
                    continue
                fc = forecast(view.ln(t, ci), rate, horizon, county=county, base_day=t)
                predictions.append((method.name, county, target, fc.predicted_incident))

    truth = {}
    for ci, county in enumerate(table.counties):
        for day in range(first, last + 1):
            v = table.incident_at(day, ci)
            if math.isfinite(v):
                truth[(county, day)] = v

    report = metric_table(predictions, truth, scale=scale, methods=[m.name for m in instances])
    report.skipped = skipped
    report.horizon = horizon
    return report
