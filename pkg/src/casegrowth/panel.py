"""Case-count ingestion and the modeling table.

Day indexing convention used throughout the package: day ``t`` is a 1-based
integer with day 1 = the earliest date observed anywhere in the cases file.
All (day, county) matrices are allocated with shape ``(T + 1, C)`` and row 0
permanently NaN, so ``array[t, c]`` reads at day ``t`` with no offset
arithmetic.

Canonical file schemas (comma separated, header row):

* cases:            ``date,county,cases``  (ISO-8601 dates; cumulative counts,
                    or incident counts when loaded with ``kind="incident"``)
* static features:  ``county,<name>,...``  (one row per county)
* dated features:   ``county,date,<name>,...`` (sparse; filled per the rules
                    in ``load_features``)

Feature column kinds, declared in the schema config: ``static``, ``numeric``
(time-varying, forward/backfilled), ``policy_date`` (a date cell expanded to a
days-elapsed counter), ``variant`` (like numeric, then normalized so the
variant group sums to 1 per county-day).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from casegrowth.errors import JoinError, RowError, SchemaError

log = logging.getLogger(__name__)

KINDS = ("static", "numeric", "policy_date", "variant")


def _freeze(arr):
    if arr is not None:
        arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CountyPanel:
    """Per-county daily series on the shared 1..T day index.

    ``cumulative`` and ``incident`` are ``(T + 1, C)`` float arrays with NaN
    for days outside a county's observed range (and for filtered incident
    entries).  ``incident_missing_low`` marks entries removed by the
    minimum-count filter, as opposed to never observed.
    """

    counties: list[str]
    epoch: date | None
    cumulative: np.ndarray | None
    incident: np.ndarray | None = None
    clamp_count: int = 0
    filtered_count: int = 0

    def __post_init__(self):
        _freeze(self.cumulative)
        _freeze(self.incident)

    @property
    def n_days(self) -> int:
        ref = self.cumulative if self.cumulative is not None else self.incident
        return ref.shape[0] - 1

    def county_index(self, county: str) -> int:
        return self.counties.index(county)

    def date_of(self, day: int) -> date | None:
        if self.epoch is None:
            return None
        return self.epoch + timedelta(days=day - 1)


def _new_grid(n_days, n_counties):
    return np.full((n_days + 1, n_counties), np.nan)


def load_cumulative_cases(path, kind: str = "cumulative") -> CountyPanel:
    """Read a cases file into a panel.

    Cumulative counts are made gapless per county (unreported days carry the
    last value forward) and clamped to their running maximum; each downward
    revision is counted and logged.  With ``kind="incident"`` the cases column
    is taken as an already-computed incident series and the cumulative matrix
    is left unset.
    """
    if kind not in ("cumulative", "incident"):
        raise SchemaError(f"unknown cases kind {kind!r}")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file")
        header = [h.strip().lower() for h in header]
        required = ("date", "county", "cases")
        if any(col not in header for col in required):
            raise SchemaError(f"{path}: need columns {required}, found {header}")
        di, ci, vi = (header.index(c) for c in required)
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not cell.strip() for cell in rec):
                continue
            try:
                day = date.fromisoformat(rec[di].strip())
            except ValueError as exc:
                raise RowError(lineno, f"bad date {rec[di]!r}") from exc
            try:
                value = float(rec[vi])
            except ValueError as exc:
                raise RowError(lineno, f"bad case count {rec[vi]!r}") from exc
            if value < 0:
                raise RowError(lineno, f"negative case count {value}")
            rows.append((day, rec[ci].strip(), value))

    if not rows:
        raise SchemaError(f"{path}: no data rows")

    epoch = min(r[0] for r in rows)
    n_days = max((r[0] - epoch).days for r in rows) + 1
    counties = sorted({r[1] for r in rows})
    lookup = {c: i for i, c in enumerate(counties)}

    grid = _new_grid(n_days, len(counties))
    for day, county, value in rows:
        grid[(day - epoch).days + 1, lookup[county]] = value

    clamps = 0
    for c in range(len(counties)):
        col = grid[:, c]
        seen = np.flatnonzero(~np.isnan(col))
        first, last = seen[0], seen[-1]
        # carry forward over unreported days so the per-county index is gapless
        for t in range(first + 1, last + 1):
            if math.isnan(col[t]):
                col[t] = col[t - 1]
        if kind == "cumulative":
            running = col[first]
            for t in range(first + 1, last + 1):
                if col[t] < running:
                    clamps += 1
                    col[t] = running
                else:
                    running = col[t]
    if clamps:
        log.warning("clamped %d non-monotone cumulative entries to the running max", clamps)

    if kind == "incident":
        return CountyPanel(counties, epoch, cumulative=None, incident=grid, clamp_count=0)
    return CountyPanel(counties, epoch, cumulative=grid, clamp_count=clamps)


def incident_series(panel: CountyPanel, window: int = 22) -> CountyPanel:
    """Incident counts as the trailing ``window``-day cumulative difference.

    For days before a full window exists the cumulative count itself is used.
    Day offsets are relative to each county's first observed day.
    """
    if panel.cumulative is None:
        raise SchemaError("cumulative counts not populated")
    if window < 1:
        raise SchemaError("incidence window must be >= 1")
    cum = panel.cumulative
    incident = np.full_like(cum, np.nan)
    for c in range(len(panel.counties)):
        col = cum[:, c]
        seen = np.flatnonzero(~np.isnan(col))
        if seen.size == 0:
            continue
        first = seen[0]
        for t in range(first, seen[-1] + 1):
            offset = t - first + 1  # local day index, 1-based
            if offset >= window + 1:
                incident[t, c] = col[t] - col[t - window]
            else:
                incident[t, c] = col[t]
    return replace(panel, incident=incident)


def smooth_moving_average(panel: CountyPanel, k: int = 7) -> CountyPanel:
    """Trailing ``k``-day mean of the incident series; short head windows use
    whatever days are available."""
    if panel.incident is None:
        raise SchemaError("incident counts not populated")
    if k < 1:
        raise SchemaError("smoothing window must be >= 1")
    src = panel.incident
    out = np.full_like(src, np.nan)
    for c in range(src.shape[1]):
        col = src[:, c]
        seen = np.flatnonzero(~np.isnan(col))
        if seen.size == 0:
            continue
        first = seen[0]
        for t in range(first, seen[-1] + 1):
            lo = max(first, t - k + 1)
            out[t, c] = col[lo : t + 1].mean()
    return replace(panel, incident=out)


def apply_min_count_filter(panel: CountyPanel, floor: float = 20.0) -> CountyPanel:
    """Mark incident entries strictly below ``floor`` as missing (not zero)."""
    if panel.incident is None:
        raise SchemaError("incident counts not populated")
    out = panel.incident.copy()
    low = out < floor  # NaN compares False, stays missing
    n = int(low.sum())
    out[low] = np.nan
    if n and not np.isfinite(out).any():
        log.warning("minimum-count filter removed every incident entry")
    return replace(panel, incident=out, filtered_count=panel.filtered_count + n)


@dataclass(frozen=True)
class FeatureFrame:
    """Dense per-(day, county) feature values with column kind metadata."""

    names: list[str]
    kinds: list[str]
    values: np.ndarray  # (T + 1, C, D)
    static_mask: np.ndarray  # (D,) bool
    counties: list[str]

    def __post_init__(self):
        _freeze(self.values)
        _freeze(self.static_mask)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, :, self.names.index(name)]

    def static_matrix(self) -> np.ndarray:
        """One row of static feature values per county (taken at day 1)."""
        return self.values[1][:, self.static_mask].copy()


def load_schema(path) -> dict[str, str]:
    """Column-kind map from an INI-style config with a [columns] section."""
    import configparser

    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep column-name case
    read = cp.read(path)
    if not read or not cp.has_section("columns"):
        raise SchemaError(f"{path}: expected a [columns] section")
    schema = {}
    for name, kind in cp.items("columns"):
        kind = kind.strip()
        if kind not in KINDS:
            raise SchemaError(f"{path}: column {name!r} has unknown kind {kind!r}")
        schema[name] = kind
    return schema


def _parse_feature_file(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if not header or header[0].lower() != "county":
            raise SchemaError(f"{path}: first column must be 'county'")
        dated = len(header) > 1 and header[1].lower() == "date"
        cols = header[2:] if dated else header[1:]
        records = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not cell.strip() for cell in rec):
                continue
            county = rec[0].strip()
            day = None
            if dated:
                try:
                    day = date.fromisoformat(rec[1].strip())
                except ValueError as exc:
                    raise RowError(lineno, f"bad date {rec[1]!r}") from exc
            values = [cell.strip() for cell in (rec[2:] if dated else rec[1:])]
            records.append((county, day, values))
    return dated, cols, records


def load_features(sources, schema: dict[str, str], panel: CountyPanel) -> FeatureFrame:
    """Assemble the dense feature grid over the panel's (county, day) domain.

    Fill rules: sparse time-varying columns are forward-filled between and
    after reports and back-filled before the first report; static columns
    broadcast across days; policy-date cells expand to a days-elapsed counter
    (0 strictly before the date, 1 on it, +1 per later day; empty cell means
    the policy never took effect).  Variant columns are normalized to
    proportions per (county, day) after filling.  Rows keyed by counties
    absent from the panel are skipped with a warning.
    """
    counties = panel.counties
    lookup = {c: i for i, c in enumerate(counties)}
    n_days = panel.n_days
    names: list[str] = []
    kinds: list[str] = []
    grids: list[np.ndarray] = []
    skipped = 0

    for path in sources:
        dated, cols, records = _parse_feature_file(path)
        for col in cols:
            if col not in schema:
                raise SchemaError(f"{path}: column {col!r} missing from schema")
        base = len(names)
        names.extend(cols)
        kinds.extend(schema[c] for c in cols)
        grids.extend(_new_grid(n_days, len(counties)) for _ in cols)

        if dated:
            for j, col in enumerate(cols):
                if schema[col] == "policy_date":
                    raise SchemaError(f"{path}: policy_date column {col!r} in a dated file")
            for county, day, values in records:
                ci = lookup.get(county)
                if ci is None:
                    skipped += 1
                    continue
                t = (day - panel.epoch).days + 1
                if not 1 <= t <= n_days:
                    continue
                for j, cell in enumerate(values):
                    if cell != "":
                        grids[base + j][t, ci] = float(cell)
            for j in range(len(cols)):
                _fill_time_series(grids[base + j])
        else:
            for county, _, values in records:
                ci = lookup.get(county)
                if ci is None:
                    skipped += 1
                    continue
                for j, cell in enumerate(values):
                    col = cols[j]
                    if schema[col] == "policy_date":
                        grids[base + j][1:, ci] = _days_elapsed(cell, panel.epoch, n_days)
                    elif cell != "":
                        grids[base + j][1:, ci] = float(cell)

    if skipped:
        log.warning("skipped %d feature rows for counties absent from the panel", skipped)

    values = np.stack(grids, axis=2) if grids else np.zeros((n_days + 1, len(counties), 0))
    values[0, :, :] = np.nan

    variant_idx = [i for i, k in enumerate(kinds) if k == "variant"]
    if variant_idx:
        block = values[:, :, variant_idx]
        totals = block.sum(axis=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            normalized = block / totals[:, :, None]
        ok = totals > 0
        block[ok] = normalized[ok]
        values[:, :, variant_idx] = block

    static_mask = np.array([k == "static" for k in kinds], dtype=bool)
    return FeatureFrame(names, kinds, values, static_mask, list(counties))


def _days_elapsed(cell: str, epoch: date, n_days: int) -> np.ndarray:
    """Policy-date encoding: 0 before the date, 1 on it, incrementing after."""
    out = np.zeros(n_days)
    if cell == "":
        return out
    start = (date.fromisoformat(cell) - epoch).days + 1
    for t in range(1, n_days + 1):
        if t >= start:
            out[t - 1] = t - start + 1
    return out


def _fill_time_series(grid: np.ndarray) -> None:
    """Forward fill between/after reports, backfill before the first."""
    for c in range(grid.shape[1]):
        col = grid[:, c]
        seen = np.flatnonzero(~np.isnan(col[1:])) + 1
        if seen.size == 0:
            continue
        first = seen[0]
        col[1:first] = col[first]
        last_val = col[first]
        for t in range(first + 1, grid.shape[0]):
            if math.isnan(col[t]):
                col[t] = last_val
            else:
                last_val = col[t]


@dataclass(frozen=True)
class ModelingTable:
    """Log-incidence joined with features; the input to every estimator.

    ``ln_incident`` is ``(T + 1, C)`` with NaN where the incident entry is
    missing or filtered.  ``incident`` keeps the smoothed counts for scoring
    and allocation.  Rows iterate sorted by (county, day).
    """

    counties: list[str]
    ln_incident: np.ndarray
    incident: np.ndarray
    features: np.ndarray  # (T + 1, C, D)
    feature_names: list[str]
    static_mask: np.ndarray
    epoch: date | None = None
    true_rates: np.ndarray | None = None  # synthetic panels only
    _leaks: list = field(default_factory=lambda: [0], repr=False, compare=False)

    def __post_init__(self):
        for arr in (self.ln_incident, self.incident, self.features, self.static_mask, self.true_rates):
            _freeze(arr)

    @property
    def leak_count(self) -> int:
        """Total future-day reads attempted through any view of this table."""
        return self._leaks[0]

    @property
    def n_days(self) -> int:
        return self.ln_incident.shape[0] - 1

    @property
    def n_counties(self) -> int:
        return len(self.counties)

    def county_index(self, county: str) -> int:
        return self.counties.index(county)

    # -- accessor API shared with TableView ---------------------------------
    def max_day(self) -> int:
        return self.n_days

    def has_ln(self, t: int, ci: int) -> bool:
        if not 1 <= t <= self.n_days:
            return False
        return bool(np.isfinite(self.ln_incident[t, ci]))

    def ln(self, t: int, ci: int) -> float:
        if not 1 <= t <= self.n_days:
            return float("nan")
        return float(self.ln_incident[t, ci])

    def incident_at(self, t: int, ci: int) -> float:
        if not 1 <= t <= self.n_days:
            return float("nan")
        return float(self.incident[t, ci])

    def feature_vec(self, t: int, ci: int) -> np.ndarray:
        if not 1 <= t <= self.n_days:
            return np.full(self.features.shape[2], np.nan)
        return self.features[t, ci]

    def ln_matrix(self) -> np.ndarray:
        return self.ln_incident

    def features_tensor(self) -> np.ndarray:
        return self.features

    def true_rate(self, t: int, ci: int) -> float:
        if self.true_rates is None:
            raise SchemaError("table carries no generating rates")
        return float(self.true_rates[t, ci])

    def restricted(self, max_day: int) -> "TableView":
        return TableView(self, max_day)

    def iter_rows(self):
        """(county, day, ln_incident, features) sorted by (county, day)."""
        for ci, county in enumerate(self.counties):
            for t in range(1, self.n_days + 1):
                if np.isfinite(self.ln_incident[t, ci]):
                    yield county, t, float(self.ln_incident[t, ci]), self.features[t, ci]

    @property
    def n_rows(self) -> int:
        return int(np.isfinite(self.ln_incident[1:]).sum())


class TableView:
    """Day-guarded view of a :class:`ModelingTable`.

    Reads beyond ``max_day`` return missing values and are tallied in
    ``violations``; matrix accessors hand out copies with future rows masked,
    so estimators cannot leak future data even structurally.
    """

    def __init__(self, table: ModelingTable, max_day: int):
        if isinstance(table, TableView):
            self._table = table._table
            max_day = min(max_day, table._max_day)
        else:
            self._table = table
        self._max_day = min(max_day, self._table.n_days)
        self.violations = 0

    @property
    def counties(self):
        return self._table.counties

    @property
    def n_counties(self):
        return self._table.n_counties

    @property
    def feature_names(self):
        return self._table.feature_names

    @property
    def static_mask(self):
        return self._table.static_mask

    @property
    def epoch(self):
        return self._table.epoch

    @property
    def n_days(self) -> int:
        return self._max_day

    def max_day(self) -> int:
        return self._max_day

    def county_index(self, county: str) -> int:
        return self._table.county_index(county)

    def _guard(self, t: int) -> bool:
        if t > self._max_day:
            self.violations += 1
            self._table._leaks[0] += 1
            return False
        return True

    def has_ln(self, t: int, ci: int) -> bool:
        return self._guard(t) and self._table.has_ln(t, ci)

    def ln(self, t: int, ci: int) -> float:
        if not self._guard(t):
            return float("nan")
        return self._table.ln(t, ci)

    def incident_at(self, t: int, ci: int) -> float:
        if not self._guard(t):
            return float("nan")
        return self._table.incident_at(t, ci)

    def feature_vec(self, t: int, ci: int) -> np.ndarray:
        if not self._guard(t):
            return np.full(self._table.features.shape[2], np.nan)
        return self._table.feature_vec(t, ci)

    def ln_matrix(self) -> np.ndarray:
        out = self._table.ln_incident[: self._max_day + 1].copy()
        return out

    def features_tensor(self) -> np.ndarray:
        return self._table.features[: self._max_day + 1]

    def restricted(self, max_day: int) -> "TableView":
        return TableView(self, max_day)


def build_modeling_table(panel: CountyPanel, features: FeatureFrame) -> ModelingTable:
    """Join log-incidence with features, one row per non-missing entry."""
    if panel.incident is None:
        raise SchemaError("incident counts not populated")
    incident = panel.incident
    defined = np.isfinite(incident)
    defined[0, :] = False
    if features.values.shape[:2] != incident.shape:
        raise SchemaError("feature grid does not cover the panel's (day, county) domain")

    gaps = []
    feature_ok = np.isfinite(features.values).all(axis=2)
    for t, c in zip(*np.nonzero(defined & ~feature_ok)):
        gaps.append((panel.counties[c], int(t)))
    if gaps:
        raise JoinError(gaps)

    ln = np.full_like(incident, np.nan)
    ln[defined] = np.log(incident[defined])
    if not defined.any():
        log.warning("modeling table is empty: every incident entry is missing or filtered")
    return ModelingTable(
        counties=list(panel.counties),
        ln_incident=ln,
        incident=incident.copy(),
        features=features.values.copy(),
        feature_names=list(features.names),
        static_mask=features.static_mask.copy(),
        epoch=panel.epoch,
    )


def write_modeling_table(table: ModelingTable, path) -> None:
    """Serialize the table for inspection (county, day, date, ln, features)."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["county", "day", "date", "ln_incident", *table.feature_names])
        for county, t, ln, feats in table.iter_rows():
            day_date = ""
            if table.epoch is not None:
                day_date = (table.epoch + timedelta(days=t - 1)).isoformat()
            writer.writerow(
                [county, t, day_date, format(ln, ".12g"), *(format(v, ".12g") for v in feats)]
            )
