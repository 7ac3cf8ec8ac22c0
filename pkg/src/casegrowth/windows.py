"""Dynamic fitting-window selection by rolling time-series cross validation.

Each fold trains on a 14-day span and validates on the day seven days after
the span's end (day n .. n+13 -> validate n+20), so a day-``t`` selection has
``t - 20`` folds and never touches data past ``t``.  A candidate window size
is scored by fitting at the fold's train end, forecasting the validation day
with the seven-day exponential rule, and averaging the absolute log-scale
error over every evaluable (fold, county) cell; the smallest window wins
ties.  Selection can run nationally (one window for all counties), per county,
or per k-means cluster of counties with similar static features.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from casegrowth import _kernels
from casegrowth._rng import SplitMix64, derive_seed
from casegrowth.baseline import DELTA_GRID, ols_weights
from casegrowth.errors import DomainError, InsufficientDataError, SelectionError

log = logging.getLogger(__name__)

TRAIN_SPAN = 14
VALIDATION_LAG = 7  # from train end; matches the forecast horizon
MIN_SELECTION_DAY = TRAIN_SPAN + VALIDATION_LAG  # 21
KMEANS_MAX_ITER = 10_000
KMEANS_RESTARTS = 10  # seeded restarts; lowest final sse wins


@dataclass(frozen=True)
class Fold:
    train_start: int
    train_end: int
    validation_day: int


@dataclass(frozen=True)
class FoldSchedule:
    folds: tuple[Fold, ...]

    def __post_init__(self):
        prev = None
        for f in self.folds:
            if f.validation_day <= f.train_end:
                raise DomainError("fold validates inside or before its training span")
            if prev is not None and f.train_start <= prev.train_start:
                raise DomainError("folds out of order")
            prev = f

    def __len__(self):
        return len(self.folds)


@dataclass(frozen=True)
class WindowChoice:
    scope: str  # national | county | cluster
    day: int
    key: str | int | None
    delta: int


def fold_schedule(t: int) -> FoldSchedule:
    """The ``t - 20`` rolling folds available on day ``t``."""
    if t < MIN_SELECTION_DAY:
        raise InsufficientDataError(
            f"window selection needs day >= {MIN_SELECTION_DAY}, got {t}"
        )
    folds = tuple(
        Fold(n, n + TRAIN_SPAN - 1, n + TRAIN_SPAN - 1 + VALIDATION_LAG)
        for n in range(1, t - (MIN_SELECTION_DAY - 1) + 1)
    )
    return FoldSchedule(folds)


def _cv_mean_errors(table, t, grid, county_indices, error_scale="log"):
    """Mean forecast error per candidate window, pooled over fold x county cells."""
    view = table.restricted(t)
    ln = view.ln_matrix()  # rows 0..t, future rows unavailable by construction
    schedule = fold_schedule(t)
    sums = {delta: 0.0 for delta in grid}
    counts = {delta: 0 for delta in grid}
    for fold in schedule.folds:
        e, v = fold.train_end, fold.validation_day
        for ci in county_indices:
            truth = ln[v, ci]
            if not np.isfinite(truth):
                continue
            for delta in grid:
                if e - delta + 1 < fold.train_start:
                    continue  # window would leave the fold's training span
                window = ln[e - delta + 1 : e + 1, ci]
                if not np.isfinite(window).all():
                    continue
                weights = ols_weights(delta).weights
                slope = 0.0
                for k, w in enumerate(weights):
                    slope += w * (window[delta - 1 - k] - window[delta - 2 - k])
                predicted = window[delta - 1] + VALIDATION_LAG * slope
                if error_scale == "log":
                    err = abs(predicted - truth)
                else:
                    err = abs(math.exp(predicted) - math.exp(truth))
                sums[delta] += err
                counts[delta] += 1
    return {
        delta: (sums[delta] / counts[delta]) if counts[delta] else math.inf
        for delta in grid
    }


def _argmin_delta(errors, grid):
    best_delta, best_err = None, math.inf
    for delta in grid:  # ascending grid order makes ties pick the smaller delta
        err = errors[delta]
        if best_delta is None and math.isfinite(err):
            best_delta, best_err = delta, err
            continue
        # improvements inside float noise are ties; the smaller delta stands
        if err < best_err - max(1e-12, 1e-9 * best_err):
            best_delta, best_err = delta, err
    if best_delta is None:
        raise SelectionError("no (fold, county) cell was evaluable for any window size")
    return best_delta


def select_tcv(table, t: int, grid=DELTA_GRID, error_scale="log") -> WindowChoice:
    """One national window size for day ``t``."""
    grid = sorted(grid)
    errors = _cv_mean_errors(table, t, grid, range(table.n_counties), error_scale)
    return WindowChoice("national", t, None, _argmin_delta(errors, grid))


def select_ctcv(table, t: int, county: str, grid=DELTA_GRID, error_scale="log") -> WindowChoice:
    """A county-specific window size for day ``t``."""
    grid = sorted(grid)
    ci = table.county_index(county)
    errors = _cv_mean_errors(table, t, grid, [ci], error_scale)
    return WindowChoice("county", t, county, _argmin_delta(errors, grid))


def select_cluster_window(
    table, clusters: "ClusterAssignment", t: int, cluster_id: int, grid=DELTA_GRID, error_scale="log"
) -> WindowChoice:
    """A shared window size for every county in one cluster on day ``t``."""
    grid = sorted(grid)
    members = [
        table.county_index(c) for c, cid in clusters.assignment.items() if cid == cluster_id
    ]
    if not members:
        raise DomainError(f"cluster {cluster_id} has no members")
    errors = _cv_mean_errors(table, t, grid, sorted(members), error_scale)
    return WindowChoice("cluster", t, cluster_id, _argmin_delta(errors, grid))


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    assignment: dict  # county id -> dense cluster id
    centroids: np.ndarray
    sse_history: tuple[float, ...]

    def members(self, cluster_id: int) -> list[str]:
        return sorted(c for c, cid in self.assignment.items() if cid == cluster_id)


def _zscore(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return (X - mean) / std


def _kmeanspp_seed(X, k, rng):
    n = X.shape[0]
    chosen = [rng.randbelow(n)]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        total = float(d2.sum())
        if total <= 0.0:
            # all remaining mass is on already-chosen points; fall back to uniform
            remaining = [i for i in range(n) if i not in set(chosen)]
            pick = remaining[rng.randbelow(len(remaining))]
        else:
            u = rng.uniform() * total
            pick = int(np.searchsorted(np.cumsum(d2), u, side="right"))
            pick = min(pick, n - 1)
        chosen.append(pick)
        d2 = np.minimum(d2, ((X - X[pick]) ** 2).sum(axis=1))
    return X[chosen].copy()


def kmeans_clusters(static_features, k: int, seed: int) -> ClusterAssignment:
    """Partition counties by z-scored static features: k-means++ seeding, then
    Lloyd iterations to an assignment fixpoint (at most 10,000).

    ``static_features`` is a FeatureFrame (its static columns are used) or any
    object with ``static_matrix()`` and ``counties``-compatible ordering plus a
    ``counties`` attribute; a ModelingTable works too.
    """
    if hasattr(static_features, "static_matrix"):
        X = static_features.static_matrix()
        counties = getattr(static_features, "counties", None)
    else:
        X = static_features.features[1][:, static_features.static_mask].copy()
        counties = static_features.counties
    if counties is None:
        raise DomainError("static feature source lacks county ids")
    n = X.shape[0]
    if k > n:
        raise DomainError(f"k={k} exceeds the number of counties ({n})")
    if k < 1:
        raise DomainError("k must be >= 1")
    if X.shape[1] == 0:
        raise DomainError("no static features available for clustering")

    Xz = _zscore(X)
    if k == n:
        # degenerate case: every county is its own cluster
        assignment = {c: i for i, c in enumerate(counties)}
        return ClusterAssignment(k, assignment, Xz.copy(), (0.0,))

    best = None
    for restart in range(KMEANS_RESTARTS):
        rng = SplitMix64(derive_seed(seed, 0x6B6D65616E73, restart))
        centroids = _kmeanspp_seed(Xz, k, rng)
        labels = np.full(n, -1, dtype=np.int64)
        history = []
        for _ in range(KMEANS_MAX_ITER):
            new_labels, sse = _kernels.assign_labels(Xz, centroids)
            history.append(float(sse))
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels
            for c in range(k):
                members = labels == c
                if members.any():
                    centroids[c] = Xz[members].mean(axis=0)
        if best is None or history[-1] < best[0]:
            best = (history[-1], labels, centroids, history)

    _, labels, centroids, history = best
    used = np.unique(labels)
    if used.size < k:
        log.warning("k-means converged with %d empty clusters", k - used.size)
    remap = {int(old): new for new, old in enumerate(used.tolist())}
    assignment = {c: remap[int(labels[i])] for i, c in enumerate(counties)}
    centroids = centroids[used]
    return ClusterAssignment(len(used), assignment, centroids, tuple(history))
