import itertools

import numpy as np
import pytest

from casegrowth.errors import DomainError, InsufficientDataError
from casegrowth.panel import FeatureFrame
from casegrowth.windows import (
    ClusterAssignment,
    fold_schedule,
    kmeans_clusters,
    select_cluster_window,
    select_ctcv,
    select_tcv,
)
from tests.conftest import table_from_ln


def brute_force_delta(table, t, grid, county_indices):
    """Independent selection oracle: numpy polyfit slopes, pooled mean abs error."""
    ln = table.ln_incident[: t + 1]
    best, best_err = None, np.inf
    for delta in sorted(grid):
        errs = []
        for n in range(1, t - 20 + 1):
            e, v = n + 13, n + 20
            for ci in county_indices:
                window = ln[e - delta + 1 : e + 1, ci]
                if np.isfinite(window).all() and np.isfinite(ln[v, ci]):
                    slope = np.polyfit(np.arange(delta, dtype=float), window, 1)[0]
                    errs.append(abs(window[-1] + 7 * slope - ln[v, ci]))
        if errs and np.mean(errs) < best_err:
            best, best_err = delta, np.mean(errs)
    return best


def break_table(n_counties=3, n_days=45, break_day=35, r1=0.15, r2=-0.2, sigma=0.05, seed=3):
    rng = np.random.default_rng(seed)
    ln = np.full((n_days + 1, n_counties), np.nan)
    for ci in range(n_counties):
        ln[1, ci] = 5.0 + 0.2 * ci + sigma * rng.normal()
        for t in range(2, n_days + 1):
            rate = r1 if t <= break_day else r2
            ln[t, ci] = (5.0 + 0.2 * ci + sum(r1 if s <= break_day else r2 for s in range(2, t + 1))
                         + sigma * rng.normal())
    return table_from_ln(ln)


class TestFoldSchedule:
    def test_day_21_single_fold(self):
        schedule = fold_schedule(21)
        assert len(schedule) == 1
        fold = schedule.folds[0]
        assert (fold.train_start, fold.train_end, fold.validation_day) == (1, 14, 21)

    def test_day_22_two_folds(self):
        assert len(fold_schedule(22)) == 2

    def test_day_40_last_fold(self):
        fold = fold_schedule(40).folds[-1]
        assert (fold.train_start, fold.train_end, fold.validation_day) == (20, 33, 40)

    def test_insufficient_history(self):
        with pytest.raises(InsufficientDataError):
            fold_schedule(20)

    @pytest.mark.parametrize("t", [21, 30, 55, 120])
    def test_anti_leakage_structure(self, t):
        for fold in fold_schedule(t).folds:
            assert fold.train_end < fold.validation_day <= t


class TestSelectTCV:
    def test_exact_exponential_ties_break_to_smallest(self, exp_table):
        choice = select_tcv(exp_table, 30)
        assert choice.delta == 2
        assert choice.scope == "national"

    def test_singleton_grid(self, exp_table):
        assert select_tcv(exp_table, 30, grid=[5]).delta == 5

    def test_break_shrinks_window_and_matches_oracle(self):
        table = break_table()
        grid = range(2, 15)
        pre, post = 34, 45
        choice_pre = select_tcv(table, pre, grid)
        choice_post = select_tcv(table, post, grid)
        assert choice_pre.delta == brute_force_delta(table, pre, grid, range(3))
        assert choice_post.delta == brute_force_delta(table, post, grid, range(3))
        assert choice_post.delta < choice_pre.delta

    def test_short_history_errors(self, exp_table):
        with pytest.raises(InsufficientDataError):
            select_tcv(exp_table, 20)


class TestSelectCTCV:
    def test_counties_with_different_breaks_choose_differently(self):
        rng = np.random.default_rng(11)
        n_days = 50
        ln = np.full((n_days + 1, 2), np.nan)
        for t in range(1, n_days + 1):
            # county 0 breaks at day 40, county 1 stays on one regime
            r0 = 0.15 if t <= 40 else -0.25
            ln[t, 0] = (ln[t - 1, 0] if t > 1 else 5.0) + (r0 if t > 1 else 0.0)
            ln[t, 1] = (ln[t - 1, 1] if t > 1 else 5.0) + (0.15 if t > 1 else 0.0)
        ln += 0.04 * rng.normal(size=ln.shape)
        ln[0] = np.nan
        table = table_from_ln(ln)
        c0 = select_ctcv(table, 50, table.counties[0])
        c1 = select_ctcv(table, 50, table.counties[1])
        assert c0.delta != c1.delta
        assert c0.delta == brute_force_delta(table, 50, range(2, 15), [0])
        assert c1.delta == brute_force_delta(table, 50, range(2, 15), [1])

    def test_single_county_table_matches_tcv(self):
        table = break_table(n_counties=1)
        assert select_ctcv(table, 45, table.counties[0]).delta == select_tcv(table, 45).delta

    def test_short_history_errors(self, exp_table):
        with pytest.raises(InsufficientDataError):
            select_ctcv(exp_table, 19, "c000")


def frame_from_points(points):
    points = np.asarray(points, dtype=float)
    n, d = points.shape
    counties = [f"c{i:03d}" for i in range(n)]
    values = np.zeros((3, n, d))
    values[1:] = points[None, :, :]
    values[0] = np.nan
    names = [f"s{j}" for j in range(d)]
    return FeatureFrame(names, ["static"] * d, values, np.ones(d, dtype=bool), counties)


def partition_sse(points, groups):
    sse = 0.0
    for group in groups:
        pts = points[list(group)]
        sse += ((pts - pts.mean(axis=0)) ** 2).sum()
    return sse


class TestKMeans:
    def test_k_equals_counties_degenerate(self):
        frame = frame_from_points([[0, 0], [1, 1], [2, 2]])
        clusters = kmeans_clusters(frame, 3, seed=1)
        assert sorted(clusters.assignment.values()) == [0, 1, 2]

    def test_k_one(self):
        frame = frame_from_points([[0, 0], [1, 1], [5, 2]])
        clusters = kmeans_clusters(frame, 1, seed=1)
        assert set(clusters.assignment.values()) == {0}

    @pytest.mark.parametrize("seed", [0, 1, 7, 99])
    def test_square_corners_match_exhaustive_oracle(self, seed):
        points = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
        frame = frame_from_points(points)
        clusters = kmeans_clusters(frame, 2, seed=seed)
        z = (points - points.mean(axis=0)) / points.std(axis=0)
        groups = {}
        for i, county in enumerate(frame.counties):
            groups.setdefault(clusters.assignment[county], []).append(i)
        got = partition_sse(z, groups.values())
        best = min(
            partition_sse(z, [left, [i for i in range(4) if i not in left]])
            for r in range(1, 4)
            for left in itertools.combinations(range(4), r)
        )
        assert got == pytest.approx(best)

    def test_determinism(self):
        rng = np.random.default_rng(0)
        frame = frame_from_points(rng.normal(size=(30, 4)))
        a = kmeans_clusters(frame, 5, seed=123)
        b = kmeans_clusters(frame, 5, seed=123)
        assert a.assignment == b.assignment
        assert np.array_equal(a.centroids, b.centroids)

    def test_sse_non_increasing(self):
        rng = np.random.default_rng(2)
        pts = np.concatenate([rng.normal(size=(20, 3)), rng.normal(loc=4, size=(20, 3))])
        frame = frame_from_points(pts)
        clusters = kmeans_clusters(frame, 4, seed=5)
        history = np.array(clusters.sse_history)
        assert (np.diff(history) <= 1e-9).all()

    def test_k_exceeding_counties_errors(self):
        frame = frame_from_points([[0, 0], [1, 1]])
        with pytest.raises(DomainError):
            kmeans_clusters(frame, 3, seed=1)


class TestClusterWindowReductions:
    def test_k1_equals_tcv(self):
        table = break_table(n_counties=4, sigma=0.06, seed=9)
        assignment = ClusterAssignment(
            1, {c: 0 for c in table.counties}, np.zeros((1, 1)), (0.0,)
        )
        for t in (34, 40, 45):
            assert (
                select_cluster_window(table, assignment, t, 0).delta
                == select_tcv(table, t).delta
            )

    def test_k_equals_counties_equals_ctcv(self):
        table = break_table(n_counties=4, sigma=0.06, seed=10)
        assignment = ClusterAssignment(
            4, {c: i for i, c in enumerate(table.counties)}, np.zeros((4, 1)), (0.0,)
        )
        for t in (34, 45):
            for i, county in enumerate(table.counties):
                assert (
                    select_cluster_window(table, assignment, t, i).delta
                    == select_ctcv(table, t, county).delta
                )

    def test_singleton_cluster_equals_ctcv(self):
        table = break_table(n_counties=3, seed=12)
        assignment = ClusterAssignment(
            2, {table.counties[0]: 0, table.counties[1]: 1, table.counties[2]: 1},
            np.zeros((2, 1)), (0.0,),
        )
        assert (
            select_cluster_window(table, assignment, 45, 0).delta
            == select_ctcv(table, 45, table.counties[0]).delta
        )
