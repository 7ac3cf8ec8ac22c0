"""Honest regression forest over two-day data blocks, and the rate estimators
built on its similarity weights.

Each (county, day) pair with two consecutive log-incidence values becomes a
normalized block whose target is the day-over-day log difference (the block's
own two-point slope).  A forest of honest trees is grown on block slopes with
greedy variance-reduction splits; a query's similarity weight on a training
block is the average over trees of (same-leaf indicator / leaf estimation-set
size).  The rate estimate is the similarity-weighted mean of block slopes,
which makes a query whose leaves contain only its own block collapse to the
plain two-point estimator.

Block features are the table's feature vector augmented with the block's own
slope, the previous day's log incidence (the two-point fit's intercept), and
the day index; a query at (county, t) fills the same slots from its own day.

Pooling discipline: a day-``t`` estimate may only use blocks with day of the
same parity as ``t`` and not after ``t`` (adjacent blocks share a day and
would leak the target's own observation).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from casegrowth import _kernels
from casegrowth._rng import SplitMix64, derive_seed
from casegrowth.baseline import RateEstimate, ols_weights
from casegrowth.errors import DomainError, EmptyWeightsError, InsufficientDataError

AUGMENTED_FEATURES = ("initial_slope", "prev_log_incidence", "day_index")


@dataclass(frozen=True)
class DataBlock:
    """Normalized two-day training unit.

    ``y1`` is the outcome at treatment 1 (the log difference), ``y0`` is the
    outcome at treatment 0 and is identically zero, so the block's two-point
    fit has slope ``y1`` and intercept anchored at the previous day.
    """

    county: str
    day: int
    y1: float
    slope: float
    features: np.ndarray
    y0: float = 0.0

    @property
    def key(self) -> tuple[int, str]:
        return (self.day, self.county)


@dataclass(frozen=True)
class ForestParams:
    num_trees: int = 200
    min_node_size: int = 5
    mtry: int | None = None  # ceil(sqrt(d)) when unset
    subsample_fraction: float = 0.5
    honesty: bool = True
    honesty_fraction: float = 0.5

    def resolve_mtry(self, d: int) -> int:
        if self.mtry is not None:
            return max(1, min(self.mtry, d))
        return max(1, min(d, math.ceil(math.sqrt(d))))


@dataclass
class Tree:
    """One pruned honest tree: flat split arrays plus estimation leaf sets."""

    feat: np.ndarray
    thr: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_members: dict  # leaf node id -> np.ndarray of block positions
    depth: int

    def route(self, Xq: np.ndarray) -> np.ndarray:
        return _kernels.route_points(self.feat, self.thr, self.left, self.right, Xq)

    @property
    def alive(self) -> bool:
        return bool(self.leaf_members)

    @property
    def n_splits(self) -> int:
        return int((self.feat >= 0).sum())


@dataclass
class Forest:
    trees: list
    params: ForestParams
    seed: int
    blocks: list
    feature_names: list[str] | None = None
    pool_parity: int | None = None  # set when every block day shares a parity
    pool_max_day: int | None = None
    _X: np.ndarray | None = field(default=None, repr=False)

    @property
    def num_trees(self) -> int:
        return len(self.trees)

    @property
    def slopes(self) -> np.ndarray:
        return np.array([b.slope for b in self.blocks])


@dataclass(frozen=True)
class SimilarityWeights:
    """Convex weights over training blocks, keyed by (day, county)."""

    entries: dict

    def total(self) -> float:
        return float(sum(self.entries.values()))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ImportanceReport:
    names: list[str]
    scores: np.ndarray  # normalized, sums to 1 unless degenerate
    raw: np.ndarray
    splits_per_depth: dict
    degenerate: bool

    def ranked(self):
        order = np.argsort(-self.scores, kind="mergesort")
        return [(self.names[i], float(self.scores[i])) for i in order]


@dataclass(frozen=True)
class ForestDiagnostics:
    depths: tuple
    leaf_sizes: tuple
    mean_depth: float
    median_depth: float
    mean_leaf_size: float
    median_leaf_size: float


def make_blocks(table) -> list:
    """One block per (county, day) where this and the previous day both have
    log incidence; gaps simply produce no block."""
    ln = table.ln_matrix()
    feats = table.features_tensor()
    max_day = table.max_day() if hasattr(table, "max_day") else table.n_days
    blocks = []
    for ci, county in enumerate(table.counties):
        col = ln[:, ci]
        for t in range(2, max_day + 1):
            if np.isfinite(col[t]) and np.isfinite(col[t - 1]):
                slope = float(col[t] - col[t - 1])
                x = np.concatenate([feats[t, ci], [slope, float(col[t - 1]), float(t)]])
                blocks.append(DataBlock(county=county, day=t, y1=slope, slope=slope, features=x))
    return blocks


def block_feature_names(table) -> list[str]:
    return list(table.feature_names) + list(AUGMENTED_FEATURES)


def parity_pool(blocks, t: int) -> list:
    """Blocks usable for a day-``t`` estimate: day <= t and day = t (mod 2)."""
    if t < 2:
        raise DomainError("parity pooling needs t >= 2")
    return [b for b in blocks if b.day <= t and b.day % 2 == t % 2]


def _prune_tree(feat, thr, left, right, leaf_of_est, est_positions):
    """Collapse subtrees without estimation blocks; empty leaves never survive.

    Node ids are in parent-before-children order, so a reverse sweep computes
    subtree occupancy without recursion.
    """
    n = feat.shape[0]
    occupied = np.zeros(n, dtype=bool)
    members = {}
    for pos, leaf in zip(est_positions, leaf_of_est):
        members.setdefault(int(leaf), []).append(int(pos))
    for leaf in members:
        occupied[leaf] = True
    for node in range(n - 1, -1, -1):
        if feat[node] >= 0:
            occupied[node] = occupied[left[node]] or occupied[right[node]]

    if not occupied[0]:
        return Tree(
            feat=np.array([-1], dtype=np.int64),
            thr=np.zeros(1),
            left=np.array([-1], dtype=np.int64),
            right=np.array([-1], dtype=np.int64),
            leaf_members={},
            depth=0,
        )

    # rebuild, skipping single-occupied-child pass-through nodes
    nf, nt, nl, nr = [], [], [], []
    new_members = {}
    depth_max = 0
    stack = [(0, 0, None, False)]  # (old node, depth, parent new id, is_right)
    while stack:
        node, depth, parent, is_right = stack.pop()
        # descend through nodes with a single occupied child
        while feat[node] >= 0:
            lo, ro = occupied[left[node]], occupied[right[node]]
            if lo and ro:
                break
            node = left[node] if lo else right[node]
        new_id = len(nf)
        if feat[node] >= 0:
            nf.append(int(feat[node]))
            nt.append(float(thr[node]))
            nl.append(-1)
            nr.append(-1)
            stack.append((int(right[node]), depth + 1, new_id, True))
            stack.append((int(left[node]), depth + 1, new_id, False))
        else:
            nf.append(-1)
            nt.append(0.0)
            nl.append(-1)
            nr.append(-1)
            new_members[new_id] = np.array(sorted(members[node]), dtype=np.int64)
            depth_max = max(depth_max, depth)
        if parent is not None:
            if is_right:
                nr[parent] = new_id
            else:
                nl[parent] = new_id

    return Tree(
        feat=np.array(nf, dtype=np.int64),
        thr=np.array(nt),
        left=np.array(nl, dtype=np.int64),
        right=np.array(nr, dtype=np.int64),
        leaf_members=new_members,
        depth=depth_max,
    )


def _build_tree(X, y, params, mtry, tree_seed):
    n = X.shape[0]
    rng = SplitMix64(tree_seed)
    m = max(2, int(n * params.subsample_fraction))
    m = min(m, n)
    sample = rng.sample_indices(n, m)
    if params.honesty:
        n_struct = max(1, min(m - 1, int(m * params.honesty_fraction + 0.5)))
        struct = sample[:n_struct]
        est = sample[n_struct:]
    else:
        struct = sample
        est = sample
    kernel_seed = np.uint64(rng.next_u64())
    feat, thr, left, right = _kernels.grow_tree(
        X, y, struct, params.min_node_size, mtry, kernel_seed
    )
    leaves = _kernels.route_points(feat, thr, left, right, X[est])
    return _prune_tree(feat, thr, left, right, leaves, est)


def train_forest(blocks, params: ForestParams, seed: int, feature_names=None, workers: int = 1) -> Forest:
    """Grow ``params.num_trees`` honest trees on the block slopes.

    Per tree: subsample without replacement, split the subsample into a
    structure half (chooses splits) and an estimation half (populates leaves),
    grow greedily on ``mtry`` random features, stop when a child would fall
    below ``min_node_size`` structure blocks.  Tree seeds derive from the
    master seed by index, so serial and parallel runs agree bit for bit.
    """
    if not blocks:
        raise DomainError("cannot train a forest on zero blocks")
    if len(blocks) < 2:
        raise DomainError("need at least two blocks")
    X = np.ascontiguousarray(np.stack([b.features for b in blocks]))
    if not np.isfinite(X).all():
        raise DomainError("block features contain non-finite values")
    y = np.array([b.slope for b in blocks])
    mtry = params.resolve_mtry(X.shape[1])
    seeds = [derive_seed(seed, b) for b in range(params.num_trees)]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(lambda s: _build_tree(X, y, params, mtry, s), seeds))
    else:
        trees = [_build_tree(X, y, params, mtry, s) for s in seeds]

    days = {b.day for b in blocks}
    parities = {d % 2 for d in days}
    parity = parities.pop() if len(parities) == 1 else None
    return Forest(
        trees=trees,
        params=params,
        seed=seed,
        blocks=list(blocks),
        feature_names=list(feature_names) if feature_names is not None else None,
        pool_parity=parity,
        pool_max_day=max(days),
        _X=X,
    )


def similarity_weights(forest: Forest, x: np.ndarray) -> SimilarityWeights:
    """Per-block weight: average over trees of co-leaf indicator over leaf size.

    Trees whose routed leaf lost its estimation set contribute nothing; if
    every tree is in that state the query has no support and that is an error
    rather than a silent fallback.
    """
    xq = np.ascontiguousarray(x, dtype=np.float64).reshape(1, -1)
    n_trees = forest.num_trees
    acc = {}
    contributing = 0
    for tree in forest.trees:
        if not tree.alive:
            continue
        leaf = int(tree.route(xq)[0])
        members = tree.leaf_members.get(leaf)
        if members is None or members.size == 0:
            continue
        contributing += 1
        share = 1.0 / (n_trees * members.size)
        for pos in members:
            acc[pos] = acc.get(pos, 0.0) + share
    if contributing == 0:
        raise EmptyWeightsError("query found no populated leaf in any tree")
    entries = {forest.blocks[pos].key: w for pos, w in sorted(acc.items())}
    return SimilarityWeights(entries=entries)


def predict_slope(forest: Forest, x: np.ndarray) -> float:
    """Similarity-weighted mean of block slopes for a raw feature vector."""
    weights = similarity_weights(forest, x)
    by_key = {b.key: b.slope for b in forest.blocks}
    return float(sum(w * by_key[key] for key, w in weights.entries.items()))


def _target_vector(table, county: str, t: int):
    ci = table.county_index(county)
    if not (table.has_ln(t, ci) and table.has_ln(t - 1, ci)):
        raise InsufficientDataError(
            f"county {county} day {t}: target block needs log incidence on days {t - 1} and {t}"
        )
    ln_now = table.ln(t, ci)
    ln_prev = table.ln(t - 1, ci)
    slope = ln_now - ln_prev
    return np.concatenate([table.feature_vec(t, ci), [slope, ln_prev, float(t)]])


def estimate_tlgrf(forest: Forest, table, county: str, t: int) -> RateEstimate:
    """Transfer-learning rate estimate at (county, t) from a forest trained on
    the day-``t`` parity pool."""
    if forest.pool_parity is not None:
        if t % 2 != forest.pool_parity or (forest.pool_max_day or 0) > t:
            raise DomainError(
                f"forest pool (parity {forest.pool_parity}, max day {forest.pool_max_day}) "
                f"cannot serve day {t}"
            )
    x = _target_vector(table, county, t)
    rate = predict_slope(forest, x)
    return RateEstimate(county=county, day=t, rate=rate, method="tlgrf")


def estimate_tlgrf_delta(bank, table, county: str, t: int, delta: int) -> RateEstimate:
    """Window-weighted combination of transfer-learning estimates.

    The fixed-window weights multiply the estimates at days t, t-1, ...,
    t-delta+2; each inner estimate comes from a forest pooled for its own day
    (``bank`` caches those).  delta=2 is exactly the plain estimator.
    """
    w = ols_weights(delta)
    rate = 0.0
    for k, weight in enumerate(w.weights):
        t_minus = t - k
        try:
            inner = bank.estimate(t_minus, county)
        except (InsufficientDataError, EmptyWeightsError) as exc:
            raise InsufficientDataError(f"inner estimate at day {t_minus} failed: {exc}") from exc
        rate += weight * inner.rate
    return RateEstimate(county=county, day=t, rate=rate, method=f"tlgrf-delta:{delta}", window=delta)


def estimate_time_only(table, county: str, t: int, params: ForestParams, seed: int) -> RateEstimate:
    """Transfer-learning estimate pooling only the target county's history."""
    blocks = [b for b in make_blocks(table) if b.county == county]
    pool = parity_pool(blocks, t)
    if len(pool) < 2:
        raise InsufficientDataError(
            f"county {county} day {t}: time-only pooling needs at least two same-county blocks"
        )
    forest = train_forest(pool, params, seed, feature_names=block_feature_names(table))
    est = estimate_tlgrf(forest, table, county, t)
    return RateEstimate(county=county, day=t, rate=est.rate, method="tlgrf-time-only")


class ForestBank:
    """Lazily trained, cached forests keyed by pooling day.

    Seeds derive from (master seed, day), so the cache contents do not depend
    on query order and repeated runs agree exactly.
    """

    def __init__(self, table, params: ForestParams, seed: int, workers: int = 1):
        self.table = table
        self.params = params
        self.seed = seed
        self.workers = workers
        self._forests = {}

    def forest(self, t: int) -> Forest:
        if t not in self._forests:
            view = self.table.restricted(t)
            pool = parity_pool(make_blocks(view), t)
            if len(pool) < 2:
                raise InsufficientDataError(f"day {t}: fewer than two pooled blocks")
            self._forests[t] = train_forest(
                pool,
                self.params,
                derive_seed(self.seed, t),
                feature_names=block_feature_names(self.table),
                workers=self.workers,
            )
        return self._forests[t]

    def estimate(self, t: int, county: str) -> RateEstimate:
        return estimate_tlgrf(self.forest(t), self.table.restricted(t), county, t)


def feature_importance(forest: Forest) -> ImportanceReport:
    """Split-frequency importance, halved per level below the root and
    normalized to sum to one."""
    if forest.feature_names is not None:
        names = list(forest.feature_names)
        d = len(names)
    else:
        d = forest._X.shape[1] if forest._X is not None else int(
            max((int(t.feat.max()) for t in forest.trees), default=-1) + 1
        )
        names = [f"f{i}" for i in range(d)]
    raw = np.zeros(d)
    per_depth = {}
    for tree in forest.trees:
        stack = [(0, 0)]
        while stack:
            node, level = stack.pop()
            f = int(tree.feat[node])
            if f < 0:
                continue
            raw[f] += 2.0 ** (-level)
            per_depth[level] = per_depth.get(level, 0) + 1
            stack.append((int(tree.right[node]), level + 1))
            stack.append((int(tree.left[node]), level + 1))
    total = raw.sum()
    degenerate = total <= 0.0
    scores = raw / total if not degenerate else raw.copy()
    return ImportanceReport(
        names=names, scores=scores, raw=raw, splits_per_depth=per_depth, degenerate=degenerate
    )


def forest_diagnostics(forest: Forest) -> ForestDiagnostics:
    """Per-tree depth and estimation-leaf size distributions."""
    depths = tuple(t.depth for t in forest.trees)
    sizes = tuple(
        int(members.size) for t in forest.trees for members in t.leaf_members.values()
    )
    return ForestDiagnostics(
        depths=depths,
        leaf_sizes=sizes,
        mean_depth=float(np.mean(depths)) if depths else 0.0,
        median_depth=float(np.median(depths)) if depths else 0.0,
        mean_leaf_size=float(np.mean(sizes)) if sizes else 0.0,
        median_leaf_size=float(np.median(sizes)) if sizes else 0.0,
    )
