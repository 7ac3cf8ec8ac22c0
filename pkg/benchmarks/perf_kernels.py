#!/usr/bin/env python3
"""Throughput comparison of the numba kernels against the numpy fallback.

Runs both implementations on identical inputs (they produce bit-identical
trees; see tests/test_kernels.py) and reports per-call times.

    python benchmarks/perf_kernels.py [--trees 50] [--blocks 2000] [--features 24]
"""

import argparse
import time

import numpy as np

from casegrowth._kernels import _tree_numpy
from casegrowth._rng import derive_seed

try:
    from casegrowth._kernels import _tree_numba
except ImportError:
    _tree_numba = None


def time_call(fn, *args, repeat=5):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def bench_grow(impl, X, y, sidx, n_trees, min_node, mtry):
    def run():
        trees = []
        for b in range(n_trees):
            seed = np.uint64(derive_seed(9, b))
            trees.append(impl.grow_tree(X, y, sidx, min_node, mtry, seed))
        return trees

    return time_call(run, repeat=3)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trees", type=int, default=50)
    parser.add_argument("--blocks", type=int, default=2000)
    parser.add_argument("--features", type=int, default=24)
    parser.add_argument("--min-node", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    X = rng.normal(size=(args.blocks, args.features))
    y = rng.normal(size=args.blocks)
    sidx = rng.choice(args.blocks, size=args.blocks // 2, replace=False).astype(np.int64)
    mtry = max(1, int(np.ceil(np.sqrt(args.features))))

    impls = [("numpy", _tree_numpy)]
    if _tree_numba is not None:
        # trigger compilation outside the timed region
        _tree_numba.grow_tree(X[:32], y[:32], np.arange(16, dtype=np.int64), 2, 2, np.uint64(1))
        impls.insert(0, ("numba", _tree_numba))
    else:
        print("numba unavailable; timing the numpy path only")

    print(f"grow_tree: {args.trees} trees, {len(sidx)} structure rows, "
          f"{args.features} features, mtry {mtry}")
    grow_times = {}
    trees = {}
    for name, impl in impls:
        elapsed, result = bench_grow(impl, X, y, sidx, args.trees, args.min_node, mtry)
        grow_times[name] = elapsed
        trees[name] = result
        print(f"  {name:6s} {elapsed:8.3f}s  ({elapsed / args.trees * 1e3:7.2f} ms/tree)")
    if len(impls) == 2:
        print(f"  speedup {grow_times['numpy'] / grow_times['numba']:.1f}x")
        for a, b in zip(trees["numba"], trees["numpy"]):
            for u, v in zip(a, b):
                assert np.array_equal(u, v), "kernel paths diverged"
        print("  outputs identical across paths")

    print(f"route_points: {args.blocks} queries through one tree")
    tree = trees[impls[0][0]][0]
    for name, impl in impls:
        elapsed, _ = time_call(impl.route_points, *tree, X)
        print(f"  {name:6s} {elapsed * 1e3:8.2f} ms")

    k = 32
    centroids = X[:k].copy()
    print(f"assign_labels: {args.blocks} points, k={k}")
    for name, impl in impls:
        elapsed, _ = time_call(impl.assign_labels, X, centroids)
        print(f"  {name:6s} {elapsed * 1e3:8.2f} ms")


if __name__ == "__main__":
    main()
