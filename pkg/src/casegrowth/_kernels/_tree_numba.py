"""numba implementations of the tree and clustering kernels.

Kept in one module so the LLVM object cache is loaded at most once per
process.  fastmath stays off: the numpy fallback must see the same IEEE
operation order (see tests/test_kernels.py).
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D4A849D95D14BD)


@njit(cache=True, nogil=True, inline="always")
def _mix64(state):
    z = state
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def grow_tree(X, y, sidx, min_node, mtry, seed):
    """Greedy variance-reduction tree on the structure sample ``sidx``.

    Returns flat node arrays (feat, thr, left, right) where ``feat[i] == -1``
    marks a leaf.  A split must leave at least ``min_node`` structure rows in
    each child and improve the node SSE by more than float noise; thresholds
    sit halfway between adjacent observed values, so strictly between them.
    """
    m = sidx.shape[0]
    d = X.shape[1]
    max_nodes = 2 * m + 1
    feat = np.full(max_nodes, -1, dtype=np.int64)
    thr = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)

    idx = sidx.copy()
    state = np.uint64(seed)
    perm = np.empty(d, dtype=np.int64)

    # DFS stack of (node, start, end); left child processed first.
    stack_node = np.empty(max_nodes, dtype=np.int64)
    stack_s = np.empty(max_nodes, dtype=np.int64)
    stack_e = np.empty(max_nodes, dtype=np.int64)
    stack_node[0] = 0
    stack_s[0] = 0
    stack_e[0] = m
    top = 1
    n_nodes = 1

    buf = np.empty(m, dtype=np.int64)

    while top > 0:
        top -= 1
        node = stack_node[top]
        s = stack_s[top]
        e = stack_e[top]
        size = e - s

        if size < 2 * min_node:
            continue
        ymin = y[idx[s]]
        ymax = ymin
        ty = 0.0
        ty2 = 0.0
        for i in range(s, e):
            v = y[idx[i]]
            ty += v
            ty2 += v * v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        if not (ymax > ymin):
            continue
        parent_sse = ty2 - ty * ty / size

        for i in range(d):
            perm[i] = i
        n_try = mtry if mtry < d else d
        for i in range(n_try):
            state = state + _GOLDEN
            j = i + np.int64(_mix64(state) % np.uint64(d - i))
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp

        best_sse = np.inf
        best_f = -1
        best_thr = 0.0
        for ci in range(n_try):
            f = perm[ci]
            vals = np.empty(size, dtype=np.float64)
            for i in range(size):
                vals[i] = X[idx[s + i], f]
            order = np.argsort(vals, kind="mergesort")
            ys = np.empty(size, dtype=np.float64)
            for i in range(size):
                ys[i] = y[idx[s + order[i]]]
            sl = 0.0
            sl2 = 0.0
            for p in range(1, size):
                v = ys[p - 1]
                sl += v
                sl2 += v * v
                if p < min_node or p > size - min_node:
                    continue
                lo = vals[order[p - 1]]
                hi = vals[order[p]]
                if not (lo < hi):
                    continue
                nl = np.float64(p)
                nr = np.float64(size - p)
                sse = (sl2 - sl * sl / nl) + ((ty2 - sl2) - (ty - sl) * (ty - sl) / nr)
                if sse < best_sse:
                    best_sse = sse
                    best_f = f
                    best_thr = (lo + hi) / 2.0

        if best_f < 0 or not (parent_sse - best_sse > 1e-10 * (1.0 + parent_sse)):
            continue

        nl = 0
        for i in range(s, e):
            if X[idx[i], best_f] <= best_thr:
                buf[nl] = idx[i]
                nl += 1
        nr = nl
        for i in range(s, e):
            if not (X[idx[i], best_f] <= best_thr):
                buf[nr] = idx[i]
                nr += 1
        for i in range(size):
            idx[s + i] = buf[i]

        feat[node] = best_f
        thr[node] = best_thr
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        stack_node[top] = rid
        stack_s[top] = s + nl
        stack_e[top] = e
        top += 1
        stack_node[top] = lid
        stack_s[top] = s
        stack_e[top] = s + nl
        top += 1

    return feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes]


@njit(cache=True, nogil=True)
def route_points(feat, thr, left, right, Xq):
    """Leaf node id reached by each query row under the stored splits."""
    nq = Xq.shape[0]
    out = np.empty(nq, dtype=np.int64)
    for i in range(nq):
        node = 0
        while feat[node] >= 0:
            if Xq[i, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True, nogil=True)
def assign_labels(X, centroids):
    """Nearest-centroid labels and the total within-cluster squared distance."""
    n = X.shape[0]
    k = centroids.shape[0]
    d = X.shape[1]
    labels = np.empty(n, dtype=np.int64)
    sse = 0.0
    for i in range(n):
        best = np.inf
        arg = 0
        for c in range(k):
            dist = 0.0
            for j in range(d):
                diff = X[i, j] - centroids[c, j]
                dist += diff * diff
            if dist < best:
                best = dist
                arg = c
        labels[i] = arg
        sse += best
    return labels, sse
