"""Pure-numpy fallback for the tree and clustering kernels.

Mirrors ``_tree_numba`` operation for operation: sequential prefix sums via
``np.cumsum``, stable mergesort ordering, the same splitmix64 stream for
feature sampling, and first-minimum tie breaking, so the two paths grow
bit-identical trees.
"""

import numpy as np

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(state):
    z = state & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D4A849D95D14BD) & _M64
    return z ^ (z >> 31)


def grow_tree(X, y, sidx, min_node, mtry, seed):
    """Greedy variance-reduction tree on the structure sample ``sidx``.

    Same contract as the numba kernel: flat (feat, thr, left, right) arrays
    with ``feat == -1`` marking leaves.
    """
    m = sidx.shape[0]
    d = X.shape[1]
    max_nodes = 2 * m + 1
    feat = np.full(max_nodes, -1, dtype=np.int64)
    thr = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)

    idx = sidx.copy()
    state = int(seed) & _M64
    n_try = min(mtry, d)

    stack = [(0, 0, m)]
    n_nodes = 1

    while stack:
        node, s, e = stack.pop()
        size = e - s
        if size < 2 * min_node:
            continue
        seg = idx[s:e]
        yseg = y[seg]
        if not (yseg.max() > yseg.min()):
            continue
        ty = float(np.cumsum(yseg)[-1])
        ty2 = float(np.cumsum(yseg * yseg)[-1])
        parent_sse = ty2 - ty * ty / size

        perm = np.arange(d, dtype=np.int64)
        for i in range(n_try):
            state = (state + _GOLDEN) & _M64
            j = i + _mix64(state) % (d - i)
            perm[i], perm[j] = perm[j], perm[i]

        best_sse = np.inf
        best_f = -1
        best_thr = 0.0
        nl_arr = np.arange(1, size, dtype=np.float64)
        nr_arr = np.float64(size) - nl_arr
        for ci in range(n_try):
            f = int(perm[ci])
            vals = X[seg, f]
            order = np.argsort(vals, kind="mergesort")
            vs = vals[order]
            ys = yseg[order]
            cy = np.cumsum(ys)
            cy2 = np.cumsum(ys * ys)
            sl = cy[:-1]
            sl2 = cy2[:-1]
            sse = (sl2 - sl * sl / nl_arr) + ((ty2 - sl2) - (ty - sl) * (ty - sl) / nr_arr)
            p = np.arange(1, size)
            valid = (p >= min_node) & (p <= size - min_node) & (vs[:-1] < vs[1:])
            if not valid.any():
                continue
            sse = np.where(valid, sse, np.inf)
            pi = int(np.argmin(sse))
            if sse[pi] < best_sse:
                best_sse = float(sse[pi])
                best_f = f
                best_thr = (vs[pi] + vs[pi + 1]) / 2.0

        if best_f < 0 or not (parent_sse - best_sse > 1e-10 * (1.0 + parent_sse)):
            continue

        go_left = X[seg, best_f] <= best_thr
        new_seg = np.concatenate([seg[go_left], seg[~go_left]])
        idx[s:e] = new_seg
        nl = int(go_left.sum())

        feat[node] = best_f
        thr[node] = best_thr
        lid, rid = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        stack.append((rid, s + nl, e))
        stack.append((lid, s, s + nl))

    return feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes]


def route_points(feat, thr, left, right, Xq):
    """Leaf node id reached by each query row under the stored splits."""
    nq = Xq.shape[0]
    node = np.zeros(nq, dtype=np.int64)
    rows = np.arange(nq)
    while True:
        f = feat[node]
        active = f >= 0
        if not active.any():
            return node
        fa = np.where(active, f, 0)
        go_left = Xq[rows, fa] <= thr[node]
        nxt = np.where(go_left, left[node], right[node])
        node = np.where(active, nxt, node)


def assign_labels(X, centroids):
    """Nearest-centroid labels and the total within-cluster squared distance."""
    diff = X[:, None, :] - centroids[None, :, :]
    dist = np.einsum("nkd,nkd->nk", diff, diff)
    labels = np.argmin(dist, axis=1).astype(np.int64)
    sse = float(dist[np.arange(X.shape[0]), labels].sum())
    return labels, sse
