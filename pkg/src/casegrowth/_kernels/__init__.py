"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The active path is chosen once at import time:

* numba path (default) when numba imports cleanly, or
* numpy path when ``CASEGROWTH_DISABLE_NUMBA`` is set to ``1``/``true``/``yes``
  or numba is unavailable.

Both paths implement the same algorithms with the same accumulation order and
the same splitmix64 feature sampling, so the tree kernels produce bit-identical
forests either way (covered by tests).  ``benchmarks/perf_kernels.py`` compares
their throughput.

Kernel surface:

* ``grow_tree(X, y, sidx, min_node, mtry, seed)`` -> flat tree arrays
* ``route_points(feat, thr, left, right, Xq)``    -> leaf node id per row
* ``assign_labels(X, centroids)``                 -> (labels, sse)
"""

import os

_flag = os.environ.get("CASEGROWTH_DISABLE_NUMBA", "").strip().lower()
_disabled = _flag in {"1", "true", "yes"}

USING_NUMBA = False
if not _disabled:
    try:
        from casegrowth._kernels._tree_numba import (  # noqa: F401
            assign_labels,
            grow_tree,
            route_points,
        )

        USING_NUMBA = True
    except ImportError:
        _disabled = True

if not USING_NUMBA:
    from casegrowth._kernels._tree_numpy import (  # noqa: F401
        assign_labels,
        grow_tree,
        route_points,
    )


def backend_name() -> str:
    return "numba" if USING_NUMBA else "numpy"
