"""Kernel backend chosen at import: compiled if available, else pure Python.

Set SADDLEPRESS_PURE=1 to force the pure-Python backend.
"""
import os

import numpy as np

if os.environ.get("SADDLEPRESS_PURE", "") not in ("", "0"):
    from . import _kernels_py as _impl
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as _impl
        BACKEND = "python"


def _cell_layout(X0, periodic, eps):
    d = X0.shape[1]
    lo = np.where(periodic, 0.0, X0.min(axis=0))
    span = np.where(periodic, 1.0, X0.max(axis=0) - lo)
    ncell = np.maximum(1, np.floor(span / eps)).astype(np.int64)
    axes = []
    for a in range(d):
        if periodic[a]:
            axes.append([0] if ncell[a] == 1 else [0, 1] if ncell[a] == 2 else [-1, 0, 1])
        else:
            axes.append([-1, 0, 1])
    offsets = np.array(np.meshgrid(*axes, indexing="ij")).reshape(d, -1).T.copy()
    return lo, ncell, offsets


def greedy_separated(traj, periodic, eps, backend=None):
    """Row indices of a greedy maximal (n, eps)-separated subset of trajectories."""
    traj = np.ascontiguousarray(traj, dtype=np.float64)
    periodic = np.ascontiguousarray(periodic, dtype=np.uint8)
    if len(traj) == 0:
        return np.empty(0, dtype=np.int64)
    lo, ncell, offsets = _cell_layout(traj[:, 0, :], periodic.astype(bool), eps)
    impl = _pick(backend)
    return np.asarray(impl.greedy_separated(traj, periodic, float(eps), np.ascontiguousarray(lo),
                                            ncell.astype(np.int_), offsets))


def cyclic_window_extrema(steps, K, backend=None):
    """min/max over orbit positions of k-step sums of per-step log factors, k = 1..K."""
    return _pick(backend).cyclic_window_extrema(np.ascontiguousarray(steps, dtype=np.float64), int(K))


def _pick(backend):
    if backend is None:
        return _impl
    if backend == "python":
        from . import _kernels_py
        return _kernels_py
    from . import _kernels
    return _kernels
