"""Pure-Python versions of the compiled kernels (same signatures, same results)."""
import numpy as np


def greedy_separated(traj, periodic, eps, lo, ncell, offsets):
    traj = np.asarray(traj, dtype=float)
    N, n, d = traj.shape
    periodic = np.asarray(periodic, dtype=bool)
    ncell = np.asarray(ncell, dtype=np.int64)
    offsets = np.asarray(offsets, dtype=np.int64).reshape(-1, d)
    cells = np.clip(np.floor((traj[:, 0, :] - lo) / eps).astype(np.int64), 0, ncell - 1)
    buckets = {}
    keep = []
    eps2 = eps * eps
    for i in range(N):
        near = []
        for off in offsets:
            q = cells[i] + off
            q = np.where(periodic, np.mod(q, ncell), q)
            if np.any((q < 0) | (q >= ncell)):
                continue
            near.extend(buckets.get(tuple(q), ()))
        if near:
            diff = traj[near] - traj[i]
            diff[..., periodic] -= np.round(diff[..., periodic])
            dist2 = np.sum(diff * diff, axis=2)
            if np.any(np.all(dist2 <= eps2, axis=1)):
                continue
        buckets.setdefault(tuple(cells[i]), []).append(i)
        keep.append(i)
    return np.array(keep, dtype=np.int64)


def cyclic_window_extrema(steps, K):
    steps = np.asarray(steps, dtype=float)
    m, p = steps.shape
    reps = -(-(K + p) // p)
    C = np.concatenate([np.zeros((m, 1)), np.cumsum(np.tile(steps, reps), axis=1)], axis=1)
    lo = np.empty((m, K))
    hi = np.empty((m, K))
    start = C[:, :p]
    for k in range(1, K + 1):
        win = C[:, k:k + p] - start
        lo[:, k - 1] = win.min(axis=1)
        hi[:, k - 1] = win.max(axis=1)
    return lo, hi
