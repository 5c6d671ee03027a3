# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops; see _kernels_py for the reference implementation."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, nearbyint

cnp.import_array()


def greedy_separated(double[:, :, ::1] traj, const unsigned char[::1] periodic, double eps,
                     const double[::1] lo, const long[::1] ncell, offsets):
    """Greedy maximal set of rows pairwise more than eps apart in the max-over-time metric.

    traj[i, k, :] holds f^k of sample i.  Rows are visited in order; a row is
    kept unless some kept row stays within eps at every time step.  Kept rows
    are bucketed by their time-0 cell of side >= eps so only neighbouring
    cells are scanned.
    """
    cdef Py_ssize_t N = traj.shape[0], n = traj.shape[1], d = traj.shape[2]
    cdef Py_ssize_t i, j, k, a, t, cell, nb, cnt
    cdef double eps2 = eps * eps, s, diff
    cdef long c[3]
    cdef long q
    cdef bint close
    cdef long total = 1
    for a in range(d):
        total *= ncell[a]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] head = np.full(total, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] nxt = np.full(N, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] keep = np.empty(N, dtype=np.int64)
    # neighbour offsets as a flat table of shape (count, d)
    cdef long[:, ::1] off = np.ascontiguousarray(offsets, dtype=np.int_).reshape(-1, d)
    cdef Py_ssize_t noff = off.shape[0]
    cnt = 0
    for i in range(N):
        for a in range(d):
            q = <long>floor((traj[i, 0, a] - lo[a]) / eps)
            if q >= ncell[a]:
                q = ncell[a] - 1
            if q < 0:
                q = 0
            c[a] = q
        close = False
        for t in range(noff):
            cell = 0
            nb = 1
            for a in range(d):
                q = c[a] + off[t, a]
                if periodic[a]:
                    q = (q + ncell[a]) % ncell[a]
                elif q < 0 or q >= ncell[a]:
                    nb = 0
                    break
                cell = cell * ncell[a] + q
            if not nb:
                continue
            j = head[cell]
            while j >= 0:
                close = True
                for k in range(n):
                    s = 0.0
                    for a in range(d):
                        diff = traj[i, k, a] - traj[j, k, a]
                        if periodic[a]:
                            diff = diff - nearbyint(diff)
                        s = s + diff * diff
                    if s > eps2:
                        close = False
                        break
                if close:
                    break
                j = nxt[j]
            if close:
                break
        if not close:
            cell = 0
            for a in range(d):
                cell = cell * ncell[a] + c[a]
            nxt[i] = head[cell]
            head[cell] = i
            keep[cnt] = i
            cnt += 1
    return keep[:cnt].copy()


def cyclic_window_extrema(double[:, ::1] steps, long K):
    """For k = 1..K: min and max over start i of steps[i] + ... + steps[i+k-1] (indices mod p)."""
    cdef Py_ssize_t m = steps.shape[0], p = steps.shape[1]
    cdef Py_ssize_t r, i, k
    cdef double acc
    cdef cnp.ndarray[cnp.float64_t, ndim=2] lo = np.full((m, K), np.inf)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] hi = np.full((m, K), -np.inf)
    cdef double[:, ::1] lov = lo
    cdef double[:, ::1] hiv = hi
    for r in range(m):
        for i in range(p):
            acc = 0.0
            for k in range(K):
                acc = acc + steps[r, (i + k) % p]
                if acc < lov[r, k]:
                    lov[r, k] = acc
                if acc > hiv[r, k]:
                    hiv[r, k] = acc
    return lo, hi
