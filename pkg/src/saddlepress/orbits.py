"""Periodic orbits: enumeration, saddle classification and (alpha, c) filtering."""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .systems import SmoothSystem, orbits_from_permutation

NEUTRAL_TOL = 1e-8
DEDUP_TOL = 1e-8
LOG_TOL = 1e-9  # slack on log-scale comparisons so c = 1 equality cases are kept


class ClassificationRequired(ValueError):
    pass


@dataclass
class PeriodicOrbit:
    """One orbit of Fix(f^n), stored by its minimal cycle.

    points[0] is the lexicographically smallest orbit point.  multipliers are
    eigenvalues of Df^n there; exponents are (1/n) log|multiplier|, ascending.
    """

    period: int
    points: np.ndarray
    residual: float
    word: tuple | None = None
    status: str = "unclassified"
    multipliers: np.ndarray | None = None
    exponents: np.ndarray | None = None
    unstable: np.ndarray | None = None
    stable: np.ndarray | None = None
    unstable_steps: np.ndarray | None = None
    stable_steps: np.ndarray | None = None
    profile: tuple | None = field(default=None, repr=False)

    @property
    def minimal_period(self) -> int:
        return len(self.points)

    @property
    def representative(self):
        return self.points[0]

    @property
    def saddle(self) -> bool:
        return self.status == "saddle"

    @property
    def repeats(self) -> int:
        return self.period // self.minimal_period


class OrbitList(list):
    """List of orbits of one period plus enumeration diagnostics."""

    def __init__(self, orbits=(), diagnostics=None):
        super().__init__(orbits)
        self.diagnostics = diagnostics or {}

    @property
    def n_points(self):
        return sum(o.minimal_period for o in self)


@dataclass(frozen=True)
class SaddleFilter:
    alpha: float
    c: float = 1.0
    beta: float | None = None
    k_cap: int | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not 0 < self.c <= 1:
            raise ValueError("c must lie in (0, 1]")
        if self.beta is not None and not self.beta > self.alpha:
            raise ValueError("beta must exceed alpha")

    def cap(self, n: int) -> int:
        """Largest k checked in the co-norm conditions."""
        if self.k_cap is not None:
            return int(self.k_cap)
        return 3 * n + math.ceil(40 / self.alpha)

    def to_dict(self):
        return {"alpha": self.alpha, "c": self.c, "beta": self.beta}


# ---------------------------------------------------------------------------
# enumeration


def _fn_and_jacobian(system, P, n):
    """f^n(P) - P (folded on the torus), D f^n(P), all rows; NaN if undefined."""
    X = P.copy()
    d = P.shape[1]
    J = np.broadcast_to(np.eye(d), (len(P), d, d)).copy()
    # diverging Newton iterates overflow; they are rejected by the residual test
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n):
            J = system.jacobian(X) @ J
            X = system.wrap(system.forward(X))
    return system.displacement(P, X), J


def residuals(system, P, n):
    P = np.atleast_2d(P)
    X = P
    for _ in range(n):
        X = system.wrap(system.forward(X))
    return np.linalg.norm(system.displacement(P, X), axis=1)


def _newton(system, P, n, max_iter=50, tol=1e-12):
    with np.errstate(over="ignore", invalid="ignore"):
        return _newton_loop(system, np.array(P, dtype=float), n, max_iter, tol)


def _newton_loop(system, P, n, max_iter, tol):
    d = P.shape[1]
    alive = np.all(np.isfinite(P), axis=1)
    done = np.zeros(len(P), dtype=bool)
    singular = np.zeros(len(P), dtype=bool)
    F, J = _fn_and_jacobian(system, P, n)
    r = np.linalg.norm(F, axis=1)
    for _ in range(max_iter):
        thresh = np.maximum(tol, 64 * np.finfo(float).eps * np.linalg.norm(J, axis=(1, 2)))
        done |= alive & (r <= thresh)
        act = np.flatnonzero(alive & ~done)
        if len(act) == 0:
            break
        A = J[act] - np.eye(d)
        det = np.linalg.det(A)
        bad = ~np.isfinite(det) | (np.abs(det) <= 1e-14 * np.maximum(1.0, np.linalg.norm(A, axis=(1, 2)) ** d))
        singular[act[bad]] = True
        alive[act[bad]] = False
        act = act[~bad]
        step = np.linalg.solve(A[~bad], -F[act][..., None])[..., 0]
        t = np.ones(len(act))
        pending = np.arange(len(act))
        for _ in range(30):
            trial = system.wrap(P[act[pending]] + t[pending, None] * step[pending])
            Ft, Jt = _fn_and_jacobian(system, trial, n)
            rt = np.linalg.norm(Ft, axis=1)
            better = np.isfinite(rt) & (rt < r[act[pending]])
            idx = act[pending[better]]
            P[idx], F[idx], J[idx], r[idx] = trial[better], Ft[better], Jt[better], rt[better]
            pending = pending[~better]
            if len(pending) == 0:
                break
            t[pending] *= 0.5
        alive[act[pending]] = False  # no decrease along the Newton direction
    thresh = np.maximum(tol, 64 * np.finfo(float).eps * np.linalg.norm(J, axis=(1, 2)))
    done |= alive & (r <= thresh)
    return P, done, singular


def _lex_rotation(cycle, grid=1e-9):
    key = np.round(cycle / grid).astype(np.int64)
    order = np.lexsort(key.T[::-1])
    return int(order[0])


def _cycles_from_roots(system, roots, n, ret_tol=1e-6):
    """Full cycles (list of (p, d) arrays) through each root, deduplicated."""
    if len(roots) == 0:
        return []
    # many seeds converge to the same root: collapse on a fine lattice first
    _, first = np.unique(np.round(roots / (DEDUP_TOL * 10)).astype(np.int64), axis=0, return_index=True)
    roots = roots[np.sort(first)]
    Y = np.empty((len(roots), n + 1, roots.shape[1]))
    Y[:, 0] = roots
    X = roots
    for j in range(1, n + 1):
        X = system.wrap(system.forward(X))
        Y[:, j] = X
    dist = np.linalg.norm(system.displacement(Y[:, :1], Y[:, 1:]), axis=2)
    hits = dist <= ret_tol
    hits[:, -1] = True
    minp = np.argmax(hits, axis=1) + 1
    cycles = []
    for row, p in zip(Y, minp):
        if n % p:
            continue
        cyc = row[:p]
        k = _lex_rotation(cyc)
        cycles.append(np.roll(cyc, -k, axis=0))
    # dedup: same period and representative points within DEDUP_TOL after alignment
    reps = np.array([c[0] for c in cycles])
    tree = _tree(system, reps)
    keep = np.ones(len(cycles), dtype=bool)
    for i, j in sorted(tree.query_pairs(r=DEDUP_TOL * 10)):
        if keep[i] and keep[j] and _same_cycle(system, cycles[i], cycles[j]):
            keep[j] = False
    # a root may also land on another cycle's non-representative point
    out = [c for c, k in zip(cycles, keep) if k]
    allpts = np.concatenate(out)
    owner = np.repeat(np.arange(len(out)), [len(c) for c in out])
    tree = _tree(system, allpts)
    drop = set()
    for i, c in enumerate(out):
        if i in drop:
            continue
        for j in set(owner[tree.query_ball_point(c[0], DEDUP_TOL * 10)]) - {i}:
            if j not in drop and _same_cycle(system, c, out[j]):
                drop.add(max(i, j))
    return [c for i, c in enumerate(out) if i not in drop]


def _tree(system, P):
    if system.torus:
        Q = np.mod(P, 1.0)
        Q[Q >= 1.0] = 0.0
        return cKDTree(Q, boxsize=1.0)
    return cKDTree(P)


def orbit_distance(system, a, b):
    """min over cyclic shifts of the max pointwise distance (inf for different lengths)."""
    if len(a) != len(b):
        return np.inf
    best = np.inf
    for k in range(len(b)):
        dist = np.linalg.norm(system.displacement(a, np.roll(b, -k, axis=0)), axis=1).max()
        best = min(best, dist)
    return best


def _same_cycle(system, a, b):
    return orbit_distance(system, a, b) <= DEDUP_TOL


def newton_seeds(system, seeds):
    """Seed points from a spec: {'kind': 'grid', 'resolution': r} | {'kind': 'survivors', ...} | array."""
    if seeds is None:
        seeds = {"kind": "grid", "resolution": 200}
    if not isinstance(seeds, dict):
        return np.atleast_2d(np.asarray(seeds, dtype=float))
    kind = seeds.get("kind", "grid")
    if kind == "grid":
        return system.reference.grid(int(seeds.get("resolution", 200)))
    if kind == "survivors":
        from .geometry import survivor_cloud

        return survivor_cloud(system, int(seeds.get("count", 20000)), int(seeds.get("depth", 10)),
                              int(seeds.get("seed", 0)))
    raise ValueError(f"unknown seed kind {kind!r}")


def _build(system, n, cycles, words=None, degenerate=()):
    orbits = []
    for i, cyc in enumerate(cycles):
        w = None if words is None else words[i]
        orbits.append(PeriodicOrbit(n, cyc, 0.0, word=w))
    if orbits:
        allpts = np.concatenate([o.points for o in orbits])
        res = residuals(system, allpts, n)
        start = 0
        for o in orbits:
            o.residual = float(res[start:start + o.minimal_period].max())
            start += o.minimal_period
    for o in orbits:
        if tuple(np.round(o.points[0], 9)) in degenerate:
            o.status = "degenerate"
    orbits.sort(key=lambda o: tuple(o.points[0]))
    return orbits


def enumerate_periodic(system: SmoothSystem, n: int, method: str = "auto", seeds=None,
                       max_iter=50, tol=1e-12) -> OrbitList:
    """All periodic orbits whose period divides n (one entry per orbit)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if method == "auto":
        method = "symbolic" if system.exact_periodic(1) is not None else "newton"
    if method == "symbolic":
        exact = system.exact_periodic(n)
        if exact is None:
            raise ValueError(f"{system.name} has no exact symbolic model; use method='newton'")
        pts, perm, words = exact
        cyc = orbits_from_permutation(pts, perm, words)
        cycles = [c for c, _ in cyc]
        wl = [None if w is None else tuple(int(s) for s in w) for _, w in cyc]
        orbits = _build(system, n, cycles, wl)
        bad = [o for o in orbits if o.residual > 1e-9]
        if bad:
            _polish(system, bad, n)
        return OrbitList(orbits, {"method": "symbolic", "orbits": len(orbits),
                                  "points": sum(o.minimal_period for o in orbits)})
    if method != "newton":
        raise ValueError(f"unknown method {method!r}")
    S = newton_seeds(system, seeds)
    P, ok, singular = _newton(system, S, n, max_iter, tol)
    inside = ok & system.reference.contains(P, tol=1e-9)
    roots = system.wrap(P[inside])
    cycles = _cycles_from_roots(system, roots, n)
    # orbits must stay in U to belong to the invariant set of interest
    cycles = [c for c in cycles if np.all(system.reference.contains(c, tol=1e-9))]
    degenerate = {tuple(np.round(system.wrap(p), 9)) for p in P[singular]}
    orbits = _build(system, n, cycles, degenerate=degenerate)
    _polish(system, orbits, n)
    diag = {"method": "newton", "seeds": int(len(S)), "converged": int(ok.sum()),
            "dropped": int(len(S) - ok.sum()), "singular": int(singular.sum()),
            "orbits": len(orbits), "points": sum(o.minimal_period for o in orbits)}
    return OrbitList(orbits, diag)


def _polish(system, orbits, n):
    """One more Newton step on every orbit point, kept where the residual drops."""
    if not orbits:
        return
    allpts = np.concatenate([o.points for o in orbits])
    d = allpts.shape[1]
    F, J = _fn_and_jacobian(system, allpts, n)
    r0 = np.linalg.norm(F, axis=1)
    A = J - np.eye(d)
    ok = np.abs(np.linalg.det(A)) > 1e-300
    Q = allpts.copy()
    Q[ok] = system.wrap(allpts[ok] + np.linalg.solve(A[ok], -F[ok][..., None])[..., 0])
    r1 = residuals(system, Q, n)
    better = r1 < r0
    allpts[better] = Q[better]
    r = np.where(better, r1, r0)
    start = 0
    for o in orbits:
        p = o.minimal_period
        o.points = allpts[start:start + p]
        o.residual = float(r[start:start + p].max())
        start += p


_CACHE: OrderedDict = OrderedDict()
_CACHE_SIZE = 64


def periodic_orbits(system: SmoothSystem, n: int, method: str = "auto", seeds=None, classify=True) -> OrbitList:
    """Cached enumerate_periodic (+ classification)."""
    skey = repr(sorted(seeds.items())) if isinstance(seeds, dict) else None if seeds is None else id(seeds)
    key = (system.key, n, method, skey)
    if key in _CACHE:
        _CACHE.move_to_end(key)
        orbits = _CACHE[key]
    else:
        orbits = enumerate_periodic(system, n, method, seeds)
        _CACHE[key] = orbits
        if len(_CACHE) > _CACHE_SIZE:
            _CACHE.popitem(last=False)
    if classify:
        classify_orbits(system, [o for o in orbits if o.status == "unclassified"])
    return orbits


def clear_cache():
    _CACHE.clear()


# ---------------------------------------------------------------------------
# classification


def classify_orbit(system: SmoothSystem, orbit: PeriodicOrbit) -> PeriodicOrbit:
    classify_orbits(system, [orbit])
    return orbit


def classify_orbits(system: SmoothSystem, orbits):
    """Multipliers, exponents, saddle status and invariant splittings, batched by cycle length."""
    groups = {}
    for o in orbits:
        groups.setdefault(o.minimal_period, []).append(o)
    for p, group in groups.items():
        _classify_group(system, p, group)
    return orbits


def _classify_group(system, p, group):
    m = len(group)
    d = group[0].points.shape[1]
    pts = np.stack([o.points for o in group])
    J = system.jacobian(pts.reshape(-1, d)).reshape(m, p, d, d)
    mono = np.broadcast_to(np.eye(d), (m, d, d)).copy()
    for j in range(p):
        mono = J[:, j] @ mono
    vals, vecs = np.linalg.eig(mono)
    if d == 2:
        # the small eigenvalue of a large 2x2 product is inaccurate from eig;
        # recover it from the exact determinant (product of per-step determinants)
        det = np.prod(np.linalg.det(J), axis=1)
        real = np.all(np.abs(vals.imag) <= 1e-12 * np.abs(vals), axis=1)
        big = np.argmax(np.abs(vals), axis=1)
        rows = np.flatnonzero(real)
        vals = vals.copy()
        vals[rows, 1 - big[rows]] = det[rows] / vals[rows, big[rows]].real
    for r, o in enumerate(group):
        reps = o.period // p
        mult = vals[r] ** reps
        order = np.argsort(np.abs(mult))
        o.multipliers = mult[order]
        o.exponents = np.log(np.abs(mult[order])) / o.period
        if o.status == "degenerate":
            continue
        if np.any(np.abs(np.abs(mult) - 1) <= NEUTRAL_TOL):
            o.status = "neutral"
        elif o.exponents[0] < 0 < o.exponents[-1]:
            o.status = "saddle"
        else:
            o.status = "nonsaddle"
    saddles = [r for r, o in enumerate(group) if o.status == "saddle"]
    if not saddles:
        return
    idx = np.array(saddles)
    Js = J[idx]
    Jinv = np.linalg.inv(Js)
    U0, S0 = [], []
    for r in idx:
        U0.append(_real_subspace(vals[r], vecs[r], np.abs(vals[r]) > 1))
        S0.append(_real_subspace(vals[r], vecs[r], np.abs(vals[r]) < 1))
    du = np.array([u.shape[1] for u in U0])
    for k in np.unique(du):
        sel = np.flatnonzero(du == k)
        Uq = np.stack([U0[s] for s in sel])
        Sq = np.stack([S0[s] for s in sel])
        ubases, usteps = _propagate(Js[sel], Uq, forward=True)
        sbases, ssteps = _propagate(Jinv[sel], Sq, forward=False)
        for t, s in enumerate(sel):
            o = group[idx[s]]
            o.unstable, o.stable = ubases[t], sbases[t]
            o.unstable_steps, o.stable_steps = usteps[t], ssteps[t]
            o.profile = None
            if k > 1 or d - k > 1:
                o._jac = Js[s]


def _real_subspace(vals, vecs, mask):
    """Orthonormal real basis of the invariant subspace for the selected eigenvalues."""
    cols = []
    for i in np.flatnonzero(mask):
        v = vecs[:, i]
        if abs(vals[i].imag) > 1e-14:
            if vals[i].imag > 0:
                cols.extend([v.real, v.imag])
        else:
            cols.append(v.real)
    Q, _ = np.linalg.qr(np.stack(cols, axis=1))
    return Q


def _propagate(J, Q0, forward=True):
    """Carry a basis around the cycle.

    forward: B_{j+1} = orth(J_j B_j); steps[j] = log|det| of the j-th block.
    backward (J holds inverses): B_j = orth(J_j^{-1} B_{j+1}), B_p = B_0;
    steps[j] = log|det| of the block taking E(f^{j+1} x) to E(f^j x).
    """
    m, p, d, _ = J.shape
    k = Q0.shape[2]
    bases = np.empty((m, p, d, k))
    steps = np.empty((m, p))
    if forward:
        B = Q0
        for j in range(p):
            bases[:, j] = B
            Q, R = np.linalg.qr(J[:, j] @ B)
            steps[:, j] = np.log(np.abs(np.prod(np.diagonal(R, axis1=1, axis2=2), axis=1)))
            B = Q
    else:
        B = Q0
        for j in reversed(range(p)):
            Q, R = np.linalg.qr(J[:, j] @ B)
            steps[:, j] = np.log(np.abs(np.prod(np.diagonal(R, axis1=1, axis2=2), axis=1)))
            bases[:, j] = Q
            B = Q
    return bases, steps


def splitting_angle(orbit: PeriodicOrbit) -> float:
    """Smallest principal angle between E^s and E^u over the orbit points."""
    if orbit.unstable is None:
        raise ClassificationRequired("orbit has no splitting; classify it first")
    sv = np.linalg.svd(np.swapaxes(orbit.stable, 1, 2) @ orbit.unstable, compute_uv=False)
    return float(np.arccos(np.clip(sv.max(), -1.0, 1.0)))


# ---------------------------------------------------------------------------
# hyperbolicity constants


def compute_profiles(orbits, K: int):
    """log co-norm / norm profiles for k = 1..K, cached on each orbit.

    profile = (low, high): low[k-1] is the min over orbit points and both
    sides of log ||(Df^k|E^u)^{-1}||^{-1}, log ||(Df^{-k}|E^s)^{-1}||^{-1};
    high[k-1] is the max of the corresponding log norms.
    """
    todo = [o for o in orbits if o.saddle and (o.profile is None or len(o.profile[0]) < K)]
    groups = {}
    for o in todo:
        groups.setdefault((o.minimal_period, o.unstable.shape[2], o.stable.shape[2]), []).append(o)
    for (p, du, ds), group in groups.items():
        if du == 1 and ds == 1:
            us = np.stack([o.unstable_steps for o in group])
            ss = np.stack([o.stable_steps for o in group])
            ulo, uhi = kernels.cyclic_window_extrema(us, K)
            slo, shi = kernels.cyclic_window_extrema(ss, K)
            low, high = np.minimum(ulo, slo), np.maximum(uhi, shi)
        else:
            low, high = _profiles_general(group, K)
        for o, lo, hi in zip(group, low, high):
            o.profile = (lo, hi)


def _profiles_general(group, K):
    """Matrix path for splittings of dimension > 1 (singular values per step)."""
    m = len(group)
    p = group[0].minimal_period
    low = np.full((m, K), np.inf)
    high = np.full((m, K), -np.inf)
    for o_i, o in enumerate(group):
        pts_J = _orbit_jacobians(o)
        for side in ("u", "s"):
            B = o.unstable if side == "u" else o.stable
            M = B.copy()
            scale = np.zeros(p)
            for k in range(1, K + 1):
                if side == "u":
                    Jk = pts_J[(np.arange(p) + k - 1) % p]
                else:
                    Jk = np.linalg.inv(pts_J[(np.arange(p) - k) % p])
                M = Jk @ M
                nrm = np.linalg.norm(M, axis=(1, 2))
                M /= nrm[:, None, None]
                scale += np.log(nrm)
                sv = np.linalg.svd(M, compute_uv=False)
                low[o_i, k - 1] = min(low[o_i, k - 1], np.min(scale + np.log(sv[:, -1])))
                high[o_i, k - 1] = max(high[o_i, k - 1], np.max(scale + np.log(sv[:, 0])))
    return low, high


def _orbit_jacobians(o):
    if getattr(o, "_jac", None) is None:  # set by classify_orbits for splittings of dimension > 1
        raise ClassificationRequired("jacobians not attached; classify through classify_orbits")
    return o._jac


def _ensure_profile(orbit, K):
    if orbit.profile is None or len(orbit.profile[0]) < K:
        compute_profiles([orbit], K)


def empirical_constant(system: SmoothSystem, orbit: PeriodicOrbit, alpha: float, k_cap=None, argmin=False):
    """Largest c in (0, 1] with the (alpha, c) co-norm bounds along the orbit up to K_cap; 0 if none."""
    if orbit.status == "unclassified":
        raise ClassificationRequired("classify the orbit first")
    if not orbit.saddle:
        return (0.0, None) if argmin else 0.0
    if alpha >= np.min(np.abs(orbit.exponents)):
        return (0.0, None) if argmin else 0.0
    K = k_cap if k_cap is not None else SaddleFilter(alpha).cap(orbit.period)
    _ensure_profile(orbit, K)
    g = orbit.profile[0][:K] - alpha * np.arange(1, K + 1)
    k = int(np.argmin(g))
    c = float(min(1.0, np.exp(g[k] + LOG_TOL)))
    return (c, k + 1) if argmin else c


def filter_membership(orbit: PeriodicOrbit, filt: SaddleFilter, constant: float) -> bool:
    """Saddle with c_max >= c and, for a band, all |exponents| <= beta and the upper bounds."""
    if not orbit.saddle or constant <= 0 or constant < filt.c:
        return False
    if filt.beta is None:
        return True
    if np.max(np.abs(orbit.exponents)) > filt.beta + LOG_TOL:
        return False
    K = filt.cap(orbit.period)
    _ensure_profile(orbit, K)
    upper = orbit.profile[1][:K] - filt.beta * np.arange(1, K + 1)
    return bool(np.max(upper) <= -np.log(filt.c) + LOG_TOL)


def accepted(system: SmoothSystem, orbits, filt: SaddleFilter | None):
    """Boolean mask of orbits in the filtered saddle set (None = every saddle)."""
    if filt is None:
        return np.array([o.saddle for o in orbits], dtype=bool)
    saddles = [o for o in orbits if o.saddle and filt.alpha < np.min(np.abs(o.exponents))]
    if saddles:
        compute_profiles(saddles, max(filt.cap(o.period) for o in saddles))
    out = np.zeros(len(orbits), dtype=bool)
    for i, o in enumerate(orbits):
        out[i] = filter_membership(o, filt, empirical_constant(system, o, filt.alpha, filt.cap(o.period)))
    return out
