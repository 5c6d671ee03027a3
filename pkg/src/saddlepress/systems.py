"""Catalog of example diffeomorphisms.

Every system works on batches: points are arrays of shape (N, d) and the
derivative rule returns (N, d, d).  Torus systems keep coordinates in [0, 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Region:
    """Union of axis-aligned boxes, or the full unit torus."""

    boxes: tuple
    torus: bool = False

    def __post_init__(self):
        for lo, hi in self.boxes:
            if len(lo) != len(hi) or not all(b > a for a, b in zip(lo, hi)):
                raise ValueError(f"box {lo}..{hi} must have positive volume")

    @classmethod
    def box(cls, lo, hi):
        return cls(((tuple(float(v) for v in lo), tuple(float(v) for v in hi)),))

    @classmethod
    def full_torus(cls, d):
        return cls(((tuple([0.0] * d), tuple([1.0] * d)),), torus=True)

    @property
    def dim(self) -> int:
        return len(self.boxes[0][0])

    @property
    def lo(self):
        return np.min([b[0] for b in self.boxes], axis=0)

    @property
    def hi(self):
        return np.max([b[1] for b in self.boxes], axis=0)

    @property
    def volume(self) -> float:
        return float(sum(np.prod(np.subtract(h, l)) for l, h in self.boxes))

    def contains(self, P, tol=0.0):
        P = np.atleast_2d(P)
        if self.torus:
            return np.all(np.isfinite(P), axis=1)
        inside = np.zeros(len(P), dtype=bool)
        for lo, hi in self.boxes:
            inside |= np.all((P >= np.asarray(lo) - tol) & (P <= np.asarray(hi) + tol), axis=1)
        return inside

    def sample(self, rng, n):
        if len(self.boxes) == 1:
            lo, hi = (np.asarray(b) for b in self.boxes[0])
            return lo + (hi - lo) * rng.random((n, self.dim))
        vols = np.array([np.prod(np.subtract(h, l)) for l, h in self.boxes])
        which = rng.choice(len(self.boxes), size=n, p=vols / vols.sum())
        u = rng.random((n, self.dim))
        lo = np.array([b[0] for b in self.boxes])[which]
        hi = np.array([b[1] for b in self.boxes])[which]
        return lo + (hi - lo) * u

    def grid(self, resolution):
        """Regular grid; refinements r -> 2r - 1 (box) or r -> 2r (torus) are nested."""
        pts = []
        for lo, hi in self.boxes:
            if self.torus:
                axes = [np.arange(resolution) / resolution * (h - l) + l for l, h in zip(lo, hi)]
            else:
                axes = [np.linspace(l, h, resolution) for l, h in zip(lo, hi)]
            mesh = np.meshgrid(*axes, indexing="ij")
            pts.append(np.stack([m.ravel() for m in mesh], axis=1))
        return np.unique(np.concatenate(pts), axis=0) if len(pts) > 1 else pts[0]

    def to_dict(self):
        return {"boxes": [[list(l), list(h)] for l, h in self.boxes], "torus": self.torus}


class SmoothSystem:
    """Base class: an invertible map with derivative on a chart.

    Subclasses implement `forward`, `inverse` and `jacobian` on (N, d) arrays.
    Points where the map is undefined come back as NaN.
    """

    name = "system"
    dim = 2
    torus = False

    def __init__(self, chart: Region, reference: Region, params: dict):
        self.chart = chart
        self.reference = reference
        self.params = dict(params)

    @property
    def key(self):
        return (self.name,) + tuple(sorted((k, _hashable(v)) for k, v in self.params.items()))

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({args})"

    def forward(self, P):
        raise NotImplementedError

    def inverse(self, P):
        raise NotImplementedError

    def jacobian(self, P):
        raise NotImplementedError

    def wrap(self, P):
        return np.mod(P, 1.0) if self.torus else P

    def displacement(self, P, Q):
        """Q - P, folded to the nearest integer translate on the torus."""
        D = np.asarray(Q) - np.asarray(P)
        if self.torus:
            D = D - np.round(D)
        return D

    def in_chart(self, P):
        ok = np.all(np.isfinite(P), axis=-1)
        if not self.torus:
            ok &= self.chart.contains(P)
        return ok

    def exact_periodic(self, n):
        """(points, orbit_label, words) from an exact model, or None."""
        return None

    def symbol_of(self, P):
        raise NotImplementedError(f"{self.name} has no symbolic coding")

    def transition_matrix(self):
        return None

    def volume_shift(self):
        """WeightedShift whose cylinder weights are exp(phi^u), when one is exact."""
        return None


def _hashable(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return tuple(_hashable(x) for x in v)
    return v


# ---------------------------------------------------------------------------
# orbit bookkeeping shared by the exact enumerators


def orbits_from_permutation(points, perm, words=None):
    """Split a finite invariant set into cycles of `perm`.

    Returns a list of (cycle_points, word) with cycles rotated to start at the
    lexicographically smallest point and sorted by that representative.
    """
    N = len(points)
    if N == 0:
        return []
    # pointer doubling: after k rounds label[i] is the min index over 2^k steps
    label = np.arange(N)
    jump = np.asarray(perm)
    for _ in range(int(np.ceil(np.log2(N))) + 1):
        label = np.minimum(label, label[jump])
        jump = jump[jump]
    d = points.shape[1]
    keys = [points[:, j] for j in reversed(range(d))] + [label]
    order = np.lexsort(keys)
    first = np.ones(N, dtype=bool)
    first[1:] = label[order][1:] != label[order][:-1]
    reps = order[first]
    lengths = np.bincount(label, minlength=N)[label[reps]]
    out = []
    for p in np.unique(lengths):
        r = reps[lengths == p]
        idx = np.empty((len(r), p), dtype=np.int64)
        idx[:, 0] = r
        for j in range(1, p):
            idx[:, j] = perm[idx[:, j - 1]]
        for row in idx:
            out.append((points[row], None if words is None else words[row[0]]))
    out.sort(key=lambda t: tuple(t[0][0]))
    return out


def necklaces(n_symbols, n, transitions=None):
    """Words of length n, one per cyclic class, admissible for `transitions`.

    Returns (words, minimal_period), words as (m, n) int arrays; the word kept
    for each class is the lexicographically smallest rotation.
    """
    total = n_symbols**n
    if total > 5_000_000:
        raise ValueError(f"too many words: {n_symbols}^{n}")
    codes = np.arange(total, dtype=np.int64)
    W = np.empty((total, n), dtype=np.int64)
    c = codes.copy()
    for j in reversed(range(n)):
        W[:, j] = c % n_symbols
        c //= n_symbols
    if transitions is not None:
        A = np.asarray(transitions)
        ok = np.ones(total, dtype=bool)
        for j in range(n):
            ok &= A[W[:, j], W[:, (j + 1) % n]] > 0
        W, codes = W[ok], codes[ok]
    weights = n_symbols ** np.arange(n - 1, -1, -1, dtype=np.int64)
    best = codes.copy()
    minper = np.full(len(W), n, dtype=np.int64)
    for r in range(1, n):
        rc = np.roll(W, -r, axis=1) @ weights
        best = np.minimum(best, rc)
        hit = (rc == codes) & (minper == n) & (n % r == 0)
        minper[hit] = r
    keep = best == codes
    return W[keep], minper[keep]


# ---------------------------------------------------------------------------
# (a) toral automorphism


class TorusAutomorphism(SmoothSystem):
    torus = True

    def __init__(self, matrix=((2, 1), (1, 1)), name="cat_map"):
        A = np.array(matrix, dtype=np.int64)
        det = int(round(np.linalg.det(A)))
        if A.shape[0] != A.shape[1] or abs(det) != 1:
            raise ValueError("matrix must be square, integer, with determinant +-1")
        self.name = name
        self.dim = A.shape[0]
        self.A = A
        self.Ainv = np.round(np.linalg.inv(A)).astype(np.int64)
        d = self.dim
        super().__init__(Region.full_torus(d), Region.full_torus(d), {"matrix": A.tolist()})

    def forward(self, P):
        return np.mod(np.asarray(P) @ self.A.T, 1.0)

    def inverse(self, P):
        return np.mod(np.asarray(P) @ self.Ainv.T, 1.0)

    def jacobian(self, P):
        P = np.atleast_2d(P)
        return np.broadcast_to(self.A.astype(float), (len(P), self.dim, self.dim)).copy()

    def exact_periodic(self, n):
        if self.dim != 2:
            return None
        B = np.linalg.matrix_power(self.A, n) - np.eye(2, dtype=np.int64)
        a, b, c, d = (int(v) for v in B.ravel())
        det = a * d - b * c
        if det == 0:
            raise ValueError(f"A^{n} - I is singular: periodic points are not isolated")
        g, s, t = _ext_gcd(a, b)
        h22 = det // g
        D = abs(det)
        i, j = np.meshgrid(np.arange(abs(g)), np.arange(abs(h22)), indexing="ij")
        m = np.stack([i.ravel(), j.ravel()], axis=1).astype(np.int64)
        adj = np.array([[d, -b], [-c, a]], dtype=np.int64) * (1 if det > 0 else -1)
        X = np.mod(m @ adj.T, D)
        key = X[:, 0] * D + X[:, 1]
        order = np.argsort(key)
        Y = np.mod(X @ self.A.T, D)
        perm = order[np.searchsorted(key[order], Y[:, 0] * D + Y[:, 1])]
        pts = X.astype(float) / D
        return pts, perm, None


def _ext_gcd(a, b):
    """g, s, t with a*s + b*t = g = gcd(a, b) (g may carry a sign)."""
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r != 0:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    return old_r, old_s, old_t


class Rotation(SmoothSystem):
    torus = True
    dim = 1

    def __init__(self, omega=(math.sqrt(5) - 1) / 2, name="rotation"):
        self.name = name
        self.omega = float(omega)
        super().__init__(Region.full_torus(1), Region.full_torus(1), {"omega": self.omega})

    def forward(self, P):
        return np.mod(np.asarray(P) + self.omega, 1.0)

    def inverse(self, P):
        return np.mod(np.asarray(P) - self.omega, 1.0)

    def jacobian(self, P):
        return np.ones((len(np.atleast_2d(P)), 1, 1))

    def exact_periodic(self, n):
        if abs(n * self.omega - round(n * self.omega)) < 1e-12:
            raise ValueError("rational rotation: periodic points are not isolated")
        return np.empty((0, 1)), np.empty(0, dtype=np.int64), None


# ---------------------------------------------------------------------------
# (b), (c) horseshoes with an affine stable direction and a smooth unstable branch


class SkewHorseshoe(SmoothSystem):
    """Horseshoe on the unit square with s branches.

    Branch j maps the horizontal strip starting at o_j onto the full height
    (unstable coordinate y, expanding by about lam, bent by kappa) and
    contracts x by mu*(1 + nu*sin(pi*y)) into the vertical strip at p_j.
    Odd branches are orientation-reversed.  kappa = nu = 0 is the linear
    horseshoe.
    """

    def __init__(self, n_symbols=2, lam=4.0, mu=0.25, kappa=0.0, nu=0.0, name=None):
        s = int(n_symbols)
        if s < 2:
            raise ValueError("n_symbols must be >= 2")
        if lam <= s:
            raise ValueError(f"lam must exceed n_symbols={s} so strips are disjoint")
        mu_max = mu * (1 + abs(nu))
        if not 0 < mu or mu_max * s >= 1:
            raise ValueError("mu*(1+|nu|)*n_symbols must be < 1")
        if kappa < 0 or kappa >= 1:
            raise ValueError("kappa must be in [0, 1)")
        self.s, self.lam, self.mu, self.kappa, self.nu = s, float(lam), float(mu), float(kappa), float(nu)
        self.name = name or ("linear_horseshoe" if kappa == 0 and nu == 0 else "nonlinear_horseshoe")
        self.o = np.arange(s) * (1 - 1 / lam) / (s - 1)
        self.p = np.arange(s) * (1 - mu_max) / (s - 1)
        self.sign = np.where(np.arange(s) % 2 == 0, 1.0, -1.0)
        self.ybreak = (self.o[:-1] + 1 / lam + self.o[1:]) / 2
        self.xbreak = (self.p[:-1] + mu_max + self.p[1:]) / 2
        if kappa > 0:
            y = np.linspace(0, 1, 2001)
            lmax = np.max(self._local(y, np.searchsorted(self.ybreak, y)))
            if (1 + kappa) ** 2 <= 4 * kappa * lam * lmax:
                raise ValueError("kappa too large: branch inverse undefined on the unit square")
        super().__init__(
            Region.box((-0.25, -0.25), (1.25, 1.25)),
            Region.box((0.0, 0.0), (1.0, 1.0)),
            {"n_symbols": s, "lam": self.lam, "mu": self.mu, "kappa": self.kappa, "nu": self.nu},
        )

    # unstable branch profile G: [0,1] -> [0, 1/lam], and its inverse
    def _g(self, z):
        return (z + self.kappa * z * (1 - z)) / self.lam

    def _ginv(self, l):
        if self.kappa == 0:
            return self.lam * l
        k = self.kappa
        disc = (1 + k) ** 2 - 4 * k * self.lam * l
        with np.errstate(invalid="ignore"):
            return ((1 + k) - np.sqrt(disc)) / (2 * k)

    def _ginv_prime(self, z):
        return self.lam / (1 + self.kappa * (1 - 2 * z))

    def _mu(self, y):
        return self.mu * (1 + self.nu * np.sin(np.pi * y))

    def _mu_prime(self, y):
        return self.mu * self.nu * np.pi * np.cos(np.pi * y)

    def symbol_of(self, P):
        return np.searchsorted(self.ybreak, np.atleast_2d(P)[:, 1])

    def transition_matrix(self):
        return np.ones((self.s, self.s), dtype=np.int64)

    def _local(self, y, j):
        sg = self.sign[j]
        return np.where(sg > 0, y - self.o[j], self.o[j] + 1 / self.lam - y)

    def forward(self, P):
        P = np.atleast_2d(P)
        x, y = P[:, 0], P[:, 1]
        j = np.searchsorted(self.ybreak, y)
        sg = self.sign[j]
        z = self._ginv(self._local(y, j))
        xi = np.where(sg > 0, x, 1 - x)
        return np.stack([self.p[j] + self._mu(y) * xi, z], axis=1)

    def inverse(self, P):
        P = np.atleast_2d(P)
        xp, z = P[:, 0], P[:, 1]
        j = np.searchsorted(self.xbreak, xp)
        sg = self.sign[j]
        l = self._g(z)
        y = np.where(sg > 0, self.o[j] + l, self.o[j] + 1 / self.lam - l)
        xi = (xp - self.p[j]) / self._mu(y)
        x = np.where(sg > 0, xi, 1 - xi)
        out = np.stack([x, y], axis=1)
        # the preimage must lie on the branch that produced it
        out[np.searchsorted(self.ybreak, y) != j] = np.nan
        return out

    def jacobian(self, P):
        P = np.atleast_2d(P)
        x, y = P[:, 0], P[:, 1]
        j = np.searchsorted(self.ybreak, y)
        sg = self.sign[j]
        z = self._ginv(self._local(y, j))
        xi = np.where(sg > 0, x, 1 - x)
        J = np.zeros((len(P), 2, 2))
        J[:, 0, 0] = sg * self._mu(y)
        J[:, 0, 1] = self._mu_prime(y) * xi
        J[:, 1, 1] = sg * self._ginv_prime(z)
        return J

    def locate(self, words):
        """Orbit points (m, n, 2) of the periodic points with the given itineraries."""
        W = np.atleast_2d(words)
        m, n = W.shape
        sg = self.sign[W]
        oj = self.o[W]
        # y: backward composition of the contracting inverse branches
        yc = np.full(m, 0.5)
        ys = np.empty((m, n))
        for _ in range(200):
            y = yc
            for k in reversed(range(n)):
                l = self._g(y)
                y = np.where(sg[:, k] > 0, oj[:, k] + l, oj[:, k] + 1 / self.lam - l)
                ys[:, k] = y
            done = np.max(np.abs(y - yc)) <= 1e-16
            yc = y
            if done:
                break
        mu_y = self._mu(ys)
        pj = self.p[W]

        def sweep(x):
            xs = np.empty((m, n))
            for k in range(n):
                xs[:, k] = x
                x = pj[:, k] + mu_y[:, k] * np.where(sg[:, k] > 0, x, 1 - x)
            return xs, x

        xc = np.full(m, 0.5)
        for _ in range(200):
            xs, x = sweep(xc)
            done = np.max(np.abs(x - xc)) <= 1e-16
            xc = x
            if done:
                break
        xs, _ = sweep(xc)
        return np.stack([xs, ys], axis=2)

    def exact_periodic(self, n):
        W, minper = necklaces(self.s, n, self.transition_matrix())
        return _word_orbits(self, W, minper)

    def volume_shift(self):
        if self.kappa != 0:
            return None
        from .oracle import WeightedShift

        return WeightedShift(self.transition_matrix(), np.full(self.s, 1 / self.lam))


def _word_orbits(system, W, minper):
    """Stacked (points, perm, words) for necklace words, one cycle per word."""
    if len(W) == 0:
        return np.empty((0, system.dim)), np.empty(0, dtype=np.int64), []
    pts = system.locate(W)
    P, perm, words = [], [], []
    start = 0
    for row, p, w in zip(pts, minper, W):
        P.append(row[:p])
        perm.append(start + (np.arange(p) + 1) % p)
        words.extend(tuple(np.roll(w[:p], -k)) for k in range(p))
        start += p
    return np.concatenate(P), np.concatenate(perm), words


def linear_horseshoe(lam=4.0, mu=0.25, n_symbols=2):
    return SkewHorseshoe(n_symbols=n_symbols, lam=lam, mu=mu)


def nonlinear_horseshoe(lam=3.0, mu=0.25, kappa=0.2, nu=0.4):
    return SkewHorseshoe(n_symbols=2, lam=lam, mu=mu, kappa=kappa, nu=nu)


# ---------------------------------------------------------------------------
# (d) Henon


class Henon(SmoothSystem):
    name = "henon"

    def __init__(self, a=1.4, b=0.3):
        if b == 0:
            raise ValueError("b must be nonzero for invertibility")
        self.a, self.b = float(a), float(b)
        super().__init__(
            Region.box((-10.0, -10.0), (10.0, 10.0)),
            Region.box((-1.5, -0.5), (1.5, 0.5)),
            {"a": self.a, "b": self.b},
        )

    def forward(self, P):
        P = np.atleast_2d(P)
        x, y = P[:, 0], P[:, 1]
        return np.stack([1 - self.a * x * x + y, self.b * x], axis=1)

    def inverse(self, P):
        P = np.atleast_2d(P)
        xp, yp = P[:, 0], P[:, 1]
        x = yp / self.b
        return np.stack([x, xp - 1 + self.a * x * x], axis=1)

    def jacobian(self, P):
        P = np.atleast_2d(P)
        J = np.zeros((len(P), 2, 2))
        J[:, 0, 0] = -2 * self.a * P[:, 0]
        J[:, 0, 1] = 1.0
        J[:, 1, 0] = self.b
        return J


# ---------------------------------------------------------------------------
# (e) horseshoe plus a disjoint attracting fixed point


class HorseshoeWithSink(SmoothSystem):
    name = "horseshoe_sink"
    split = 1.75

    def __init__(self, lam=4.0, mu=0.25, sink=(2.5, 0.5), contraction=0.5, sink_value=1.0):
        self.horseshoe = SkewHorseshoe(2, lam, mu)
        self.sink = np.array(sink, dtype=float)
        self.contraction = float(contraction)
        if not 0 < self.contraction < 1:
            raise ValueError("contraction must be in (0, 1)")
        if not (self.sink[0] - 0.5 >= 2.0 - 1e-12 and self.sink[0] + 0.5 <= 3.0 + 1e-12):
            raise ValueError("sink must sit inside [2, 3] x [0, 1]")
        self.sink_value = float(sink_value)
        super().__init__(
            Region.box((-0.25, -0.25), (3.25, 1.25)),
            Region(((( 0.0, 0.0), (1.0, 1.0)), ((2.0, 0.0), (3.0, 1.0)))),
            {"lam": lam, "mu": mu, "sink": list(self.sink), "contraction": self.contraction,
             "sink_value": self.sink_value},
        )

    def component_of(self, P):
        return (np.atleast_2d(P)[:, 0] >= self.split).astype(np.int64)

    def forward(self, P):
        P = np.atleast_2d(P)
        out = self.sink + self.contraction * (P - self.sink)
        left = P[:, 0] < self.split
        if left.any():
            out[left] = self.horseshoe.forward(P[left])
        return out

    def inverse(self, P):
        P = np.atleast_2d(P)
        out = self.sink + (P - self.sink) / self.contraction
        out[out[:, 0] < self.split] = np.nan
        left = P[:, 0] < self.split
        if left.any():
            q = self.horseshoe.inverse(P[left])
            q[q[:, 0] >= self.split] = np.nan
            out[left] = q
        return out

    def jacobian(self, P):
        P = np.atleast_2d(P)
        J = np.broadcast_to(np.eye(2) * self.contraction, (len(P), 2, 2)).copy()
        left = P[:, 0] < self.split
        if left.any():
            J[left] = self.horseshoe.jacobian(P[left])
        return J

    def symbol_of(self, P):
        P = np.atleast_2d(P)
        return np.where(P[:, 0] < self.split, self.horseshoe.symbol_of(P), 2)

    def exact_periodic(self, n):
        pts, perm, words = self.horseshoe.exact_periodic(n)
        k = len(pts)
        return (np.concatenate([pts, self.sink[None]]), np.concatenate([perm, [k]]),
                list(words) + [(2,)])

    def volume_shift(self):
        return self.horseshoe.volume_shift()


# ---------------------------------------------------------------------------
# (f) rotation times cat map


class RotationProduct(SmoothSystem):
    name = "rotation_cat"
    torus = True
    dim = 3

    def __init__(self, omega=(math.sqrt(5) - 1) / 2, matrix=((2, 1), (1, 1))):
        self.factors = (Rotation(omega), TorusAutomorphism(matrix))
        super().__init__(Region.full_torus(3), Region.full_torus(3),
                         {"omega": float(omega), "matrix": [list(r) for r in matrix]})

    def forward(self, P):
        P = np.atleast_2d(P)
        return np.concatenate([self.factors[0].forward(P[:, :1]), self.factors[1].forward(P[:, 1:])], axis=1)

    def inverse(self, P):
        P = np.atleast_2d(P)
        return np.concatenate([self.factors[0].inverse(P[:, :1]), self.factors[1].inverse(P[:, 1:])], axis=1)

    def jacobian(self, P):
        P = np.atleast_2d(P)
        J = np.zeros((len(P), 3, 3))
        J[:, 0, 0] = 1.0
        J[:, 1:, 1:] = self.factors[1].A
        return J

    def exact_periodic(self, n):
        rot = self.factors[0].exact_periodic(n)
        if len(rot[0]) == 0:
            return np.empty((0, 3)), np.empty(0, dtype=np.int64), None
        raise ValueError("periodic points are not isolated")


CATALOG = {
    "cat_map": lambda **kw: TorusAutomorphism(**kw),
    "linear_horseshoe": lambda **kw: linear_horseshoe(**kw),
    "nonlinear_horseshoe": lambda **kw: nonlinear_horseshoe(**kw),
    "skew_horseshoe": lambda **kw: SkewHorseshoe(**kw),
    "henon": lambda **kw: Henon(**kw),
    "horseshoe_sink": lambda **kw: HorseshoeWithSink(**kw),
    "rotation_cat": lambda **kw: RotationProduct(**kw),
}


def make_system(name, **params):
    if name not in CATALOG:
        raise KeyError(f"unknown system {name!r}; available: {', '.join(sorted(CATALOG))}")
    return CATALOG[name](**params)
