"""Escape rates, expansion rate, survivor clouds, box dimension and the dimension bound."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import linregress

from .core import StatusError, derivative_log_bound
from .systems import Region, SmoothSystem

RegionSpec = Region


def philox(seed: int, batch: int = 0):
    """Counter-based generator for (master seed, batch index)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(batch),))))


@dataclass
class EscapeRateEstimate:
    ns: np.ndarray
    survivors: np.ndarray
    samples: int
    seed: int
    window: tuple
    upper: float          # tail regression slope of log p_n
    lower: float          # smallest per-step slope in the window
    steepest: float       # largest per-step slope in the window
    stderr: float
    truncated: bool = False

    @property
    def p(self):
        return self.survivors / self.samples

    @property
    def half_width(self):
        """95% binomial half-widths of p_n."""
        p = self.p
        return 1.96 * np.sqrt(p * (1 - p) / self.samples)

    def table(self):
        return [(int(n), int(s), float(p)) for n, s, p in zip(self.ns, self.survivors, self.p)]

    def to_dict(self):
        return {"upper": self.upper, "lower": self.lower, "steepest": self.steepest, "stderr": self.stderr,
                "window": list(self.window), "samples": self.samples, "seed": self.seed,
                "truncated": self.truncated}


def escape_rate(system: SmoothSystem, V: Region, n_max: int = 14, samples: int = 10**6, seed: int = 0,
                window=None, batch_size: int = 100_000, threads: int = 1) -> EscapeRateEstimate:
    """Monte-Carlo survival fractions p_n of uniform samples in V and the tail slope of log p_n."""
    if samples < 10**4:
        raise ValueError("samples must be >= 10^4")
    if not V.torus and not np.all(system.chart.contains(np.array([V.lo, V.hi]))):
        raise ValueError("V must lie inside the system chart")

    def run(b):
        size = min(batch_size, samples - b * batch_size)
        X = V.sample(philox(seed, b), size)
        X = X[_inside(system, V, X)]
        c = np.zeros(n_max, dtype=np.int64)
        c[0] = len(X)
        for n in range(1, n_max):
            X = system.wrap(system.forward(X))
            X = X[_inside(system, V, X)]
            c[n] = len(X)
        return c

    batches = range(math.ceil(samples / batch_size))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, batches))
    else:
        parts = [run(b) for b in batches]
    counts = np.sum(parts, axis=0)
    ns = np.arange(1, n_max + 1)
    lo, hi = window if window is not None else (max(2, n_max // 2), n_max)
    truncated = False
    if np.any(counts == 0):
        hi = min(hi, int(ns[np.argmax(counts == 0)]) - 1)
        truncated = True
    sel = (ns >= lo) & (ns <= hi)
    if sel.sum() < 3:
        raise StatusError("too few surviving samples for a tail regression")
    logp = np.log(counts[sel] / samples)
    # var(log p_n) ~ 1/survivors, so weight residuals by sqrt(survivors)
    coef, cov = np.polyfit(ns[sel], logp, 1, w=np.sqrt(counts[sel]), cov="unscaled")
    steps = np.diff(logp)
    return EscapeRateEstimate(ns, counts, samples, seed, (int(lo), int(hi)), float(coef[0]),
                              float(steps.min()), float(steps.max()), float(np.sqrt(cov[0, 0])), truncated)


def _inside(system, V, X):
    ok = np.all(np.isfinite(X), axis=1)
    ok[ok] = V.contains(X[ok])
    return ok


# ---------------------------------------------------------------------------


@dataclass
class ExpansionEstimate:
    ns: np.ndarray
    a: np.ndarray
    resolution: int

    @property
    def value(self):
        """Fekete estimate min_n a_n."""
        return float(np.min(self.a))

    def to_dict(self):
        return {"value": self.value, "ns": self.ns.tolist(), "a": self.a.tolist(), "resolution": self.resolution}


def expansion_rate(system: SmoothSystem, resolution: int = 64, window=(1, 8), samples=None) -> ExpansionEstimate:
    """a_n = (1/n) max log||Df^n|| over sample points whose orbit stays in U; stops when none survive."""
    if samples is None:
        if resolution < 32:
            raise ValueError("resolution must be >= 32")
        samples = system.reference.grid(resolution)
    X = np.array(samples, dtype=float)
    d = X.shape[1]
    U = system.reference
    X = X[_inside(system, U, X)]
    M = np.broadcast_to(np.eye(d), (len(X), d, d)).copy()
    logscale = np.zeros(len(X))
    ns, a = [], []
    for n in range(1, window[1] + 1):
        M = system.jacobian(X) @ M
        s = np.linalg.norm(M, axis=(1, 2))
        M /= s[:, None, None]
        logscale += np.log(s)
        X = system.wrap(system.forward(X))
        ok = _inside(system, U, X)
        X, M, logscale = X[ok], M[ok], logscale[ok]
        if len(X) == 0:
            break
        if n >= window[0]:
            top = np.linalg.svd(M, compute_uv=False)[:, 0]
            ns.append(n)
            a.append(float(np.max(logscale + np.log(top))) / n)
    if not ns:
        raise StatusError("no sample orbit stays in the reference region")
    return ExpansionEstimate(np.array(ns), np.array(a), resolution)


# ---------------------------------------------------------------------------


def survivor_cloud(system: SmoothSystem, count: int = 20000, depth: int = 10, seed: int = 0,
                   jitter: float = 0.5) -> np.ndarray:
    """Points whose orbit stays in U for |k| <= depth.

    A population is grown to survive 2*depth forward steps one level at a
    time.  A sample that leaves U at level l is repaired in place: it is
    jittered with radius jitter*exp(-(l-1)*beta0), growing geometrically over
    retries, until the perturbed point survives l steps.  Repairing instead of
    cloning keeps every sample's itinerary independent.  The cloud is the
    depth-th forward image of the final population.
    """
    U = system.reference
    rng = philox(seed, 0)
    beta = max(derivative_log_bound(system, 32).beta0, 1e-3)
    d = system.dim
    X = system.wrap(U.sample(rng, count))
    Y = X.copy()
    for level in range(1, 2 * depth + 1):
        Y = system.wrap(system.forward(Y))
        dead = np.flatnonzero(~_inside(system, U, Y))
        sigma0 = jitter * math.exp(-(level - 1) * beta)
        for t in range(60):
            if len(dead) == 0:
                break
            C = system.wrap(X[dead] + sigma0 * 2 ** (t / 3) * rng.standard_normal((len(dead), d)))
            Z, ok = _advance(system, U, C, level)
            X[dead[ok]], Y[dead[ok]] = C[ok], Z[ok]
            dead = dead[~ok]
        if len(dead):
            live = np.setdiff1d(np.arange(count), dead)
            if len(live) == 0:
                raise StatusError("no sample survives; the reference region may contain no invariant set")
            src = live[rng.integers(len(live), size=len(dead))]
            X[dead], Y[dead] = X[src], Y[src]
    for _ in range(depth):
        X = system.wrap(system.forward(X))
    return X


def _advance(system, U, C, steps):
    """f^steps(C) and whether f^0..f^steps all stay in U."""
    ok = _inside(system, U, C)
    Z = C.copy()
    for _ in range(steps):
        Z[ok] = system.wrap(system.forward(Z[ok]))
        ok[ok] = _inside(system, U, Z[ok])
    return Z, ok


# ---------------------------------------------------------------------------


@dataclass
class BoxDimEstimate:
    scales: np.ndarray
    counts: np.ndarray
    slope: float
    intercept: float
    provenance: str = "survivor set"

    @property
    def value(self):
        return self.slope

    def table(self):
        return [(float(r), int(c)) for r, c in zip(self.scales, self.counts)]

    def to_dict(self):
        return {"value": self.slope, "scales": self.scales.tolist(), "counts": self.counts.tolist(),
                "provenance": self.provenance}


def box_counts(cloud, scales, origin=None):
    cloud = np.atleast_2d(np.asarray(cloud, dtype=float))
    if origin is None:
        origin = np.zeros(cloud.shape[1])
    return np.array([len(np.unique(np.floor((cloud - origin) / r).astype(np.int64), axis=0)) for r in scales])


def box_dimension(cloud, scales, origin=None, provenance="survivor set") -> BoxDimEstimate:
    """Least-squares slope of log N(rho) against log(1/rho) over grid boxes."""
    cloud = np.asarray(cloud, dtype=float)
    if cloud.ndim == 1:
        cloud = cloud[:, None]
    scales = np.sort(np.asarray(scales, dtype=float))[::-1]
    if len(cloud) < 10**4:
        raise ValueError("box counting needs at least 10^4 points")
    if len(scales) < 4 or math.log10(scales[0] / scales[-1]) < 1.5 - 1e-9:
        raise ValueError("need >= 4 scales spanning >= 1.5 decades")
    if np.all(np.ptp(cloud, axis=0) < scales[-1]):
        raise ValueError("degenerate cloud: all points fit in one box of the smallest scale")
    counts = box_counts(cloud, scales, origin)
    fit = linregress(np.log(1 / scales), np.log(counts))
    return BoxDimEstimate(scales, counts, float(fit.slope), float(fit.intercept), provenance)


# ---------------------------------------------------------------------------


@dataclass
class BoundCheck:
    bound: float
    dim: int
    escape: float
    expansion: float
    measured: float | None = None

    @property
    def passed(self):
        return None if self.measured is None else bool(self.measured <= self.bound)

    def ledger_row(self):
        verdict = "PASS" if self.passed else "FAIL"
        return f"dim_bound_check: {verdict} measured={self.measured:.12g} bound={self.bound:.12g}"

    def to_dict(self):
        return {"bound": self.bound, "dim": self.dim, "escape": self.escape, "expansion": self.expansion,
                "measured": self.measured, "passed": self.passed}


def dimension_bound(system: SmoothSystem, escape: EscapeRateEstimate, expansion: ExpansionEstimate,
                    measured: BoxDimEstimate | None = None) -> BoundCheck:
    """dim M + E/s from measured escape rate E and expansion rate s."""
    s = expansion.value
    if not s > 0:
        raise StatusError("expansion rate s <= 0: no positive exponent, the bound does not apply")
    bound = system.dim + escape.upper / s
    return BoundCheck(float(bound), system.dim, escape.upper, s, None if measured is None else measured.value)
