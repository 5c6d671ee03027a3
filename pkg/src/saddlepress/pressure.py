"""Pressure estimators: saddle-point (plain and banded), Bowen, separated-set, volume."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import linregress

from . import kernels
from .core import Potential, StatusError, derivative_log_bound, orbit_segment
from .orbits import SaddleFilter, accepted, periodic_orbits
from .systems import SmoothSystem

DEFAULT_RESOLUTION = 64


@dataclass(frozen=True)
class PressureRow:
    n: int
    Q: float
    log_q: float
    count: int
    fallback: bool

    @property
    def log_q_over_n(self):
        return self.log_q / self.n


@dataclass
class PressureSeries:
    potential: str
    filter: dict | None
    rows: list = field(default_factory=list)

    @property
    def ns(self):
        return np.array([r.n for r in self.rows])

    @property
    def log_q(self):
        return np.array([r.log_q for r in self.rows])

    @property
    def all_fallback(self):
        return all(r.fallback for r in self.rows)

    def table(self):
        """Rows as (n, Q, logQ_over_n, count, fallback)."""
        return [(r.n, r.Q, r.log_q_over_n, r.count, int(r.fallback)) for r in self.rows]


@dataclass
class GrowthEstimate:
    value: float
    method: str
    window: tuple
    stderr: float
    max_deviation: float
    tail_max: float
    schedule: list = field(default_factory=list)
    status: str = "ok"
    diagnostics: dict = field(default_factory=dict)
    series: PressureSeries | None = field(default=None, repr=False)

    @property
    def tail_consistent(self):
        """tail-max >= regression - 3 stderr; a diagnostic, it can fail when Q_n = C e^{hn} with C < 1."""
        return self.tail_max >= self.value - 3 * self.stderr

    def to_dict(self):
        return {"value": self.value, "method": self.method, "window": list(self.window),
                "stderr": self.stderr, "max_deviation": self.max_deviation, "tail_max": self.tail_max,
                "tail_consistent": bool(self.tail_consistent), "status": self.status,
                "schedule": self.schedule, "diagnostics": self.diagnostics}


def _window(window):
    lo, hi = int(window[0]), int(window[1])
    if hi - lo + 1 < 4:
        raise ValueError(f"window [{lo}, {hi}] must contain at least 4 values of n")
    return lo, hi


# ---------------------------------------------------------------------------
# Birkhoff sums on orbits


def orbit_birkhoff(system: SmoothSystem, phi: Potential, orbits):
    """S_n phi at each orbit (n = the orbit's period), evaluating phi once per point."""
    if not orbits:
        return np.empty(0)
    if phi.kind == "volume":
        return np.array([volume_birkhoff(o) for o in orbits])
    pts = np.concatenate([o.points for o in orbits])
    vals = phi(system, pts)
    p = np.array([o.minimal_period for o in orbits])
    sums = np.add.reduceat(vals, np.concatenate([[0], np.cumsum(p)[:-1]]))
    return sums * np.array([o.repeats for o in orbits])


def volume_birkhoff(orbit) -> float:
    """S_n phi^u = -log|det Df^n restricted to E^u| along a saddle orbit."""
    if not orbit.saddle or orbit.unstable_steps is None:
        raise ValueError("volume potential is defined on classified saddle orbits only")
    return float(-orbit.repeats * np.sum(orbit.unstable_steps))


def _fallback_min(system, phi, resolution, window=None):
    if phi.kind != "volume":
        return phi.grid_min(system, resolution)
    # phi^u lives on saddle orbits: use the smallest one-step value seen in the window
    lo, hi = window
    best = np.inf
    for n in range(lo, hi + 1):
        for o in periodic_orbits(system, n):
            if o.saddle:
                best = min(best, float(np.min(-o.unstable_steps)))
    if not np.isfinite(best):
        raise StatusError("no saddles at this α")
    return best


def _sum_row(n, S, weights, fallback_min):
    if len(S) == 0:
        return PressureRow(n, float(math.exp(n * fallback_min)), n * fallback_min, 0, True)
    if np.max(S) < 700:
        Q = float(np.sum(weights * np.exp(S)))
        return PressureRow(n, Q, math.log(Q), len(S), False)
    lq = float(logsumexp(S, b=weights))
    return PressureRow(n, math.exp(min(lq, 709.0)), lq, len(S), False)


def q_sp(system: SmoothSystem, phi: Potential, filt: SaddleFilter | None, n: int, orbits=None,
         fallback_min=None, resolution=DEFAULT_RESOLUTION) -> PressureRow:
    """Sum of exp(S_n phi) over the filtered saddle points of f^n (None = all saddles)."""
    if orbits is None:
        orbits = periodic_orbits(system, n)
    if any(o.status == "unclassified" for o in orbits):
        raise ValueError("orbits must be classified before computing Q_SP")
    mask = accepted(system, orbits, filt)
    sel = [o for o, m in zip(orbits, mask) if m]
    if fallback_min is None and not sel:
        fallback_min = _fallback_min(system, phi, resolution, (n, n))
    S = orbit_birkhoff(system, phi, sel)
    w = np.array([o.minimal_period for o in sel], dtype=float)
    return _sum_row(n, S, w, fallback_min)


def pressure_series(system, phi, filt, window, resolution=DEFAULT_RESOLUTION) -> PressureSeries:
    lo, hi = int(window[0]), int(window[1])
    fmin = None
    series = PressureSeries(phi.name, None if filt is None else filt.to_dict())
    for n in range(lo, hi + 1):
        orbits = periodic_orbits(system, n)
        if fmin is None and not np.any(accepted(system, orbits, filt)):
            fmin = _fallback_min(system, phi, resolution, (lo, hi))
        series.rows.append(q_sp(system, phi, filt, n, orbits, fmin, resolution))
    return series


def growth_estimate(series: PressureSeries, window=None) -> GrowthEstimate:
    """Regression slope of log Q_n on n over the window, plus max of log Q_n / n."""
    ns, lq = series.ns, series.log_q
    lo, hi = _window(window if window is not None else (ns.min(), ns.max()))
    sel = (ns >= lo) & (ns <= hi)
    if sel.sum() < 4:
        raise ValueError("window contains fewer than 4 computed values of n")
    fit = linregress(ns[sel], lq[sel])
    resid = lq[sel] - (fit.intercept + fit.slope * ns[sel])
    return GrowthEstimate(
        value=float(fit.slope), method="regression", window=(lo, hi),
        stderr=float(fit.stderr), max_deviation=float(np.max(np.abs(resid))),
        tail_max=float(np.max(lq[sel] / ns[sel])), series=series,
        diagnostics={"intercept": float(fit.intercept),
                     "fallback_rows": int(sum(r.fallback for r in series.rows))},
    )


def p_sp(system, phi, filt, window, resolution=DEFAULT_RESOLUTION) -> GrowthEstimate:
    series = pressure_series(system, phi, filt, window, resolution)
    est = growth_estimate(series, window)
    if series.all_fallback:
        est.status = "no saddles at this α"
    return est


def p_sp_limit(system, phi, alpha, c_schedule, window, resolution=DEFAULT_RESOLUTION) -> GrowthEstimate:
    """P_SP(phi, alpha, c) along a decreasing c schedule; the limit is the last value."""
    cs = [float(c) for c in c_schedule]
    if not cs or any(b >= a for a, b in zip(cs, cs[1:])) or not all(0 < c <= 1 for c in cs):
        raise ValueError("c_schedule must be strictly decreasing within (0, 1]")
    ests = [p_sp(system, phi, SaddleFilter(alpha, c), window, resolution) for c in cs]
    violations = []
    for (c0, e0), (c1, e1) in zip(zip(cs, ests), zip(cs[1:], ests[1:])):
        slack = 2 * max(e0.stderr, e1.stderr)
        if e1.value < e0.value - slack - 1e-12:
            violations.append({"c_from": c0, "c_to": c1, "drop": e0.value - e1.value})
    last = ests[-1]
    out = GrowthEstimate(
        value=last.value, method="c-limit", window=last.window, stderr=last.stderr,
        max_deviation=last.max_deviation, tail_max=last.tail_max, series=last.series,
        schedule=[{"alpha": alpha, "c": c, "value": e.value, "stderr": e.stderr,
                   "all_fallback": e.series.all_fallback} for c, e in zip(cs, ests)],
        diagnostics={"monotone": not violations, "violations": violations},
    )
    if all(e.series.all_fallback for e in ests):
        out.status = "no saddles at this α"
    return out


def p_sp_banded(system, phi, alpha, beta, c, window, resolution=DEFAULT_RESOLUTION) -> GrowthEstimate:
    if not alpha < beta:
        raise ValueError("alpha must be < beta")
    return p_sp(system, phi, SaddleFilter(alpha, c, beta), window, resolution)


# ---------------------------------------------------------------------------
# unfiltered periodic points


def bowen_series(system, phi, window, resolution=DEFAULT_RESOLUTION) -> PressureSeries:
    lo, hi = int(window[0]), int(window[1])
    series = PressureSeries(phi.name, None)
    fmin = None
    for n in range(lo, hi + 1):
        orbits = periodic_orbits(system, n, classify=False)
        if not orbits and fmin is None:
            fmin = phi.grid_min(system, resolution)
        S = orbit_birkhoff(system, phi, orbits)
        w = np.array([o.minimal_period for o in orbits], dtype=float)
        series.rows.append(_sum_row(n, S, w, fmin))
    return series


def bowen_fixpoint_pressure(system, phi, window, resolution=DEFAULT_RESOLUTION) -> GrowthEstimate:
    """Growth rate of the sum of exp(S_n phi) over Fix(f^n)."""
    series = bowen_series(system, phi, window, resolution)
    est = growth_estimate(series, window)
    est.method = "bowen-regression"
    if series.all_fallback:
        est.status = "no periodic points"
    return est


# ---------------------------------------------------------------------------
# separated sets


def separated_samples(system, n, epsilon, resolution=None):
    """Grid of U with spacing <= epsilon/4, restricted to points whose orbit stays in U for n steps."""
    if resolution is None:
        span = float(np.max(system.reference.hi - system.reference.lo))
        resolution = int(math.ceil(4 * span / epsilon)) + 1
    G = system.reference.grid(resolution)
    return _stay_in_reference(system, G, n)


def random_separated_samples(system, count=20000, seed=0, depth=10):
    """Random candidates for separated sets.

    Uniform points on a torus.  For open systems, a survivor cloud, since
    uniform points almost never stay in U for n steps.
    """
    from .geometry import philox, survivor_cloud
    if system.reference.torus:
        return system.reference.sample(philox(seed, 0), count)
    return survivor_cloud(system, count, depth, seed)


def _stay_in_reference(system, P, n):
    if system.reference.torus:
        return P
    seg = orbit_segment(system, P, n)
    ok = np.all(np.isfinite(seg), axis=(1, 2))
    ok[ok] = np.all(system.reference.contains(seg[ok].reshape(-1, P.shape[1])).reshape(-1, n), axis=1)
    return P[ok]


def separated_set(system, n, epsilon, samples):
    """Indices of a greedy maximal (n, eps)-separated subset of the samples, and their orbits."""
    seg = orbit_segment(system, samples, n)
    ok = np.all(np.isfinite(seg), axis=(1, 2))
    seg = seg[ok]
    periodic = np.full(samples.shape[1], system.torus, dtype=bool)
    keep = kernels.greedy_separated(seg, periodic, epsilon)
    return np.flatnonzero(ok)[keep], seg[keep]


def separated_pressure(system, phi, n, epsilon, samples=None) -> float:
    """(1/n) log sum over a maximal (n, eps)-separated subset of exp(S_n phi); a grid-relative lower estimate."""
    log_sum, _ = _separated_log_sum(system, phi, n, epsilon, samples)
    return log_sum / n


def _separated_log_sum(system, phi, n, epsilon, samples):
    if samples is None:
        samples = separated_samples(system, n, epsilon)
    else:
        samples = _stay_in_reference(system, np.atleast_2d(samples), n)
    if len(samples) == 0:
        raise StatusError("no sample survives n steps in the reference region")
    _, seg = separated_set(system, n, epsilon, samples)
    d = samples.shape[1]
    vals = phi(system, seg.reshape(-1, d)).reshape(len(seg), n).sum(axis=1)
    return float(logsumexp(vals)), len(seg)


def separated_growth(system, phi, epsilon, window, samples=None) -> GrowthEstimate:
    """Regression slope of log sum over (n, eps)-separated sets across an n window."""
    lo, hi = _window(window)
    series = PressureSeries(phi.name, None)
    for n in range(lo, hi + 1):
        ls, count = _separated_log_sum(system, phi, n, epsilon, samples)
        series.rows.append(PressureRow(n, math.exp(min(ls, 709.0)), ls, count, False))
    est = growth_estimate(series, (lo, hi))
    est.method = "separated-regression"
    est.diagnostics["epsilon"] = epsilon
    est.diagnostics["max_count"] = max(r.count for r in series.rows)
    return est


# ---------------------------------------------------------------------------
# volume pressure and the gap proxy


def volume_pressure(system, alpha_schedule, c_schedule, window, resolution=DEFAULT_RESOLUTION) -> GrowthEstimate:
    """P_SP of the unstable volume potential, c -> 0 inside, alpha -> 0 outside."""
    from .core import volume_unstable

    phi = volume_unstable()
    lo, hi = _window(window)
    if not any(o.saddle for n in range(lo, hi + 1) for o in periodic_orbits(system, n)):
        raise StatusError("no saddles at this α")
    fmin = _fallback_min(system, phi, resolution, (lo, hi))
    alphas = [float(a) for a in alpha_schedule]
    cs = [float(c) for c in c_schedule]
    if any(b >= a for a, b in zip(alphas, alphas[1:])) or any(b >= a for a, b in zip(cs, cs[1:])):
        raise ValueError("schedules must be strictly decreasing")
    grid = []
    best = None
    for a in alphas:
        for c in cs:
            filt = SaddleFilter(a, c)
            series = PressureSeries(phi.name, filt.to_dict())
            for n in range(lo, hi + 1):
                series.rows.append(q_sp(system, phi, filt, n, periodic_orbits(system, n), fmin, resolution))
            est = growth_estimate(series, (lo, hi))
            grid.append({"alpha": a, "c": c, "value": est.value, "stderr": est.stderr,
                         "all_fallback": series.all_fallback})
            best = est
    best.method = "volume-limit"
    best.schedule = grid
    shift = system.volume_shift()
    if shift is not None:
        from .oracle import transfer_pressure

        best.diagnostics["oracle"] = transfer_pressure(shift)
    if all(g["all_fallback"] for g in grid):
        best.status = "no saddles at this α"
    return best


def max_orbit_average(system, phi, window):
    """Largest periodic-orbit average of phi over all orbits with period in the window."""
    lo, hi = int(window[0]), int(window[1])
    best = -np.inf
    for n in range(lo, hi + 1):
        orbits = periodic_orbits(system, n, classify=False)
        if orbits:
            best = max(best, float(np.max(orbit_birkhoff(system, phi, orbits) / n)))
    return best


def gap_estimate(system, phi, window, ptop=None) -> float:
    """P_top estimate minus the best periodic-orbit average; over-estimates alpha(phi) in general."""
    if ptop is None:
        ptop = bowen_fixpoint_pressure(system, phi, window).value
    avg = max_orbit_average(system, phi, (1, window[1]))
    if not np.isfinite(avg):
        raise StatusError("no periodic orbits to average over")
    return float(ptop - avg)


def beta0(system, resolution=DEFAULT_RESOLUTION):
    return derivative_log_bound(system, resolution).beta0
