"""Potentials, iteration, derivative cocycles, Birkhoff sums and derivative bounds."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .systems import SmoothSystem

MAX_ITERATION = 10_000


class PotentialKindError(TypeError):
    pass


class Escaped(NamedTuple):
    """Orbit left the chart; `step` is the first iterate outside it."""

    step: int
    point: np.ndarray


@dataclass(frozen=True)
class Potential:
    """Real function on the phase space.

    kind is 'continuous', 'symbolic' (constant on first-symbol cylinders) or
    'volume' (the unstable volume potential, defined on saddle orbits only).
    """

    name: str
    kind: str
    rule: Callable | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, system: SmoothSystem, P):
        if self.kind == "volume":
            raise PotentialKindError(
                "the unstable volume potential needs splitting data; use pressure.volume_birkhoff"
            )
        return np.asarray(self.rule(system, np.atleast_2d(P)), dtype=float)

    def grid_min(self, system: SmoothSystem, resolution=64):
        """min of the potential over a grid of the reference region."""
        return float(np.min(self(system, system.reference.grid(resolution))))

    def to_dict(self):
        return {"kind": self.name, **self.params}


def zero():
    return constant(0.0, name="zero")


def constant(value, name=None):
    v = float(value)
    return Potential(name or "constant", "continuous",
                     lambda s, P: np.full(len(P), v), {"value": v} if name is None else {})


def coordinate(index=0, scale=1.0):
    i, a = int(index), float(scale)
    return Potential("coordinate", "continuous", lambda s, P: a * P[:, i], {"index": i, "scale": a})


def cosine(index=0, amplitude=1.0):
    """amplitude * cos(2 pi x_index), smooth on the torus."""
    i, a = int(index), float(amplitude)
    return Potential("cosine", "continuous",
                     lambda s, P: a * np.cos(2 * np.pi * P[:, i]), {"index": i, "amplitude": a})


def symbolic(values):
    """Value values[j] on the cylinder of points whose current symbol is j."""
    v = np.asarray(values, dtype=float)
    return Potential("symbolic", "symbolic", lambda s, P: v[s.symbol_of(P)], {"values": v.tolist()})


def component(values):
    """Locally constant on the connected pieces of a composite system."""
    v = np.asarray(values, dtype=float)
    return Potential("component", "continuous", lambda s, P: v[s.component_of(P)], {"values": v.tolist()})


def volume_unstable():
    return Potential("volume", "volume")


POTENTIALS = {
    "zero": lambda **kw: zero(),
    "constant": constant,
    "coordinate": coordinate,
    "cosine": cosine,
    "symbolic": symbolic,
    "component": component,
    "volume": lambda **kw: volume_unstable(),
}


def make_potential(kind, **params):
    if kind not in POTENTIALS:
        raise KeyError(f"unknown potential {kind!r}; available: {', '.join(sorted(POTENTIALS))}")
    return POTENTIALS[kind](**params)


# ---------------------------------------------------------------------------
# iteration


def iterate_batch(system: SmoothSystem, P, k: int):
    """Apply f^k to every row of P.

    Returns (points, escape_step) where escape_step is -1 for orbits that
    stayed in the chart and otherwise the first |step| that left it (the
    point is frozen there).
    """
    if abs(k) > MAX_ITERATION:
        raise ValueError(f"|k| must be <= {MAX_ITERATION}")
    P = system.wrap(np.array(np.atleast_2d(P), dtype=float))
    esc = np.full(len(P), -1, dtype=np.int64)
    esc[~system.in_chart(P)] = 0
    step = system.forward if k >= 0 else system.inverse
    for i in range(1, abs(k) + 1):
        live = esc < 0
        if not live.any():
            break
        Q = system.wrap(step(P[live]))
        out = ~system.in_chart(Q)
        idx = np.flatnonzero(live)
        esc[idx[out]] = i
        P[idx[~out]] = Q[~out]
    return P, esc


def iterate(system: SmoothSystem, p, k: int):
    """f^k(p) for one point, or an Escaped record."""
    P, esc = iterate_batch(system, p, k)
    if esc[0] >= 0:
        return Escaped(int(esc[0]), P[0])
    return P[0]


def orbit_segment(system: SmoothSystem, P, n: int):
    """Points f^0..f^{n-1} of each row, shape (N, n, d); NaN after escape."""
    P = system.wrap(np.array(np.atleast_2d(P), dtype=float))
    out = np.full((len(P), n, P.shape[1]), np.nan)
    ok = system.in_chart(P)
    for i in range(n):
        out[ok, i] = P[ok]
        if i + 1 < n:
            P = system.wrap(system.forward(P))
            ok &= system.in_chart(P)
    return out


def cocycle_batch(system: SmoothSystem, P, n: int, inverse=False):
    """D f^n (or D f^{-n}) along each row; (matrices, escape_step)."""
    P = system.wrap(np.array(np.atleast_2d(P), dtype=float))
    d = P.shape[1]
    M = np.broadcast_to(np.eye(d), (len(P), d, d)).copy()
    esc = np.full(len(P), -1, dtype=np.int64)
    esc[~system.in_chart(P)] = 0
    for i in range(1, n + 1):
        live = esc < 0
        if inverse:
            Q = system.wrap(system.inverse(P[live]))
            J = np.linalg.inv(system.jacobian(np.where(np.isfinite(Q), Q, 0.0)))
        else:
            J = system.jacobian(P[live])
            Q = system.wrap(system.forward(P[live]))
        out = ~system.in_chart(Q)
        idx = np.flatnonzero(live)
        esc[idx[out]] = i
        keep = idx[~out]
        M[keep] = J[~out] @ M[keep]
        P[keep] = Q[~out]
    return M, esc


def tangent_cocycle(system: SmoothSystem, p, n: int, inverse=False):
    """D f^n(p) by the chain rule; with inverse=True, D f^{-n}(p)."""
    M, esc = cocycle_batch(system, p, n, inverse)
    if esc[0] >= 0:
        return Escaped(int(esc[0]), np.asarray(p, dtype=float))
    return M[0]


def birkhoff_batch(system: SmoothSystem, phi: Potential, P, n: int):
    if phi.kind == "volume":
        raise PotentialKindError("use pressure.volume_birkhoff for the unstable volume potential")
    seg = orbit_segment(system, P, n)
    N, _, d = seg.shape
    flat = seg.reshape(-1, d)
    vals = np.full(len(flat), np.nan)
    ok = np.all(np.isfinite(flat), axis=1)
    vals[ok] = phi(system, flat[ok])
    return vals.reshape(N, n).sum(axis=1)


def birkhoff_sum(system: SmoothSystem, phi: Potential, p, n: int) -> float:
    """S_n phi(p) = phi(p) + phi(f p) + ... + phi(f^{n-1} p)."""
    return float(birkhoff_batch(system, phi, p, n)[0])


# ---------------------------------------------------------------------------
# derivative bounds


@dataclass(frozen=True)
class SystemBounds:
    beta0: float
    resolution: int


def log_norms(J):
    """log of the largest and smallest singular values of each matrix."""
    sv = np.linalg.svd(J, compute_uv=False)
    return np.log(sv[:, 0]), np.log(sv[:, -1])


def derivative_log_bound(system: SmoothSystem, resolution: int = 64) -> SystemBounds:
    """max over a grid of U of log||Df|| and log||Df^{-1}|| (never below 0)."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    G = system.reference.grid(resolution)
    top, bottom = log_norms(system.jacobian(G))
    beta0 = max(0.0, float(np.max(top)), float(np.max(-bottom)))
    return SystemBounds(beta0, resolution)


class StatusError(RuntimeError):
    """Run completed but the requested quantity does not exist (CLI exit status 3)."""
