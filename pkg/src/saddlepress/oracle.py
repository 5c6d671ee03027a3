"""Exact thermodynamics of weighted subshifts of finite type."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ReducibleError(ValueError):
    pass


class WeightedShift:
    """Subshift with 0/1 transitions A and weight w_i on the cylinder of symbol i.

    The transfer matrix is M_ij = w_i * A_ij, so a periodic word x_0..x_{n-1}
    contributes prod w_{x_k} to trace(M^n).
    """

    def __init__(self, transitions, weights=None):
        A = np.asarray(transitions)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("transition matrix must be square")
        if not np.all((A == 0) | (A == 1)):
            raise ValueError("transition matrix must be 0/1")
        s = A.shape[0]
        w = np.ones(s) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (s,) or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be positive, one per symbol")
        self.A = A.astype(np.int64)
        self.weights = w

    @classmethod
    def from_potential(cls, transitions, values):
        return cls(transitions, np.exp(np.asarray(values, dtype=float)))

    @property
    def n_symbols(self):
        return len(self.weights)

    @property
    def matrix(self):
        return self.weights[:, None] * self.A

    @property
    def log_weights(self):
        return np.log(self.weights)

    def unreachable(self):
        """Pairs (i, set not reachable from i); empty when irreducible."""
        s = self.n_symbols
        R = (self.A > 0).astype(np.int64)
        reach = R.copy()
        for _ in range(s):
            reach = ((reach + reach @ R) > 0).astype(np.int64)
        return [(i, sorted(np.flatnonzero(reach[i] == 0).tolist())) for i in range(s) if np.any(reach[i] == 0)]

    def check_irreducible(self):
        bad = self.unreachable()
        if bad:
            missing = sorted({j for _, js in bad for j in js})
            raise ReducibleError(f"transition matrix is reducible: symbols {missing} are not reachable from every symbol")

    def to_dict(self):
        return {"transitions": self.A.tolist(), "weights": self.weights.tolist()}


def _perron(M, tol=1e-12, max_iter=100_000):
    """Leading eigenvalue and positive eigenvector of an irreducible M >= 0.

    Iterates with I + M, which is primitive whenever M is irreducible.
    """
    s = M.shape[0]
    B = np.eye(s) + M
    v = np.full(s, 1.0 / s)
    rho = 0.0
    for _ in range(max_iter):
        u = B @ v
        new = u.sum() / v.sum()
        u /= u.sum()
        if abs(new - rho) <= tol * new and np.max(np.abs(u - v)) <= tol:
            v = u
            rho = new
            break
        v, rho = u, new
    lam = float((M @ v).sum() / v.sum())
    return lam, v


def transfer_pressure(W: WeightedShift) -> float:
    """log of the spectral radius of the transfer matrix."""
    W.check_irreducible()
    rho, _ = _perron(W.matrix)
    return float(np.log(rho))


def trace_periodic_sum(W: WeightedShift, n: int) -> float:
    """sum over period-n words of exp(S_n phi) = trace(M^n); inf past double range."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n <= 40:
        return float(np.trace(np.linalg.matrix_power(W.matrix, n)))
    with np.errstate(over="ignore"):
        return float(np.exp(log_trace_periodic_sum(W, n)))


def log_trace_periodic_sum(W: WeightedShift, n: int) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    M = W.matrix
    if n <= 40:
        return float(np.log(np.trace(np.linalg.matrix_power(M, n))))
    # repeated squaring on (matrix, log scale) pairs
    def mul(a, b):
        C = a[0] @ b[0]
        s = np.abs(C).max()
        return C / s, a[1] + b[1] + np.log(s)

    R, B = (np.eye(len(M)), 0.0), (M, 0.0)
    k = n
    while k:
        if k & 1:
            R = mul(R, B)
        k >>= 1
        if k:
            B = mul(B, B)
    return float(np.log(np.trace(R[0])) + R[1])


@dataclass(frozen=True)
class MarkovMeasure:
    stationary: np.ndarray
    kernel: np.ndarray
    entropy: float
    integral: float

    @property
    def free_energy(self):
        return self.entropy + self.integral


def markov_measure(W: WeightedShift, P) -> MarkovMeasure:
    """Entropy and potential integral of the stationary Markov chain with kernel P."""
    P = np.asarray(P, dtype=float)
    if np.any((P > 0) & (W.A == 0)):
        raise ValueError("kernel uses forbidden transitions")
    if not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
        raise ValueError("kernel rows must sum to 1")
    vals, vecs = np.linalg.eig(P.T)
    k = int(np.argmin(np.abs(vals - 1.0)))
    pi = np.abs(np.real(vecs[:, k]))
    pi /= pi.sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(P > 0, np.log(np.where(P > 0, P, 1.0)), 0.0)
    h = float(-np.sum(pi[:, None] * P * logs))
    return MarkovMeasure(pi, P, h, float(pi @ W.log_weights))


def markov_equilibrium(W: WeightedShift) -> MarkovMeasure:
    """Equilibrium chain P_ij = M_ij r_j / (rho r_i), stationary pi ~ l_i r_i."""
    W.check_irreducible()
    M = W.matrix
    rho, r = _perron(M)
    _, l = _perron(M.T)
    P = M * r[None, :] / (rho * r[:, None])
    P /= P.sum(axis=1, keepdims=True)
    pi = l * r
    pi /= pi.sum()
    with np.errstate(divide="ignore"):
        logs = np.where(P > 0, np.log(np.where(P > 0, P, 1.0)), 0.0)
    h = float(-np.sum(pi[:, None] * P * logs))
    return MarkovMeasure(pi, P, h, float(pi @ W.log_weights))


def perturbed_kernel(W: WeightedShift, rng, scale=0.5):
    """Random kernel on the allowed transitions, for variational checks."""
    P = W.A * np.exp(scale * rng.standard_normal(W.A.shape))
    return P / P.sum(axis=1, keepdims=True)
