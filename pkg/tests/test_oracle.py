import math

import numpy as np
import pytest
from scipy.stats import linregress

from saddlepress.oracle import (ReducibleError, WeightedShift, log_trace_periodic_sum, markov_equilibrium,
                                markov_measure, perturbed_kernel, trace_periodic_sum, transfer_pressure)

GOLDEN = [[1, 1], [1, 0]]
FULL2 = [[1, 1], [1, 1]]


def test_transfer_pressure_examples():
    assert transfer_pressure(WeightedShift(FULL2, [1, 1])) == pytest.approx(math.log(2), abs=1e-12)
    assert transfer_pressure(WeightedShift(FULL2, [1, math.e])) == pytest.approx(1.313262, abs=1e-6)
    assert transfer_pressure(WeightedShift(FULL2, [1, math.e])) == pytest.approx(math.log(1 + math.e), abs=1e-12)
    assert transfer_pressure(WeightedShift(GOLDEN)) == pytest.approx(math.log((1 + math.sqrt(5)) / 2), abs=1e-12)


def test_trace_examples():
    w0, w1 = 0.7, 2.3
    W = WeightedShift(FULL2, [w0, w1])
    assert trace_periodic_sum(W, 1) == pytest.approx(w0 + w1, rel=1e-14)
    assert trace_periodic_sum(W, 2) == pytest.approx((w0 + w1) ** 2, rel=1e-14)
    assert trace_periodic_sum(WeightedShift(GOLDEN), 4) == 7


def test_log_domain_trace_matches():
    W = WeightedShift([[1, 1, 0], [0, 1, 1], [1, 1, 1]], [0.5, 3.0, 1.7])
    for n in (1, 5, 40, 41, 60):
        direct = math.log(np.trace(np.linalg.matrix_power(W.matrix, n)))
        assert log_trace_periodic_sum(W, n) == pytest.approx(direct, rel=1e-12)
    big = WeightedShift(FULL2, [1e3, 1e3])
    assert log_trace_periodic_sum(big, 200) == pytest.approx(200 * math.log(2e3), rel=1e-12)


def test_equilibrium_examples():
    m = markov_equilibrium(WeightedShift(FULL2))
    assert np.allclose(m.stationary, [0.5, 0.5], atol=1e-12)
    assert m.entropy == pytest.approx(math.log(2), abs=1e-12) and m.integral == pytest.approx(0, abs=1e-15)
    m = markov_equilibrium(WeightedShift(FULL2, [1, math.e]))
    assert m.free_energy == pytest.approx(math.log(1 + math.e), abs=1e-12)
    p = math.e / (1 + math.e)
    assert m.stationary[1] == pytest.approx(p, abs=1e-12)
    m = markov_equilibrium(WeightedShift(GOLDEN))
    assert m.entropy == pytest.approx(math.log((1 + math.sqrt(5)) / 2), abs=1e-12)


def test_markov_invariants():
    rng = np.random.default_rng(0)
    W = WeightedShift([[1, 1, 0], [0, 1, 1], [1, 0, 1]], rng.uniform(0.2, 3, 3))
    m = markov_equilibrium(W)
    assert np.allclose(m.stationary @ m.kernel, m.stationary, atol=1e-12)
    assert np.allclose(m.kernel.sum(axis=1), 1, atol=1e-12)
    assert m.entropy >= 0


@pytest.mark.parametrize("A", [GOLDEN, FULL2, [[1, 1, 0], [0, 1, 1], [1, 1, 1]]])
def test_variational_principle(A):
    rng = np.random.default_rng(11)
    s = len(A)
    for _ in range(5):
        W = WeightedShift(A, np.exp(rng.normal(size=s)))
        P = transfer_pressure(W)
        assert abs(markov_equilibrium(W).free_energy - P) <= 1e-9
        for _ in range(20):
            mu = markov_measure(W, perturbed_kernel(W, rng))
            assert mu.free_energy <= P + 1e-12


def test_periodic_count_growth_bounds_entropy():
    W = WeightedShift(GOLDEN)
    h = markov_equilibrium(W).entropy
    ns = np.arange(20, 41)
    growth = linregress(ns, [log_trace_periodic_sum(W, int(n)) for n in ns]).slope
    assert h <= growth + 1e-6


def test_reducible_names_symbols():
    W = WeightedShift([[1, 1, 0], [0, 1, 0], [0, 0, 1]])
    with pytest.raises(ReducibleError) as e:
        transfer_pressure(W)
    assert "0" in str(e.value) and "2" in str(e.value)
    with pytest.raises(ReducibleError):
        markov_equilibrium(W)


def test_shift_validation():
    with pytest.raises(ValueError):
        WeightedShift([[1, 2], [1, 1]])
    with pytest.raises(ValueError):
        WeightedShift(FULL2, [1, 0])
    with pytest.raises(ValueError):
        markov_measure(WeightedShift(GOLDEN), [[0.5, 0.5], [0.5, 0.5]])
