"""Acceptance criteria 1-10.  Each test records one PASS/FAIL line (see the
'acceptance criteria' section at the end of the pytest report).

    python -m pytest tests/test_acceptance.py -v
"""
import hashlib
import math
import time

import numpy as np

from conftest import record
from saddlepress.cli import main
from saddlepress.core import birkhoff_sum, component, cosine, iterate, symbolic, tangent_cocycle, zero
from saddlepress.geometry import box_dimension, dimension_bound, escape_rate, expansion_rate, survivor_cloud
from saddlepress.oracle import (WeightedShift, markov_equilibrium, markov_measure, perturbed_kernel,
                                trace_periodic_sum, transfer_pressure)
from saddlepress.orbits import SaddleFilter, accepted, clear_cache, enumerate_periodic, periodic_orbits
from saddlepress.pressure import (beta0, bowen_fixpoint_pressure, bowen_series, gap_estimate, p_sp_banded,
                                  p_sp_limit, pressure_series, q_sp, volume_pressure)
from saddlepress.systems import Region, make_system

LOG_LAM = math.log((3 + math.sqrt(5)) / 2)   # 0.962424
LOG_PHI = math.log((1 + math.sqrt(5)) / 2)   # 0.481212
LOG2 = math.log(2)


def test_criterion_1_cat_entropy():
    clear_cache()
    t = time.perf_counter()
    est = bowen_fixpoint_pressure(make_system("cat_map"), zero(), (6, 12))
    dt = time.perf_counter() - t
    ok = abs(est.value - LOG_LAM) <= 0.01 and dt < 5
    assert record(1, ok, f"Bowen estimate {est.value:.6f} vs {LOG_LAM:.6f} (tol 0.01), {dt:.2f}s (< 5s)")


def test_criterion_2_saturation():
    cat = make_system("cat_map")
    plain = [r.Q for r in bowen_series(cat, zero(), (1, 12)).rows]
    same = all([r.Q for r in pressure_series(cat, zero(), SaddleFilter(0.9, c), (1, 12)).rows] == plain
               for c in (1.0, 0.5, 0.1))
    assert record(2, same, "filtered (0.9, c in {1, .5, .1}) Q_n == unfiltered Q_n exactly for n <= 12")


def test_criterion_3_trace_identity():
    worst = 0.0
    for s, lam in ((2, 4.0), (3, 4.5)):
        sys = make_system("skew_horseshoe", n_symbols=s, lam=lam, mu=0.25)
        rng = np.random.default_rng(100 + s)
        for _ in range(10):
            vals = rng.normal(size=s)
            W = WeightedShift.from_potential(sys.transition_matrix(), vals)
            for n in range(1, 11):
                Q = q_sp(sys, symbolic(vals), None, n).Q
                worst = max(worst, abs(Q / trace_periodic_sum(W, n) - 1))
    assert record(3, worst <= 1e-9, f"max relative gap q_sp vs trace(M^n) = {worst:.2e} (tol 1e-9)")


def test_criterion_4_variational_principle():
    W = WeightedShift([[1, 1], [1, 0]])
    P = transfer_pressure(W)
    eq = markov_equilibrium(W)
    rng = np.random.default_rng(4)
    others = [markov_measure(W, perturbed_kernel(W, rng)).free_energy for _ in range(20)]
    ok = abs(P - LOG_PHI) <= 1e-6 and abs(eq.free_energy - P) <= 1e-9 and max(others) <= P
    assert record(4, ok, f"pressure {P:.9f} (tol 1e-6), h+int {eq.free_energy:.12f} (tol 1e-9), "
                         f"max perturbed {max(others):.6f} <= pressure")


def test_criterion_5_linear_horseshoe():
    t = time.perf_counter()
    sys = make_system("linear_horseshoe")
    vol = volume_pressure(sys, [0.5, 0.25, 0.1], [1.0, 0.5, 0.1], (4, 10)).value
    esc = escape_rate(sys, Region.box((0, 0), (1, 1)), 14, 10**6, seed=20240517).upper
    sup = transfer_pressure(sys.volume_shift())
    dt = time.perf_counter() - t
    ok = (abs(vol + 0.6931) <= 0.02 and abs(esc + 0.6931) <= 0.05 and abs(vol - esc) <= 0.07
          and sup <= esc + 0.05 <= 0.05 and dt < 120)
    assert record(5, ok, f"volume {vol:.4f}, escape {esc:.4f}, |diff| {abs(vol - esc):.4f}, "
                         f"oracle sup {sup:.4f} <= E+0.05 <= 0.05, {dt:.1f}s (< 120s)")


def test_criterion_6_dimension_bound():
    sys = make_system("linear_horseshoe")
    esc = escape_rate(sys, Region.box((0, 0), (1, 1)), 14, 10**6, seed=20240517)
    exp = expansion_rate(sys)
    box = box_dimension(survivor_cloud(sys, 20000, 10, seed=20240517), 4.0 ** -np.arange(1, 5))
    check = dimension_bound(sys, esc, exp, box)
    ok = abs(check.bound - 1.5) <= 0.05 and abs(box.value - 1.0) <= 0.1 and check.passed
    assert record(6, ok, f"bound {check.bound:.4f} (1.5 +- 0.05), box dim {box.value:.4f} (1.0 +- 0.1), "
                         f"{check.ledger_row()}")


def test_criterion_7_horseshoe_with_sink():
    sys = make_system("horseshoe_sink")
    phi = component([0.0, 1.0])
    ptop = bowen_fixpoint_pressure(sys, phi, (6, 12)).value
    lim = p_sp_limit(sys, phi, 0.5, [1.0, 0.5, 0.1], (6, 12)).value
    gap = gap_estimate(sys, phi, (6, 12), ptop)
    ok = abs(ptop - 1.0) <= 0.1 and abs(lim - LOG2) <= 0.05 and abs(gap) <= 0.05
    assert record(7, ok, f"P_top {ptop:.4f} (1.0 +- 0.1), c-limit saddle pressure {lim:.4f} (log 2 +- 0.05), "
                         f"gap {gap:.4f} (0 +- 0.05)")


def test_criterion_8_no_saddles(tmp_path):
    cfg = tmp_path / "product.toml"
    cfg.write_text('[system]\nname = "rotation_cat"\n[filter]\nalpha = [0.5]\nc = [1.0, 0.1]\n'
                   '[pressure]\nwindow = [2, 6]\n')
    code = main(["volume", "--config", str(cfg), "--out", str(tmp_path / "o")])
    prod = make_system("rotation_cat")
    series = p_sp_limit(prod, zero(), 0.5, [1.0, 0.1], (2, 6)).series
    h = bowen_fixpoint_pressure(prod.factors[1], zero(), (6, 12)).value
    ok = code == 3 and series.all_fallback and abs(h - 0.9624) <= 0.01
    assert record(8, ok, f"volume exit {code} (3), saddle series all fallback: {series.all_fallback}, "
                         f"cat factor h_top {h:.4f} (0.9624)")


def test_criterion_9_henon_fixed_points():
    a, b = 1.4, 0.3
    henon = make_system("henon", a=a, b=b)
    orbits = enumerate_periodic(henon, 1, "newton")
    r = math.sqrt((1 - b) ** 2 + 4 * a)
    expect = sorted([(b - 1 + r) / (2 * a), (b - 1 - r) / (2 * a)])
    got = sorted(o.points[0, 0] for o in orbits)
    pos_err = max(abs(g - e) for g, e in zip(got, expect)) if len(got) == 2 else math.inf
    classified = periodic_orbits(henon, 1, "newton")
    mult_err = 0.0
    for o in classified:
        roots = np.roots([1.0, 2 * a * o.points[0, 0], -b])
        mult_err = max(mult_err, abs(abs(o.multipliers[-1]) / max(abs(roots)) - 1))
    saddles = all(o.saddle for o in classified) and len(classified) == 2
    ok = len(orbits) == 2 and pos_err <= 1e-10 and saddles and mult_err <= 1e-8
    assert record(9, ok, f"fixed-point error {pos_err:.1e} (1e-10), both saddle: {saddles}, "
                         f"unstable multiplier rel error {mult_err:.1e} (1e-8)")


def _filtration_monotone():
    rng = np.random.default_rng(10)
    for name, ns in (("henon", range(1, 7)), ("nonlinear_horseshoe", range(1, 8))):
        sys = make_system(name)
        for n in ns:
            orbits = periodic_orbits(sys, n)
            for _ in range(10):
                a, c = np.sort(rng.uniform(0.01, 1.5, 2)), np.sort(rng.uniform(0.01, 1.0, 2))
                big = accepted(sys, orbits, SaddleFilter(a[1], c[1]))
                small = accepted(sys, orbits, SaddleFilter(a[0], c[0]))
                if np.any(big & ~small):
                    return False
    return True


def _beta0_identity():
    for name, w in (("cat_map", (1, 12)), ("nonlinear_horseshoe", (1, 9))):
        sys = make_system(name)
        b0 = beta0(sys)
        for alpha in (0.2, 0.6):
            x = pressure_series(sys, zero(), SaddleFilter(alpha, 0.5), w)
            y = pressure_series(sys, zero(), SaddleFilter(alpha, 0.5, b0), w)
            if [r.Q for r in x.rows] != [r.Q for r in y.rows]:
                return False
    return True


def _saddle_pressure_below_full():
    cases = [("cat_map", zero(), bowen_fixpoint_pressure(make_system("cat_map"), zero(), (6, 12)).value)]
    for name in ("linear_horseshoe", "nonlinear_horseshoe"):
        vals = [0.4, -0.2]
        cases.append((name, symbolic(vals), transfer_pressure(WeightedShift.from_potential(np.ones((2, 2)), vals))))
    for name, phi, ptop in cases:
        sys = make_system(name)
        for alpha in (0.3, 0.8):
            for beta in (1.0, 1.5, beta0(sys)):
                for c in (1.0, 0.1):
                    if beta > alpha and p_sp_banded(sys, phi, alpha, beta, c, (5, 10)).value > ptop + 0.05:
                        return False
    return True


def _c_monotone():
    for name, w in (("nonlinear_horseshoe", (4, 9)), ("henon", (3, 6))):
        est = p_sp_limit(make_system(name), zero(), 0.2, [1.0, 0.5, 0.1, 0.01], w)
        if not est.diagnostics["monotone"]:
            return False
    return True


def _birkhoff_additive():
    cat = make_system("cat_map")
    rng = np.random.default_rng(3)
    phi = cosine(1, 0.5)
    for _ in range(50):
        p = rng.random(2)
        m, n = rng.integers(1, 31, 2)
        lhs = birkhoff_sum(cat, phi, p, m + n)
        rhs = birkhoff_sum(cat, phi, p, m) + birkhoff_sum(cat, phi, iterate(cat, p, m), n)
        if abs(lhs - rhs) > 1e-10:
            return False
    return True


def _chain_rule():
    rng = np.random.default_rng(5)
    henon = make_system("henon")
    P = np.column_stack([rng.uniform(-0.5, 0.5, 20), np.zeros(20)])
    for _ in range(100):
        P = henon.forward(P)
    for sys, pts in ((make_system("cat_map"), rng.random((20, 2))), (henon, P)):
        for p in pts:
            for m, n in ((3, 5), (10, 10), (1, 19)):
                full = tangent_cocycle(sys, p, m + n)
                comp = tangent_cocycle(sys, iterate(sys, p, m), n) @ tangent_cocycle(sys, p, m)
                if np.linalg.norm(full - comp) > 1e-9 * np.linalg.norm(full):
                    return False
    return True


def _survival_monotone():
    for name in ("linear_horseshoe", "nonlinear_horseshoe", "henon"):
        sys = make_system(name)
        est = escape_rate(sys, sys.reference, 12, 5 * 10**4, seed=8)
        if np.any(np.diff(est.survivors) > 0):
            return False
    return True


def _byte_identical(tmp_path):
    cfg = tmp_path / "det.toml"
    cfg.write_text('seed = 11\n[system]\nname = "linear_horseshoe"\n[escape]\nsamples = 20000\nn_max = 10\n'
                   '[boxdim]\ncount = 10000\ndepth = 8\n')
    digests = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        if main(["bound", "--config", str(cfg), "--out", str(out)]) != 0:
            return False
        digests.append({p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(out.iterdir())})
    return digests[0] == digests[1]


def test_criterion_10_property_suites(tmp_path):
    results = {
        "filtration monotonicity": _filtration_monotone(),
        "banded beta0 identity": _beta0_identity(),
        "saddle pressure <= full pressure (0.05 slack)": _saddle_pressure_below_full(),
        "c-monotonicity": _c_monotone(),
        "Birkhoff additivity": _birkhoff_additive(),
        "chain rule": _chain_rule(),
        "survival monotonicity": _survival_monotone(),
        "seed determinism (byte-identical)": _byte_identical(tmp_path),
    }
    ok = all(results.values())
    detail = ", ".join(f"{k}: {'ok' if v else 'FAILED'}" for k, v in results.items())
    assert record(10, ok, detail)


if __name__ == "__main__":
    import sys
    import pytest
    sys.exit(pytest.main([__file__, "-q"]))
