import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from saddlepress.core import tangent_cocycle
from saddlepress.orbits import (ClassificationRequired, PeriodicOrbit, SaddleFilter, accepted,
                                classify_orbit, empirical_constant, enumerate_periodic, orbit_distance,
                                periodic_orbits, splitting_angle)
from saddlepress.systems import make_system

LOG_LAM = math.log((3 + math.sqrt(5)) / 2)


def henon_fixed_points(a=1.4, b=0.3):
    r = math.sqrt((1 - b) ** 2 + 4 * a)
    return [((b - 1 + s * r) / (2 * a)) for s in (1, -1)]


def test_henon_fixed_points_newton(henon):
    orbits = enumerate_periodic(henon, 1, "newton")
    xs = sorted(o.points[0, 0] for o in orbits)
    expect = sorted(henon_fixed_points())
    assert len(orbits) == 2
    assert np.allclose(xs, expect, atol=1e-10, rtol=0)
    assert expect[1] == pytest.approx(0.631354, abs=1e-6) and expect[0] == pytest.approx(-1.131354, abs=1e-6)
    for o in orbits:
        assert o.points[0, 1] == pytest.approx(0.3 * o.points[0, 0], abs=1e-12)


def test_henon_multipliers_from_characteristic_polynomial(henon):
    orbits = periodic_orbits(henon, 1, "newton")
    for o in orbits:
        x = o.points[0, 0]
        roots = np.roots([1.0, 2 * 1.4 * x, -0.3])
        assert o.saddle
        assert np.allclose(sorted(o.multipliers.real, key=abs), sorted(roots, key=abs), rtol=1e-8, atol=0)


def test_cat_fixed_point_classification(cat):
    o = [o for o in periodic_orbits(cat, 1)][0]
    assert o.saddle
    assert np.allclose(o.exponents, [-LOG_LAM, LOG_LAM], atol=1e-12)


def test_sink_is_not_a_saddle(sink):
    orbits = periodic_orbits(sink, 1)
    sinks = [o for o in orbits if o.word == (2,)]
    assert len(sinks) == 1
    assert sinks[0].status == "nonsaddle" and np.all(sinks[0].exponents < 0)
    assert sum(o.saddle for o in orbits) == 2


def test_product_has_no_isolated_orbits(product):
    assert len(periodic_orbits(product, 3)) == 0


@pytest.mark.parametrize("name,ns", [("cat_map", range(1, 11)), ("nonlinear_horseshoe", range(1, 9)),
                                     ("henon", range(1, 7))])
def test_orbit_invariants(name, ns):
    sys = make_system(name)
    for n in ns:
        for o in periodic_orbits(sys, n):
            assert o.residual <= 1e-8
            assert np.all(np.diff(o.exponents) >= 0)
            assert o.saddle == (o.exponents[0] < 0 < o.exponents[-1])
            if o.saddle:
                assert o.unstable.shape[2] + o.stable.shape[2] == sys.dim
            assert tuple(o.points[0]) == min(tuple(p) for p in o.points)


@pytest.mark.parametrize("name,ns", [("cat_map", range(1, 9)), ("nonlinear_horseshoe", range(1, 7)),
                                     ("henon", range(1, 7))])
def test_spectrum_similarity_along_orbit(name, ns):
    sys = make_system(name)
    for n in ns:
        for o in periodic_orbits(sys, n):
            spectra = []
            for p in o.points:
                M = tangent_cocycle(sys, p, o.minimal_period)
                v = np.linalg.eigvals(M)
                spectra.append(v[np.argsort(np.abs(v))])
            spectra = np.array(spectra)
            scale = np.max(np.abs(spectra))
            assert np.max(np.abs(spectra - spectra[0])) <= 1e-7 * scale


def test_symbolic_and_newton_agree_on_nonlinear_horseshoe(nonlinear, clouds):
    seeds = clouds["nonlinear_horseshoe"]
    for n in range(1, 9):
        sym = enumerate_periodic(nonlinear, n, "symbolic")
        new = enumerate_periodic(nonlinear, n, "newton", seeds=seeds)
        assert len(sym) == len(new), n
        for a, b in zip(sym, new):
            assert orbit_distance(nonlinear, a.points, b.points) <= 1e-8


def test_newton_dedups(henon):
    orbits = periodic_orbits(henon, 6)
    for i, a in enumerate(orbits):
        for b in orbits[i + 1:]:
            assert orbit_distance(henon, a.points, b.points) > 1e-8
    assert orbits.diagnostics["dropped"] + orbits.diagnostics["converged"] == orbits.diagnostics["seeds"]


def test_empirical_constant_examples(cat, linear):
    fixed = periodic_orbits(cat, 1)[0]
    assert empirical_constant(cat, fixed, 0.9) == 1.0
    assert empirical_constant(cat, fixed, 1.0) == 0.0
    for o in periodic_orbits(linear, 3):
        assert empirical_constant(linear, o, 1.0) == 1.0
        assert empirical_constant(linear, o, 1.4) == 0.0


def test_empirical_constant_argmin_and_cap():
    f = SaddleFilter(0.5)
    assert f.cap(4) == 3 * 4 + 80
    assert SaddleFilter(0.5, k_cap=10).cap(4) == 10
    sys = make_system("henon")
    o = [o for o in periodic_orbits(sys, 2) if o.minimal_period == 2][0]
    c, k = empirical_constant(sys, o, 0.1, argmin=True)
    assert 0 < c <= 1 and 1 <= k <= SaddleFilter(0.1).cap(2)


def test_classification_required(cat):
    o = PeriodicOrbit(1, np.zeros((1, 2)), 0.0)
    with pytest.raises(ClassificationRequired):
        empirical_constant(cat, o, 0.5)
    with pytest.raises(ClassificationRequired):
        splitting_angle(o)
    classify_orbit(cat, o)
    assert o.saddle


def test_filter_validation():
    with pytest.raises(ValueError):
        SaddleFilter(0.0)
    with pytest.raises(ValueError):
        SaddleFilter(0.5, c=1.5)
    with pytest.raises(ValueError):
        SaddleFilter(0.5, beta=0.4)


def test_filter_examples(cat):
    for n in range(1, 8):
        orbits = periodic_orbits(cat, n)
        assert accepted(cat, orbits, SaddleFilter(0.9, 1.0)).all()
        assert not accepted(cat, orbits, SaddleFilter(2.0, 0.5)).any()
        assert not accepted(cat, orbits, SaddleFilter(0.9, 1.0, 0.95)).any()
        assert (accepted(cat, orbits, SaddleFilter(0.5, 0.25)) >= accepted(cat, orbits, SaddleFilter(0.9, 1.0))).all()


pairs = st.tuples(st.floats(0.01, 1.5), st.floats(0.01, 1.0), st.floats(0.01, 1.5), st.floats(0.01, 1.0))


@settings(max_examples=40, deadline=None)
@given(p=pairs, name=st.sampled_from(["henon", "nonlinear_horseshoe"]), n=st.integers(1, 6))
def test_filtration_monotonicity(p, name, n):
    a1, c1, a2, c2 = p
    hi, lo = SaddleFilter(max(a1, a2), max(c1, c2)), SaddleFilter(min(a1, a2), min(c1, c2))
    sys = make_system(name)
    orbits = periodic_orbits(sys, n)
    big, small = accepted(sys, orbits, hi), accepted(sys, orbits, lo)
    assert np.all(~big | small)


def test_splitting_angle_floor(nonlinear):
    filt = SaddleFilter(0.5, 0.1)

    def min_angle(n):
        orbits = periodic_orbits(nonlinear, n)
        acc = [o for o, m in zip(orbits, accepted(nonlinear, orbits, filt)) if m]
        assert acc
        return min(splitting_angle(o) for o in acc)

    a4, a10 = min_angle(4), min_angle(10)
    assert a4 > 0 and a10 >= 0.9 * a4


def test_cat_splitting_is_orthogonal(cat):
    # A is symmetric: eigenvectors are orthogonal
    for o in periodic_orbits(cat, 5):
        assert splitting_angle(o) == pytest.approx(math.pi / 2, abs=1e-8)
