import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idlalab.poly import ExactPolynomial, discrete_zk
from idlalab.sandpile import NotDiscreteHarmonic, exact_1d, harmonic_moment, relax, shape_report


def test_small_masses_do_not_topple():
    f = relax(0.5, 2)
    assert f.as_dict() == {(0, 0): 0.5}
    assert not np.any(f.odometer)
    f = relax(1.0, 2)
    assert f.as_dict() == {(0, 0): 1.0}
    assert not np.any(f.odometer)


def test_closed_form_1d_t3():
    w, u = exact_1d(3)
    assert w == {-1: 1.0, 0: 1.0, 1: 1.0}
    assert u == {-1: 0.0, 0: 1.0, 1: 0.0}


@pytest.mark.parametrize("t", [3, 5, 11, 21, 41])
def test_relax_matches_closed_form_1d(t):
    f = relax(t, 1)
    w, u = exact_1d(t)
    got = {int(x[0]): (m, o) for x, m, o in zip(f.sites, f.mass, f.odometer)}
    for x, m in w.items():
        assert got[x][0] == pytest.approx(m, abs=1e-9)
        assert got[x][1] == pytest.approx(u[x], abs=1e-9)
    for x, (m, _) in got.items():
        if x not in w:
            assert m == pytest.approx(0.0, abs=1e-9)


def test_closed_form_rejects_even():
    with pytest.raises(ValueError):
        exact_1d(4)


def test_relax_argument_errors():
    with pytest.raises(ValueError):
        relax(-1.0)
    with pytest.raises(ValueError):
        relax(10.0, tol=0)


@given(st.floats(0, 400), st.integers(1, 3))
@settings(max_examples=25, deadline=None)
def test_invariants(t, d):
    f = relax(t, d)
    assert abs(f.total_mass() - t) <= 1e-10 * max(len(f.sites), 1)
    assert f.mass.min(initial=0.0) >= 0 and f.mass.max(initial=0.0) <= 1
    assert f.odometer.min(initial=0.0) >= 0
    toppled = f.odometer > 0
    assert np.all(np.abs(f.mass[toppled] - 1) <= 1e-12)


@pytest.mark.parametrize("t,d", [(500.0, 2), (1234.5, 2), (300.0, 3)])
def test_lattice_symmetry(t, d):
    f = relax(t, d)
    field = f.as_dict()
    for perm in itertools.permutations(range(d)):
        for signs in itertools.product((1, -1), repeat=d):
            for x, w in field.items():
                y = tuple(signs[i] * x[perm[i]] for i in range(d))
                assert abs(field.get(y, 0.0) - w) <= 1e-12


def test_monotone_in_t():
    ts = [50.0, 120.0, 300.0, 301.0, 700.0]
    prev = None
    for t in ts:
        cur = relax(t, 2).as_dict()
        if prev is not None:
            for x, w in prev.items():
                assert cur.get(x, 0.0) >= w - 1e-12
        prev = cur


def test_shape_report_small():
    assert shape_report(relax(1.0, 2)) == (1.0, 1.0, 0.0)
    assert shape_report(relax(0.5, 2)) == (0.0, 1.0, 1.0)


def test_shape_report_radius_tracks_volume():
    t = 2000.0
    inner, outer, width = shape_report(relax(t, 2))
    r = np.sqrt(t / np.pi)
    assert inner <= r + 1 and outer >= r - 1
    assert width <= 4


def test_width_insensitive_to_tol():
    loose = shape_report(relax(1500.0, 2, tol=1e-6, polish=False))[2]
    tight = shape_report(relax(1500.0, 2, tol=1e-12))[2]
    assert tight <= loose + 1


def test_harmonic_moment_tiny_mass():
    f = relax(0.7, 2)
    for k in range(1, 5):
        val, _ = harmonic_moment(f, discrete_zk(k))
        assert val == 0


def test_harmonic_moment_symmetric_cancellation():
    f = relax(1000.0, 2, tol=1e-12)
    val, bound = harmonic_moment(f, discrete_zk(1))
    assert abs(val) <= bound
    assert abs(val) < 1e-9
    val, bound = harmonic_moment(f, discrete_zk(4))
    assert abs(val) <= bound


def test_harmonic_moment_errors():
    f = relax(50.0, 2)
    X = ExactPolynomial.variable(0, 2)
    with pytest.raises(NotDiscreteHarmonic):
        harmonic_moment(f, X * X)
    with pytest.raises(ValueError):
        harmonic_moment(f, ExactPolynomial.constant(1, 2))
    with pytest.raises(TypeError):
        harmonic_moment(f, lambda x: x)


def test_harmonic_moment_real_polynomial_3d():
    f = relax(400.0, 3)
    X, Y, Z = (ExactPolynomial.variable(i, 3) for i in range(3))
    val, bound = harmonic_moment(f, X * Y + Z)
    assert abs(val) <= bound
