import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from idlalab.cluster import (DISCRETE, POISSON, boundary_envelope, grow, lateness, lattice_ball,
                             radius_for_volume, signed_discrepancy)
from idlalab.sandpile import relax
from idlalab.walk import StepCapExceeded

NEIGHBOURS = [(1, 0), (-1, 0), (0, 1), (0, -1)]


def exit_distribution(cluster, start=(0, 0)):
    """Hitting distribution on the outer boundary of ``cluster`` for a walk from ``start``.

    Solves h_b(x) = 1/4 sum_y [y == b] + 1/4 sum_{y in cluster} h_b(y) for every
    boundary site b.
    """
    inside = list(cluster)
    idx = {x: i for i, x in enumerate(inside)}
    boundary = sorted({(x[0] + dx, x[1] + dy) for x in inside for dx, dy in NEIGHBOURS} - set(inside))
    n = len(inside)
    A = np.eye(n)
    B = np.zeros((n, len(boundary)))
    bidx = {b: j for j, b in enumerate(boundary)}
    for x in inside:
        for dx, dy in NEIGHBOURS:
            y = (x[0] + dx, x[1] + dy)
            if y in idx:
                A[idx[x], idx[y]] -= 0.25
            else:
                B[idx[x], bidx[y]] += 0.25
    H = np.linalg.solve(A, B)
    return dict(zip(boundary, H[idx[start]]))


def test_exit_oracle_sums_to_one():
    p = exit_distribution([(0, 0), (1, 0)])
    assert sum(p.values()) == pytest.approx(1.0, abs=1e-14)
    assert p[(-1, 0)] == pytest.approx(p[(0, 1)])


@pytest.fixture(scope="module")
def three_site_ensemble():
    return [grow(2, n=3, seed=99, stream=s).sites for s in range(100_000)]


def test_discrete_one_is_origin():
    h = grow(2, n=1, seed=1)
    assert h.sites.tolist() == [[0, 0]]
    assert h.index_of((0, 0)) == 1
    assert h.index_of((5, 5)) == 0


def test_second_site_uniform(three_site_ensemble):
    counts = {}
    for s in three_site_ensemble:
        key = tuple(s[1])
        counts[key] = counts.get(key, 0) + 1
    n = len(three_site_ensemble)
    assert set(counts) == set(NEIGHBOURS)
    sigma = math.sqrt(n * 0.25 * 0.75)
    for c in counts.values():
        assert abs(c - n / 4) <= 3 * sigma


def test_third_site_matches_exit_oracle(three_site_ensemble):
    """Rotate each sample so the second site is e1, then compare with the linear solve."""
    p = exit_distribution([(0, 0), (1, 0)])
    rot = {(1, 0): lambda x, y: (x, y), (0, 1): lambda x, y: (y, -x),
           (-1, 0): lambda x, y: (-x, -y), (0, -1): lambda x, y: (-y, x)}
    counts = {b: 0 for b in p}
    for s in three_site_ensemble:
        f = rot[tuple(s[1])]
        counts[f(*s[2])] += 1
    n = len(three_site_ensemble)
    obs = np.array([counts[b] for b in p])
    exp = np.array([p[b] * n for b in p])
    assert stats.chisquare(obs, exp).pvalue > 0.001


@given(st.integers(1, 400), st.integers(0, 2**32), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_prefixes_are_connected_and_distinct(n, seed, stream):
    h = grow(2, n=n, seed=seed, stream=stream)
    assert len(h.sites) == n
    seen = {(0, 0)}
    assert tuple(h.sites[0]) == (0, 0)
    for x in map(tuple, h.sites[1:].tolist()):
        assert x not in seen
        assert any((x[0] + dx, x[1] + dy) in seen for dx, dy in NEIGHBOURS)
        seen.add(x)


@pytest.mark.parametrize("d", [1, 3, 4])
def test_other_dimensions_connected(d):
    h = grow(d, n=300, seed=3)
    seen = {tuple([0] * d)}
    for x in map(tuple, h.sites[1:].tolist()):
        assert any(sum(abs(a - b) for a, b in zip(x, y)) == 1 for y in seen)
        seen.add(x)
    if d == 1:
        assert sorted(v[0] for v in seen) == list(range(min(v[0] for v in seen), max(v[0] for v in seen) + 1))


def test_reproducible_and_stream_dependent():
    a = grow(2, t=500.0, seed=4, stream=2)
    b = grow(2, t=500.0, seed=4, stream=2)
    c = grow(2, t=500.0, seed=4, stream=3)
    assert a.sites.tobytes() == b.sites.tobytes()
    assert a.arrival_times.tobytes() == b.arrival_times.tobytes()
    assert a.sites.tobytes() != c.sites.tobytes()


def test_poisson_counts():
    h = grow(2, t=300.0, seed=8, stream=1)
    assert h.mode == POISSON
    assert h.count_at(300.0) == len(h.sites)
    assert h.count_at(0.0) == 0
    mid = h.arrival_times[10]
    assert h.count_at(mid) == 11
    with pytest.raises(ValueError):
        h.count_at(301.0)


def test_discrete_counts():
    h = grow(2, n=50, seed=8)
    assert h.mode == DISCRETE
    assert h.count_at(20) == 20
    with pytest.raises(ValueError):
        h.count_at(51)


def test_grow_argument_errors():
    with pytest.raises(ValueError):
        grow(2)
    with pytest.raises(ValueError):
        grow(2, n=3, t=3.0)
    with pytest.raises(ValueError):
        grow(2, n=-1)


def test_step_cap():
    with pytest.raises(StepCapExceeded):
        grow(2, n=2000, seed=1, step_cap=5)


def test_grows_past_initial_board():
    """Clusters in d = 1 are long and thin, forcing the board to be enlarged."""
    h = grow(1, n=3000, seed=2)
    assert len({x[0] for x in h.sites.tolist()}) == 3000


def test_lateness_at_origin():
    f = lateness(grow(2, n=20, seed=1))
    assert f.as_dict()[(0, 0)] == pytest.approx(math.sqrt(1 / math.pi))
    assert f.as_dict()[(0, 0)] == pytest.approx(0.564190, abs=1e-6)


def test_lateness_monotone_on_a_circle():
    f = lateness(grow(2, t=2000.0, seed=5))
    norms = np.hypot(f.sites[:, 0], f.sites[:, 1])
    for r in np.unique(norms)[:40]:
        sel = norms == r
        order = np.argsort(f.F[sel])
        assert np.all(np.diff(f.L[sel][order]) >= 0)


def test_lateness_needs_d2():
    with pytest.raises(ValueError):
        lateness(grow(3, n=10))


def test_lateness_log_ratio_reported():
    ratios = []
    for t in (1e3, 1e4):
        f = lateness(grow(2, n=int(t), seed=6))
        ratios.append(np.abs(f.L).max() / math.log(radius_for_volume(t)))
    assert all(np.isfinite(ratios)) and max(ratios) < 10


def test_boundary_envelope():
    h = grow(2, n=10**4, seed=7)
    assert boundary_envelope(h, C=10.0) == (0, 0)


def test_lattice_ball_volume():
    r = radius_for_volume(10**4)
    assert abs(len(lattice_ball(r)) - 10**4) < 4 * 10**4 ** (1 / 3)
    assert lattice_ball(1.0).shape == (5, 2)


def test_discrepancy_with_ball():
    h = grow(2, t=800.0, seed=3)
    t = 800.0
    disc = signed_discrepancy(h, t)
    r = radius_for_volume(t)
    expected = r**-1 * (h.count_at(t) - len(lattice_ball(r)))
    assert disc.pair(lambda p: np.ones(len(p))) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_discrepancy_zero_when_cluster_is_ball():
    from idlalab.cluster import ClusterHistory

    t = 300.0
    ball = lattice_ball(radius_for_volume(t))
    h = ClusterHistory(d=2, sites=ball, mode=POISSON, t_max=t, arrival_times=np.linspace(0, t, len(ball)))
    disc = signed_discrepancy(h, t)
    assert disc.split_counts() == (0, 0)
    assert not np.any(disc.weights)


def test_discrepancy_with_sandpile():
    t = 600.0
    h = grow(2, t=t, seed=2)
    sp = relax(t, 2)
    disc = signed_discrepancy(h, t, sp)
    total = math.fsum(disc.weights)
    assert total == pytest.approx(h.count_at(t) - sp.total_mass(), abs=1e-8)
    with pytest.raises(ValueError):
        signed_discrepancy(h, 500.0, sp)
