import math

import numpy as np
import pytest
from scipy import stats

from idlalab.walk import (PoissonClock, WalkRng, direction_bits, neighbor_offsets, sample_poisson_count,
                          step)


def test_same_seed_same_stream_is_reproducible():
    a, b = WalkRng(7, 3), WalkRng(7, 3)
    assert np.array_equal(a.words(1000), b.words(1000))
    assert [a.direction(3) for _ in range(200)] == [b.direction(3) for _ in range(200)]


def test_distinct_streams_differ():
    a, b = WalkRng(7, 3), WalkRng(7, 4)
    assert not np.array_equal(a.words(64), b.words(64))


def test_negative_seed_rejected():
    with pytest.raises(ValueError):
        WalkRng(-1)


def test_neighbor_table():
    offs = neighbor_offsets(3)
    assert len(offs) == 6
    assert set(map(tuple, offs.tolist())) == {(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)}
    assert direction_bits(2) == 2 and direction_bits(3) == 3


def test_step_d2_uniform_over_neighbours():
    rng = WalkRng(11, 0)
    n = 10**6
    counts = {}
    for _ in range(n):
        y = step(rng, (0, 0))
        counts[y] = counts.get(y, 0) + 1
    assert set(counts) == {(1, 0), (-1, 0), (0, 1), (0, -1)}
    sigma = math.sqrt(n * 0.25 * 0.75)
    for c in counts.values():
        assert abs(c - n / 4) <= 3 * sigma
    assert stats.chisquare(list(counts.values())).pvalue > 0.001


def test_direction_d3_chi_square():
    rng = WalkRng(12, 0)
    draws = np.array([rng.direction(3) for _ in range(10**6)])
    counts = np.bincount(draws, minlength=6)
    assert len(counts) == 6
    assert stats.chisquare(counts).pvalue > 0.001


def test_poisson_zero():
    assert sample_poisson_count(0.0, WalkRng(1)) == 0
    assert len(PoissonClock.sample(0.0, WalkRng(1)).times) == 0


def test_poisson_moments():
    rng = WalkRng(5, 1)
    t, n = 1e4, 1000
    T = np.array([sample_poisson_count(t, rng) for _ in range(n)], dtype=float)
    assert abs(T.mean() - t) <= 4 * math.sqrt(t / n)
    assert 0.9 <= T.std(ddof=1) / math.sqrt(t) <= 1.1


def test_poisson_clock_counts_and_gaps():
    counts = []
    gaps = []
    for s in range(400):
        clock = PoissonClock.sample(50.0, WalkRng(9, s))
        assert np.all(np.diff(clock.times) > 0)
        assert clock.times[-1] <= 50.0 if len(clock.times) else True
        counts.append(clock.count(50.0))
        gaps.append(np.diff(np.concatenate([[0.0], clock.times])))
    counts = np.array(counts, dtype=float)
    assert abs(counts.mean() - 50) <= 4 * math.sqrt(50 / 400)
    g = np.concatenate(gaps)
    assert stats.kstest(g, "expon").pvalue > 0.001
