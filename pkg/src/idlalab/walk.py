"""Seeded random streams, lattice steps and the Poisson clock.

Every trial owns one :class:`WalkRng`.  Streams are derived from
``(seed, stream)`` through :class:`numpy.random.SeedSequence` and drive a
counter-based Philox generator, so a trial can be replayed bit for bit on
any platform and distinct streams never share state.

Walk directions are decoded from raw 64-bit words: each direction takes
``ceil(log2(2d))`` bits, and chunks that land outside ``[0, 2d)`` are
rejected (only when ``2d`` is not a power of two).
"""
from __future__ import annotations

import math

import numpy as np

#: hard per-particle step cap; exceeding it is treated as a hang
STEP_CAP = 10**10


class StepCapExceeded(RuntimeError):
    pass


def direction_bits(d: int) -> int:
    return max(1, math.ceil(math.log2(2 * d)))


def neighbor_offsets(d: int) -> np.ndarray:
    """Direction table: row ``2i`` is ``+e_i``, row ``2i+1`` is ``-e_i``."""
    offs = np.zeros((2 * d, d), dtype=np.int64)
    for i in range(d):
        offs[2 * i, i] = 1
        offs[2 * i + 1, i] = -1
    return offs


class WalkRng:
    """Random source for one trial.

    ``WalkRng(seed, stream)`` is a pure function of its two integers; the
    counter advances as words are consumed.
    """

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise ValueError("seed and stream must be nonnegative")
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        self.generator = np.random.Generator(np.random.Philox(ss))
        self._pending: list[int] = []

    def words(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit words of the stream."""
        return self.generator.bit_generator.random_raw(n).astype(np.uint64, copy=False)

    def direction(self, d: int) -> int:
        """One uniform direction index in ``[0, 2d)``."""
        nb = direction_bits(d)
        mask = (1 << nb) - 1
        while True:
            if not self._pending:
                w = int(self.words(1)[0])
                self._pending = [(w >> (nb * j)) & mask for j in range(64 // nb)][::-1]
            c = self._pending.pop()
            if c < 2 * d:
                return c

    def exponentials(self, n: int) -> np.ndarray:
        return self.generator.standard_exponential(n)

    def poisson(self, lam: float) -> int:
        return int(self.generator.poisson(lam))


def step(rng: WalkRng, x) -> tuple[int, ...]:
    """Move ``x`` to a uniformly chosen nearest neighbour."""
    x = tuple(int(v) for v in x)
    d = len(x)
    c = rng.direction(d)
    axis, sign = divmod(c, 2)
    y = list(x)
    y[axis] += -1 if sign else 1
    return tuple(y)


class PoissonClock:
    """Rate-one arrival times on ``[0, t_max]``.

    Arrivals are cumulative sums of independent standard exponentials, so
    ``count(t)`` is Poisson(t) for every ``t <= t_max`` simultaneously.
    """

    def __init__(self, times: np.ndarray, t_max: float):
        self.times = np.asarray(times, dtype=np.float64)
        self.t_max = float(t_max)

    @classmethod
    def sample(cls, t_max: float, rng: WalkRng) -> "PoissonClock":
        if t_max < 0:
            raise ValueError("t must be nonnegative")
        chunks = []
        total = 0.0
        block = max(16, int(t_max + 6 * math.sqrt(t_max) + 16))
        while total <= t_max:
            gaps = rng.exponentials(block)
            chunks.append(gaps)
            total += float(gaps.sum())
            block = max(16, block // 8)
        times = np.cumsum(np.concatenate(chunks))
        times = times[: np.searchsorted(times, t_max, side="right")]
        return cls(times, t_max)

    def count(self, t: float) -> int:
        return int(np.searchsorted(self.times, t, side="right"))


def sample_poisson_count(t: float, rng: WalkRng) -> int:
    """Draw T ~ Poisson(t)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0
    return rng.poisson(t)
