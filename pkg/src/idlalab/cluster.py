"""Internal DLA growth in discrete or continuous (Poisson) time.

Each particle starts a simple random walk at the origin and settles on the
first vacant site it visits.  A :class:`ClusterHistory` records the full
absorption order, so the cluster at any earlier time is a prefix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from . import _kernels as K
from .walk import STEP_CAP, PoissonClock, StepCapExceeded, WalkRng, direction_bits

DISCRETE = "discrete"
POISSON = "poisson"


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def radius_for_volume(t: float, d: int = 2) -> float:
    """Radius ``r`` of the origin-centred ball of volume ``t``."""
    return (t / unit_ball_volume(d)) ** (1.0 / d)


def lattice_ball(r: float, d: int = 2) -> np.ndarray:
    """Sites ``x`` of Z^d with ``|x| <= r`` (the closed lattice ball)."""
    R = int(math.floor(r))
    axes = np.arange(-R, R + 1)
    grid = np.stack(np.meshgrid(*([axes] * d), indexing="ij"), axis=-1).reshape(-1, d)
    keep = (grid.astype(np.float64) ** 2).sum(axis=1) <= r * r
    return grid[keep]


@dataclass(frozen=True, eq=False)
class ClusterHistory:
    """Absorbed sites in order, plus Poisson arrival times in continuous time.

    ``sites[s-1]`` is the site settled by particle ``s``.  In poisson mode
    ``arrival_times[s-1]`` is the release time of particle ``s``; ``t_max``
    is the horizon the clock was run to (in discrete mode, the particle
    count).
    """

    d: int
    sites: np.ndarray
    mode: str
    t_max: float
    arrival_times: Optional[np.ndarray] = None
    seed: int = 0
    stream: int = 0
    path_qv: Optional[np.ndarray] = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.sites)

    @cached_property
    def index(self) -> dict[tuple[int, ...], int]:
        """site -> 1-based absorption index"""
        return {tuple(int(v) for v in x): s + 1 for s, x in enumerate(self.sites)}

    def index_of(self, x) -> int:
        """F_0(x), or 0 if ``x`` was never absorbed."""
        return self.index.get(tuple(int(v) for v in x), 0)

    def count_at(self, t: float) -> int:
        """#A_t in discrete mode, #A_{T(t)} in poisson mode."""
        if self.mode == POISSON:
            if t > self.t_max * (1 + 1e-12):
                raise ValueError(f"history only covers t <= {self.t_max}, asked for {t}")
            return int(np.searchsorted(self.arrival_times, t, side="right"))
        if t > len(self.sites):
            raise ValueError(f"history has {len(self.sites)} particles, asked for {t}")
        return int(math.floor(t))

    def sites_at(self, t: float) -> np.ndarray:
        return self.sites[: self.count_at(t)]

    def absorption_times(self) -> np.ndarray:
        """F(x) per site in absorption order (F_0 in discrete mode)."""
        if self.mode == POISSON:
            return self.arrival_times
        return np.arange(1, len(self.sites) + 1, dtype=np.float64)

    def radius(self, t: Optional[float] = None) -> float:
        return radius_for_volume(self.t_max if t is None else t, self.d)


def _flat(coords: np.ndarray, L: int, W: int) -> np.ndarray:
    d = coords.shape[1]
    strides = W ** np.arange(d, dtype=np.int64)
    return (coords.astype(np.int64) + L) @ strides


def _unflat(flat: np.ndarray, L: int, W: int, d: int) -> np.ndarray:
    out = np.empty((len(flat), d), dtype=np.int64)
    rem = np.asarray(flat, dtype=np.int64).copy()
    for i in range(d):
        out[:, i] = rem % W - L
        rem //= W
    return out


class _Board:
    """Dense occupancy array of side ``2L+1`` centred on the origin."""

    def __init__(self, d: int, L: int, path_field):
        self.d, self.L, self.W = d, L, 2 * L + 1
        self.grid = np.zeros(self.W**d, dtype=np.int32)
        strides = self.W ** np.arange(d, dtype=np.int64)
        self.offsets = np.empty(2 * d, dtype=np.int64)
        self.offsets[0::2] = strides
        self.offsets[1::2] = -strides
        self.origin = int(L * strides.sum())
        if path_field is None:
            self.field = np.zeros(1)
        else:
            coords = _unflat(np.arange(self.W**d), L, self.W, d)
            self.field = np.ascontiguousarray(path_field(coords), dtype=np.float64)


def _initial_half_width(n: int, d: int) -> int:
    return int(math.ceil(1.3 * radius_for_volume(max(n, 1), d))) + 8


def grow(d: int = 2, n: Optional[int] = None, t: Optional[float] = None,
         seed: int = 0, stream: int = 0,
         path_field: Optional[Callable[[np.ndarray], np.ndarray]] = None,
         step_cap: int = STEP_CAP) -> ClusterHistory:
    """Grow one internal DLA cluster.

    Pass ``n`` for discrete time (exactly ``n`` particles) or ``t`` for
    continuous time (Poisson(t) particles released at rate-one arrival
    times).  ``path_field`` maps an ``(M, d)`` array of sites to values; if
    given, the sum of squared changes of that function along each
    particle's walk is returned in ``history.path_qv``.
    """
    if (n is None) == (t is None):
        raise ValueError("give exactly one of n (discrete) or t (poisson)")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    rng = WalkRng(seed, stream)
    if n is not None:
        if n < 0:
            raise ValueError("n must be nonnegative")
        mode, n_target, times, t_max = DISCRETE, int(n), None, float(n)
    else:
        if t < 0:
            raise ValueError("t must be nonnegative")
        clock = PoissonClock.sample(t, rng)
        mode, n_target, times, t_max = POISSON, len(clock.times), clock.times, float(t)

    board = _Board(d, _initial_half_width(n_target, d), path_field)
    sites = np.zeros(max(n_target, 1), dtype=np.int64)
    qv = np.zeros(max(n_target, 1))
    state = np.zeros(6, dtype=np.int64)
    curbuf = np.zeros(1, dtype=np.uint64)
    nbits = direction_bits(d)
    r = radius_for_volume(max(n_target, 1), d)
    block = int(min(1 << 20, max(256, n_target * r * r / (d * (64 // nbits)) // 4)))
    words = np.zeros(0, dtype=np.uint64)
    while True:
        status = K.grow_chunk(board.grid, board.offsets, board.origin, board.W, d, nbits,
                              2 * d, words, state, curbuf, sites, n_target, step_cap,
                              board.field, qv)
        if status == K.DONE:
            break
        if status == K.NEED_WORDS:
            words = rng.words(block)
            state[K.S_WORD] = 0
        elif status == K.NEAR_EDGE:
            board = _regrow(board, sites, state, path_field)
        else:
            raise StepCapExceeded(
                f"particle {state[K.S_COUNT] + 1} exceeded {step_cap} steps")
    coords = _unflat(sites[:n_target], board.L, board.W, d)
    return ClusterHistory(d=d, sites=coords, mode=mode, t_max=t_max, arrival_times=times,
                          seed=seed, stream=stream,
                          path_qv=qv[:n_target].copy() if path_field is not None else None)


def _regrow(board: _Board, sites, state, path_field) -> _Board:
    n = int(state[K.S_COUNT])
    coords = _unflat(sites[:n], board.L, board.W, board.d)
    new = _Board(board.d, 2 * board.L, path_field)
    flat = _flat(coords, new.L, new.W)
    sites[:n] = flat
    new.grid[flat] = np.arange(1, n + 1, dtype=np.int32)
    if state[K.S_WALKING]:
        pos = _unflat(np.array([state[K.S_POS]]), board.L, board.W, board.d)
        state[K.S_POS] = _flat(pos, new.L, new.W)[0]
    return new


@dataclass(frozen=True)
class LatenessField:
    """Lateness ``sqrt(F(x)/pi) - |x|`` at every absorbed site (d = 2)."""

    sites: np.ndarray
    F: np.ndarray
    L: np.ndarray
    mode: str

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {(int(x), int(y)): float(v) for (x, y), v in zip(self.sites, self.L)}


def lateness(history: ClusterHistory) -> LatenessField:
    """L (poisson mode) or L_0 (discrete mode) for every absorbed site."""
    if history.d != 2:
        raise ValueError("lateness is only defined for d = 2")
    F = history.absorption_times()
    norms = np.hypot(history.sites[:, 0], history.sites[:, 1])
    return LatenessField(sites=history.sites, F=F, L=np.sqrt(F / math.pi) - norms,
                         mode=history.mode)


def boundary_envelope(history: ClusterHistory, t: Optional[float] = None, C: float = 10.0):
    """Outer and inner violations of the ``C log t`` shell around radius r(t).

    Returns ``(outer, inner)``: the number of occupied sites farther than
    ``r + C log t`` from the origin, and the number of vacant sites closer
    than ``r - C log t``.
    """
    t = history.t_max if t is None else t
    r = radius_for_volume(t, history.d)
    band = C * math.log(max(t, 2.0))
    occ = history.sites_at(t)
    norms = np.sqrt((occ.astype(np.float64) ** 2).sum(axis=1))
    outer = int((norms > r + band).sum())
    inner = 0
    if r - band > 0:
        ball = lattice_ball(r - band, history.d)
        have = set(map(tuple, occ.tolist()))
        inner = sum(1 for x in map(tuple, ball.tolist()) if x not in have)
    return outer, inner


@dataclass(frozen=True)
class SignedDiscrepancy:
    """Weights ``1_A(x) - ref(x)`` on Z^d at time ``t`` with scale ``r``."""

    d: int
    t: float
    r: float
    sites: np.ndarray
    weights: np.ndarray

    def pair(self, phi: Callable[[np.ndarray], np.ndarray]) -> float:
        """``r^{-d/2} sum_x w(x) phi(x/r)``"""
        if len(self.sites) == 0:
            return 0.0
        vals = np.asarray(phi(self.sites / self.r), dtype=np.float64)
        return math.fsum(self.weights * vals) * self.r ** (-self.d / 2)

    def split_counts(self) -> tuple[int, int]:
        """(#sites with positive weight, #sites with negative weight)"""
        return int((self.weights > 0).sum()), int((self.weights < 0).sum())


def signed_discrepancy(history: ClusterHistory, t: float, reference="ball") -> SignedDiscrepancy:
    """Discrepancy between the cluster at time ``t`` and a reference shape.

    ``reference`` is ``"ball"`` (lattice ball of volume ``t``) or a
    :class:`~idlalab.sandpile.SandpileField` relaxed from mass ``t``.
    """
    d = history.d
    r = radius_for_volume(t, d)
    occ = history.sites_at(t)
    acc: dict[tuple[int, ...], float] = {}
    for x in map(tuple, occ.tolist()):
        acc[x] = 1.0
    if isinstance(reference, str):
        if reference != "ball":
            raise ValueError(f"unknown reference {reference!r}")
        for x in map(tuple, lattice_ball(r, d).tolist()):
            acc[x] = acc.get(x, 0.0) - 1.0
    else:
        if reference.d != d:
            raise ValueError("sandpile dimension does not match the cluster")
        if not math.isclose(reference.t, t, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError(f"sandpile was relaxed from mass {reference.t}, not {t}")
        for x, w in zip(map(tuple, reference.sites.tolist()), reference.mass):
            acc[x] = acc.get(x, 0.0) - float(w)
    keys = [k for k, v in acc.items() if v != 0.0]
    sites = np.array(keys, dtype=np.int64).reshape(-1, d)
    weights = np.array([acc[k] for k in keys], dtype=np.float64)
    return SignedDiscrepancy(d=d, t=t, r=r, sites=sites, weights=weights)
