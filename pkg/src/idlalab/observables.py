"""Statistics of IDLA clusters whose limits are Gaussian.

* ``phi_A``: centred sums of a discrete harmonic polynomial over the cluster.
* ``complex_moments``: ``M_k = r^{-(k+1)} sum z^k``.
* ``lateness_statistic``: ``X_R = sum_x L_0(x) phi(x/R)/|x|^2`` for an
  annular test function ``phi``.
* ``v_quadrature``: the limiting variance of ``X_R``.
* ``quadratic_variation_check``: summed squared walk increments of ``psi``
  against ``m^{-d} sum psi_(m)^2``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .cluster import ClusterHistory, LatenessField, grow, lattice_ball
from .poly import MeshPolynomial


class InsufficientHistory(ValueError):
    pass


class NonFiniteValue(ValueError):
    pass


# -- records ---------------------------------------------------------------

@dataclass
class ObservableRecord:
    """Named statistic values from one trial.

    ``values`` maps a name to either a number or a ``{k: value}`` dict for
    indexed families such as the moments.
    """

    seed: int
    stream: int
    t: float
    values: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, v in self.values.items():
            items = v.values() if isinstance(v, dict) else [v]
            for x in items:
                if not cmath.isfinite(complex(x)):
                    raise NonFiniteValue(f"{name} is not finite in stream {self.stream}")

    def rows(self):
        """``(seed, stream, t, name, k, re, im)`` tuples in a fixed order."""
        for name in sorted(self.values):
            v = self.values[name]
            items = sorted(v.items()) if isinstance(v, dict) else [("", v)]
            for k, x in items:
                x = complex(x)
                yield (self.seed, self.stream, self.t, name, k, x.real, x.imag)

    def get(self, name, k=None):
        v = self.values[name]
        return v[k] if k is not None else v


# -- Phi_A -----------------------------------------------------------------

def phi_A(history: ClusterHistory, psi: MeshPolynomial, m: int, t: float) -> float:
    """``m^{-d/2} (sum_{x in A} psi_(m)(x/m) - m^d t psi_(m)(0))``.

    ``A`` is the cluster after total time ``m^d t``; the subtracted term is
    the mean of the sum, so the value is centred for every ``psi``.
    """
    d = history.d
    if psi.m != m:
        raise ValueError(f"psi is built for mesh {psi.m}, not {m}")
    if psi.dim != d:
        raise ValueError("psi dimension does not match the cluster")
    T = m**d * t
    if T > history.t_max * (1 + 1e-12):
        raise InsufficientHistory(f"need the cluster at time {T}, history stops at {history.t_max}")
    sites = history.sites_at(T)
    total = math.fsum(psi.on_lattice(sites)) if len(sites) else 0.0
    return (total - T * psi.at_zero()) * m ** (-d / 2)


def phi_increments(history: ClusterHistory, psi: MeshPolynomial, m: int,
                   times: Sequence[float]) -> np.ndarray:
    """``phi_A`` at increasing ``times`` (for martingale checks)."""
    return np.array([phi_A(history, psi, m, t) for t in times])


# -- complex moments -------------------------------------------------------

def _exact_sum(vals: np.ndarray) -> int:
    """Exact integer sum of an int64 array (no overflow in the accumulator)."""
    if vals.dtype == object:
        return int(sum(vals))
    v = vals.astype(np.int64)
    lo = (v & 0xFFFFFFFF).sum(dtype=np.int64)
    hi = (v >> 32).sum(dtype=np.int64)
    return int(hi) * (1 << 32) + int(lo)


def gaussian_powers(x: np.ndarray, y: np.ndarray, kmax: int):
    """Exact ``(Re z^k, Im z^k)`` arrays for ``k = 0..kmax``.

    Uses int64 while ``|z|^k`` stays below 2^62 and Python integers
    beyond that.
    """
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    rmax2 = int((x * x + y * y).max(initial=0))
    re = np.ones_like(x)
    im = np.zeros_like(x)
    out = [(re, im)]
    big = False
    for k in range(1, kmax + 1):
        if not big and rmax2 ** k >= 1 << 124:  # |z|^k >= 2^62
            big = True
            re, im, x, y = (a.astype(object) for a in (re, im, x, y))
        re, im = re * x - im * y, re * y + im * x
        out.append((re, im))
    return out


def power_sums(sites: np.ndarray, kmax: int) -> list[tuple[int, int]]:
    """Exact ``sum z^k`` over ``sites`` as integer pairs, ``k = 0..kmax``."""
    sites = np.asarray(sites).reshape(-1, 2)
    return [(_exact_sum(re), _exact_sum(im))
            for re, im in gaussian_powers(sites[:, 0], sites[:, 1], kmax)]


def moments_of_sites(sites: np.ndarray, r: float, kmax: int) -> dict[int, complex]:
    """``M_k = r^{-(k+1)} sum z^k`` for ``k = 1..kmax``."""
    sums = power_sums(sites, kmax)
    return {k: complex(sums[k][0] / r ** (k + 1), sums[k][1] / r ** (k + 1))
            for k in range(1, kmax + 1)}


def complex_moments(history: ClusterHistory, t: float, kmax: int) -> dict[int, complex]:
    """Moments of the cluster at time ``t`` with ``r = sqrt(t/pi)``."""
    if history.d != 2:
        raise ValueError("complex moments need d = 2")
    return moments_of_sites(history.sites_at(t), math.sqrt(t / math.pi), kmax)


# -- annular test functions ------------------------------------------------

def _bspline(u):
    """Cubic B-spline on [0, 1] with four equal pieces, peak value 1 at u = 1/2.

    It is C^2 and vanishes with its first two derivatives at both ends.
    """
    u = np.asarray(u, dtype=np.float64)
    s = 4.0 * u
    out = np.zeros_like(s)
    a = (s >= 0) & (s < 1)
    b = (s >= 1) & (s < 2)
    c = (s >= 2) & (s < 3)
    e = (s >= 3) & (s <= 4)
    out[a] = s[a] ** 3 / 6
    sb = s[b] - 1
    out[b] = (-3 * sb**3 + 3 * sb**2 + 3 * sb + 1) / 6
    sc = 3 - s[c]
    out[c] = (-3 * sc**3 + 3 * sc**2 + 3 * sc + 1) / 6
    out[e] = (4 - s[e]) ** 3 / 6
    return out * 1.5


@dataclass(frozen=True)
class Bump:
    """One term ``c * profile((r - lo)/(hi - lo))`` of the coefficient ``a_k``.

    ``shape="spline"`` is the smooth cubic B-spline; ``shape="box"`` is the
    indicator of ``[lo, hi]`` and exists only for quadrature cross-checks.
    """

    k: int
    c: complex
    lo: float
    hi: float
    shape: str = "spline"

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise ValueError("need 0 < lo < hi")
        if self.shape not in ("spline", "box"):
            raise ValueError(f"unknown shape {self.shape!r}")

    def __call__(self, r):
        u = (np.asarray(r, dtype=np.float64) - self.lo) / (self.hi - self.lo)
        if self.shape == "box":
            prof = ((u >= 0) & (u <= 1)).astype(np.float64)
        else:
            prof = _bspline(u)
        return self.c * prof

    def breakpoints(self) -> list[float]:
        if self.shape == "box":
            return [self.lo, self.hi]
        return [self.lo + j * (self.hi - self.lo) / 4 for j in range(5)]


class AnnularTestFunction:
    """``phi(r e^{i th}) = sum_k a_k(r) e^{i k th}`` with ``a_k`` built from bumps.

    Use :meth:`real` to supply the coefficients for ``k >= 0`` and get the
    conjugate terms ``a_{-k} = conj(a_k)`` added automatically.
    """

    def __init__(self, bumps: Sequence[Bump]):
        self.bumps = tuple(bumps)
        if not self.bumps:
            raise ValueError("need at least one bump")
        self.r0 = min(b.lo for b in self.bumps)
        self.r1 = max(b.hi for b in self.bumps)

    @classmethod
    def real(cls, bumps: Sequence[Bump]) -> "AnnularTestFunction":
        out = []
        for b in bumps:
            if b.k < 0:
                raise ValueError("give k >= 0; negative modes are added by conjugation")
            if b.k == 0:
                if complex(b.c).imag != 0:
                    raise ValueError("a_0 must be real")
                out.append(b)
            else:
                out.append(b)
                out.append(Bump(-b.k, complex(b.c).conjugate(), b.lo, b.hi, b.shape))
        return cls(out)

    @classmethod
    def single_mode(cls, k: int, c: complex = 1.0, lo: float = 1.0, hi: float = 2.0,
                    shape: str = "spline") -> "AnnularTestFunction":
        return cls.real([Bump(k, c, lo, hi, shape)])

    @property
    def modes(self) -> list[int]:
        return sorted({b.k for b in self.bumps})

    def coefficient(self, k: int, r) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        out = np.zeros(r.shape, dtype=complex)
        for b in self.bumps:
            if b.k == k:
                out = out + b(r)
        return out

    def is_real(self, tol: float = 0.0) -> bool:
        grid = np.linspace(self.r0, self.r1, 97)
        for k in self.modes:
            diff = self.coefficient(-k, grid) - np.conj(self.coefficient(k, grid))
            if np.abs(diff).max(initial=0.0) > tol:
                return False
        return True

    def __call__(self, points) -> np.ndarray:
        """Complex values at ``(M, 2)`` real points."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        r = np.hypot(p[:, 0], p[:, 1])
        th = np.arctan2(p[:, 1], p[:, 0])
        out = np.zeros(len(p), dtype=complex)
        for b in self.bumps:
            out += b(r) * np.exp(1j * b.k * th)
        return out

    def breakpoints(self, k: int) -> list[float]:
        pts = sorted({x for b in self.bumps if b.k == k for x in b.breakpoints()})
        return pts


@dataclass(frozen=True)
class LatenessStatistic:
    value: float
    imag: float
    n_sites: int


def annulus_sites(R: float, r0: float, r1: float) -> np.ndarray:
    """Lattice sites ``x`` with ``r0 <= |x|/R <= r1``."""
    ball = lattice_ball(r1 * R, 2)
    n2 = (ball.astype(np.float64) ** 2).sum(axis=1)
    return ball[n2 >= (r0 * R) ** 2]


def lateness_statistic(field: LatenessField, phi: AnnularTestFunction, R: float) -> LatenessStatistic:
    """``X_R = sum_x L(x) phi(x/R) / |x|^2`` over the support annulus of ``phi``.

    Every site of the annulus must be in the cluster.  The imaginary part of
    the sum is returned separately; it is zero up to rounding for a real
    ``phi``.
    """
    sites = annulus_sites(R, phi.r0, phi.r1)
    lookup = field.as_dict()
    try:
        L = np.array([lookup[(int(x), int(y))] for x, y in sites])
    except KeyError as exc:
        raise InsufficientHistory(f"site {exc.args[0]} of the support annulus is not occupied") from None
    vals = phi(sites / R)
    w = L / (sites.astype(np.float64) ** 2).sum(axis=1)
    re = math.fsum(w * vals.real)
    im = math.fsum(w * vals.imag)
    return LatenessStatistic(value=re, imag=im, n_sites=len(sites))


def _piecewise_quad(f, edges, epsrel):
    acc = 0.0
    for u, v in zip(edges[:-1], edges[1:]):
        if v > u:
            val, _ = integrate.quad(f, u, v, epsabs=0, epsrel=epsrel, limit=200)
            acc += val
    return acc


def v_quadrature(phi: AnnularTestFunction, include_k0: bool = False, epsrel: float = 1e-10) -> float:
    """Limit variance ``V`` (``include_k0``) or ``V_0`` of the lateness statistic.

    ``sum_k 2 pi int_0^inf |I_k(rho)|^2 drho/rho`` with
    ``I_k(rho) = int_rho^inf a_k(r) (rho/r)^q dr/r`` and ``q = |k| + 1``.
    Below the support ``I_k(rho) = rho^q C_k`` with
    ``C_k = int a_k(r) r^{-q-1} dr``, so that piece is
    ``|C_k|^2 lo^{2q} / (2q)``; the rest is nested adaptive quadrature split
    at the bump knots.
    """
    total = []
    for k in phi.modes:
        if k == 0 and not include_k0:
            continue
        q = abs(k) + 1
        knots = phi.breakpoints(k)
        lo = knots[0]
        parts = [lambda r, k=k: float(phi.coefficient(k, r).real),
                 lambda r, k=k: float(phi.coefficient(k, r).imag)]

        def inner_sq(rho):
            edges = [rho] + [x for x in knots if x > rho]
            s = 0.0
            for f in parts:
                v = _piecewise_quad(lambda r: f(r) * (rho / r) ** q / r, edges, max(epsrel * 1e-2, 1e-13))
                s += v * v
            return s

        C2 = sum(_piecewise_quad(lambda r: f(r) * r ** (-q - 1), knots, max(epsrel * 1e-2, 1e-13)) ** 2
                 for f in parts)
        below = C2 * lo ** (2 * q) / (2 * q)
        above = _piecewise_quad(lambda rho: inner_sq(rho) / rho, knots, epsrel)
        total.append(2 * math.pi * (below + above))
    return math.fsum(total)


# -- quadratic variation ---------------------------------------------------

@dataclass(frozen=True)
class QuadraticVariation:
    walk_sum: float
    riemann_sum: float

    @property
    def difference(self) -> float:
        return self.walk_sum - self.riemann_sum


def qv_history(psi: MeshPolynomial, m: int, t: float, seed: int = 0, stream: int = 0) -> ClusterHistory:
    """Poisson-time cluster to time ``m^d t`` that records squared walk increments of ``psi1``."""
    base = psi.base.evaluator()
    return grow(d=psi.dim, t=m**psi.dim * t, seed=seed, stream=stream,
                path_field=lambda coords: base(coords.astype(np.float64)))


def quadratic_variation_check(history: ClusterHistory, psi: MeshPolynomial, m: int,
                              t: Optional[float] = None) -> QuadraticVariation:
    """Both sides of the quadratic-variation identity for ``Phi_A``.

    ``walk_sum`` is ``m^{-d}`` times the sum, over every step of every
    walker up to time ``m^d t``, of the squared change in ``psi_(m)``;
    ``riemann_sum`` is ``m^{-d} sum_{x in A} psi_(m)(x/m)^2``.  Their
    difference has mean zero and second moment of order ``m^{-d}``.
    """
    if history.path_qv is None:
        raise ValueError("history was grown without a path field; use qv_history")
    if abs(psi.at_zero()) != 0:
        raise ValueError("psi must vanish at the origin")
    d = history.d
    T = history.t_max if t is None else m**d * t
    n = history.count_at(T)
    scale = float(m) ** (-2 * psi.k)
    walk = math.fsum(history.path_qv[:n]) * scale * m ** (-d)
    vals = psi.on_lattice(history.sites[:n])
    riemann = math.fsum(vals * vals) * m ** (-d)
    return QuadraticVariation(walk_sum=walk, riemann_sum=riemann)
