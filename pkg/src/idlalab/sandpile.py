"""Divisible sandpile started from mass ``t`` at the origin.

Any site holding more than one unit keeps one and splits the excess evenly
among its ``2d`` neighbours.  The odometer ``u(x)`` is the mass ``x`` has
sent along each of its edges, so ``2d*u(x)`` left ``x`` in total.  The
final mass is ``t*delta_0 + sum_y (u(y) - u(x))`` over the neighbours ``y``,
and the toppled set ``{u > 0}`` is completely full.  The fixed point does
not depend on the toppling order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cluster import radius_for_volume
from .poly import ComplexPairPolynomial, ExactPolynomial

MAX_SWEEPS = 2_000_000


class RelaxationError(RuntimeError):
    pass


class NotDiscreteHarmonic(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SandpileField:
    """Relaxed sandpile: occupied sites with their mass and odometer."""

    t: float
    d: int
    sites: np.ndarray
    mass: np.ndarray
    odometer: np.ndarray
    residual: float
    tol: float
    sweeps: int

    def total_mass(self) -> float:
        return math.fsum(self.mass)

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {tuple(int(v) for v in x): float(w) for x, w in zip(self.sites, self.mass)}

    def mass_at(self, x) -> float:
        return self.as_dict().get(tuple(int(v) for v in x), 0.0)


@nb.njit(cache=True)
def _sweep(mass, odo, offsets, interior, inv2d):
    """One Gauss-Seidel pass over ``interior``; returns the largest excess toppled."""
    biggest = 0.0
    for idx in interior:
        e = mass[idx] - 1.0
        if e > 0.0:
            if e > biggest:
                biggest = e
            mass[idx] = 1.0
            odo[idx] += e
            share = e * inv2d
            for o in offsets:
                mass[idx + o] += share
    return biggest


@nb.njit(cache=True)
def _relax_loop(mass, odo, offsets, interior, inv2d, tol, max_sweeps):
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        if _sweep(mass, odo, offsets, interior, inv2d) < tol:
            worst = 0.0
            for idx in interior:
                if mass[idx] - 1.0 > worst:
                    worst = mass[idx] - 1.0
            if worst < tol:
                return sweeps
    return -sweeps


class _Box:
    def __init__(self, d: int, L: int):
        self.d, self.L, self.W = d, L, 2 * L + 1
        strides = self.W ** np.arange(d, dtype=np.int64)
        self.strides = strides
        self.offsets = np.concatenate([strides, -strides])
        self.origin = int(L * strides.sum())
        axes = np.arange(-L, L + 1)
        grids = np.meshgrid(*([axes] * d), indexing="ij")
        # flat index with axis 0 fastest
        self.coords = np.stack([g.ravel(order="F") for g in grids], axis=1)
        inner = np.all(np.abs(self.coords) < L, axis=1)
        self.interior = np.flatnonzero(inner).astype(np.int64)
        self.rim = np.flatnonzero(~inner)


def relax(t: float, d: int = 2, tol: float = 1e-10, polish: bool = True,
          max_sweeps: int = MAX_SWEEPS) -> SandpileField:
    """Relax mass ``t`` at the origin until every excess is below ``tol``.

    With ``polish`` the toppled set found by the sweeps is used as the
    active set of the linear system ``m(u) = 1`` (``u = 0``
    outside), which is solved directly and re-checked; this removes the
    leftover excess so the masses are exact to rounding.
    """
    if t < 0:
        raise ValueError("mass must be nonnegative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    L = int(math.ceil(radius_for_volume(max(t, 1.0), d) + 2 * math.sqrt(d))) + 2
    while True:
        box = _Box(d, L)
        mass = np.zeros(box.W**d)
        odo = np.zeros(box.W**d)
        mass[box.origin] = t
        sweeps = _relax_loop(mass, odo, box.offsets, box.interior, 1.0 / (2 * d), tol, max_sweeps)
        if sweeps < 0:
            raise RelaxationError(f"excess still >= {tol} after {-sweeps} sweeps")
        if not mass[box.rim].any():
            break
        L *= 2
    if polish and odo.any():
        polished = _polish(box, t, odo)
        if polished is not None:
            mass, odo = polished
    full = odo > 0
    odo = odo / (2 * d)
    excess = np.where(mass > 1.0, mass - 1.0, 0.0)
    w = np.where(full, 1.0, np.minimum(mass, 1.0))
    keep = np.flatnonzero((w > 0) | full)
    return SandpileField(t=float(t), d=d, sites=box.coords[keep].copy(), mass=w[keep],
                         odometer=odo[keep], residual=float(excess.max(initial=0.0)),
                         tol=tol, sweeps=int(sweeps))


def _polish(box: _Box, t: float, odo: np.ndarray, rounds: int = 20):
    """Active-set refinement of the odometer; ``None`` if it does not settle."""
    active = odo > 0
    inv2d = 1.0 / (2 * box.d)
    for _ in range(rounds):
        idx = np.flatnonzero(active)
        if np.isin(idx, box.rim).any():
            return None
        pos = -np.ones(box.W**box.d, dtype=np.int64)
        pos[idx] = np.arange(len(idx))
        rows, cols = [np.arange(len(idx))], [np.arange(len(idx))]
        vals = [np.ones(len(idx))]
        for o in box.offsets:
            nbr = pos[idx + o]
            ok = nbr >= 0
            rows.append(np.flatnonzero(ok))
            cols.append(nbr[ok])
            vals.append(np.full(ok.sum(), -inv2d))
        A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(len(idx), len(idx)))
        rhs = np.ones(len(idx))
        rhs[pos[box.origin]] -= t
        # (I - P) u = t*delta_0 - 1 on the active set
        u_active = spla.spsolve(A.tocsc(), -rhs)
        u = np.zeros_like(odo)
        u[idx] = u_active
        m = np.zeros_like(odo)
        m[box.origin] = t
        m -= u
        for o in box.offsets:
            m[box.interior] += inv2d * u[box.interior + o]
        grow_set = (~active) & (m > 1.0)
        shrink = active & (u <= 0)
        if not grow_set.any() and not shrink.any():
            return m, u
        active = (active | grow_set) & ~shrink
    return None


def shape_report(field: SandpileField) -> tuple[float, float, float]:
    """``(inner, outer, width)`` of the partially filled annulus.

    Radii are lattice norms.  ``inner`` is the smallest norm of a site that
    is not full, so every ``|x| < inner`` has ``w = 1``; ``outer`` is the
    smallest norm beyond the last occupied site, so every ``|x| >= outer``
    is empty.  For ``t = 1`` both equal 1.
    """
    norms = np.sqrt((field.sites.astype(np.float64) ** 2).sum(axis=1))
    occupied = field.mass > 0
    last = float(norms[occupied].max()) if occupied.any() else -1.0
    R = int(math.ceil(max(last, 0.0))) + 2
    axes = np.arange(-R, R + 1)
    grid = np.stack(np.meshgrid(*([axes] * field.d), indexing="ij"), axis=-1).reshape(-1, field.d)
    gnorm = np.sqrt((grid.astype(np.float64) ** 2).sum(axis=1))
    full = {tuple(x) for x, w in zip(field.sites.tolist(), field.mass) if w >= 1.0 - 1e-9}
    not_full = np.array([tuple(x) not in full for x in grid.tolist()])
    inner = float(gnorm[not_full].min())
    outer = float(gnorm[gnorm > last].min())
    return inner, outer, max(outer - inner, 0.0)


def harmonic_moment(field: SandpileField, p) -> tuple[complex, float]:
    """``sum_x w(x) p(x)`` and the residual-driven bound on its size.

    ``p`` must be discrete harmonic with ``p(0) = 0`` (checked exactly).
    The bound is ``n_partial * max(tol, residual) * max|p|`` over the
    support, where ``n_partial`` counts the sites that are neither empty
    nor full.
    """
    d = field.d
    if isinstance(p, ComplexPairPolynomial):
        if d != 2:
            raise ValueError("complex polynomials need d = 2")
        re, im = p.to_xy()
    elif isinstance(p, ExactPolynomial):
        re, im = p, None
    else:
        raise TypeError("p must be an ExactPolynomial or ComplexPairPolynomial")
    for part in (re, im):
        if part is None:
            continue
        if part.dim != d:
            raise ValueError("polynomial dimension does not match the field")
        if not part.discrete_laplacian().is_zero():
            raise NotDiscreteHarmonic("polynomial is not discrete harmonic")
        if part(*([0] * d)) != 0:
            raise ValueError("polynomial must vanish at the origin")
    vals = re.evaluator()(field.sites)
    total = complex(math.fsum(field.mass * vals), 0.0)
    mags = np.abs(vals)
    if im is not None:
        ivals = im.evaluator()(field.sites)
        total = complex(total.real, math.fsum(field.mass * ivals))
        mags = np.hypot(vals, ivals)
    partial = int(((field.mass > 0) & (field.mass < 1)).sum())
    bound = max(partial, 1) * max(field.tol, field.residual) * float(mags.max(initial=0.0))
    return total, bound


def exact_1d(t: float) -> tuple[dict[int, float], dict[int, float]]:
    """Closed-form sandpile on Z for odd integer ``t = 2n+1``.

    The mass fills ``{-n..n}`` and the per-edge odometer is
    ``u(x) = (n+1-|x|)(n-|x|)/2``.
    """
    n2 = t - 1
    if n2 < 0 or n2 != int(n2) or int(n2) % 2:
        raise ValueError("closed form only for odd integer t")
    n = int(n2) // 2
    w = {x: 1.0 for x in range(-n, n + 1)}
    u = {x: (n + 1 - abs(x)) * (n - abs(x)) / 2 for x in range(-n, n + 1)}
    return w, u
