"""Reference values for the ordinary and augmented Gaussian free field.

Everything here is closed form: spherical-mode variances, Dirichlet
energies of solid harmonics, integrals of polynomials over balls and
spheres, and the d = 2 random Fourier series on the unit circle.  The
radial quadrature routines are independent cross-checks of those formulas.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .cluster import radius_for_volume
from .poly import ExactPolynomial

AUGMENTED = "augmented"
ORDINARY = "ordinary"


def harmonic_dimension(d: int, ell: int) -> int:
    """Number of independent homogeneous harmonic polynomials of degree ``ell``."""
    if ell < 0:
        return 0
    if d == 1:
        return 1 if ell <= 1 else 0
    lower = math.comb(ell + d - 3, d - 1) if ell >= 2 else 0
    return math.comb(ell + d - 1, d - 1) - lower


def mode_variance(kind: str, d: int, ell: int, R: float = 1.0) -> float:
    """Variance of one degree-``ell`` spherical mode at radius ``R``."""
    if d < 2 or ell < 0 or R <= 0:
        raise ValueError(f"undefined mode: d={d}, ell={ell}, R={R}")
    if kind == AUGMENTED:
        denom = 2 * ell + d
    elif kind == ORDINARY:
        denom = 2 * ell + d - 2
        if denom == 0:
            raise ValueError("the ordinary GFF has no constant mode in d = 2")
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return R ** (2 - d) / denom


@dataclass(frozen=True)
class ModeSpectrum:
    """Per-degree variances ``(ell, multiplicity, variance)`` at radius ``R``."""

    d: int
    kind: str
    R: float
    modes: tuple[tuple[int, int, float], ...] = field(default=())

    @classmethod
    def build(cls, d: int, kind: str = AUGMENTED, R: float = 1.0, ell_max: int = 8) -> "ModeSpectrum":
        start = 1 if (kind == ORDINARY and d == 2) else 0
        modes = tuple((ell, harmonic_dimension(d, ell), mode_variance(kind, d, ell, R))
                      for ell in range(start, ell_max + 1))
        return cls(d=d, kind=kind, R=R, modes=modes)

    def variance(self, ell: int) -> float:
        for e, _, v in self.modes:
            if e == ell:
                return v
        raise KeyError(ell)

    def as_json_obj(self) -> dict:
        return {"d": self.d, "kind": self.kind, "R": self.R,
                "modes": [{"ell": e, "multiplicity": m, "variance": v} for e, m, v in self.modes]}


def dirichlet_energy(ell: int, d: int, R: float = 1.0, region: str = "inside") -> float:
    """Dirichlet energy of the harmonic extension of a normalised degree-``ell`` mode.

    ``inside``: ``r^ell g`` on the ball of radius ``R``; ``outside``: the
    decaying extension ``R^{2ell+d-2} r^{2-d-ell} g`` beyond ``R``;
    ``whole_R1``: both pieces at ``R = 1``.
    """
    if ell < 1 or d < 2:
        raise ValueError("need ell >= 1 and d >= 2")
    scale = R ** (2 * ell + d - 2)
    if region == "inside":
        return ell * scale
    if region == "outside":
        return (ell + d - 2) * scale
    if region == "whole_R1":
        return float(2 * ell + d - 2)
    raise ValueError(f"unknown region {region!r}")


def _angular_energy(ell: int, d: int) -> float:
    """``int_S |grad_S g|^2`` for a unit-norm degree-``ell`` mode, by quadrature.

    d = 2 uses ``g = cos(ell th)/sqrt(pi)``; d = 3 uses the zonal harmonic
    ``P_ell(cos th)`` normalised on the sphere.
    """
    if d == 2:
        val, _ = integrate.quad(lambda th: (ell * math.sin(ell * th)) ** 2 / math.pi,
                                0.0, 2 * math.pi, limit=200, epsabs=0, epsrel=1e-13)
        return val
    if d == 3:
        from scipy.special import eval_legendre, lpmv

        norm, _ = integrate.quad(lambda th: 2 * math.pi * eval_legendre(ell, math.cos(th)) ** 2
                                 * math.sin(th), 0.0, math.pi, epsabs=0, epsrel=1e-13)
        # d/dth P_l(cos th) = P_l^1(cos th) up to the Condon-Shortley sign
        grad, _ = integrate.quad(lambda th: 2 * math.pi * lpmv(1, ell, math.cos(th)) ** 2
                                 * math.sin(th), 0.0, math.pi, epsabs=0, epsrel=1e-13)
        return grad / norm
    raise ValueError("angular quadrature only for d = 2, 3")


def dirichlet_energy_quadrature(ell: int, d: int, R: float = 1.0, region: str = "inside") -> float:
    """Radial quadrature of ``|d_r f|^2 + r^{-2}|grad_S f|^2`` over the region."""
    ang = _angular_energy(ell, d)
    if region == "whole_R1":
        return (dirichlet_energy_quadrature(ell, d, 1.0, "inside")
                + dirichlet_energy_quadrature(ell, d, 1.0, "outside"))
    if region == "inside":
        p = ell
        amp = 1.0
        lo, hi = 0.0, R
    elif region == "outside":
        p = 2 - d - ell
        amp = R ** (2 * ell + d - 2)
        lo, hi = R, math.inf
    else:
        raise ValueError(f"unknown region {region!r}")

    def integrand(r):
        radial = (p * r ** (p - 1)) ** 2
        tangential = ang * r ** (2 * p - 2)
        return amp * amp * (radial + tangential) * r ** (d - 1)

    val, _ = integrate.quad(integrand, lo, hi, epsabs=0, epsrel=1e-12, limit=200)
    return val


def mode_variance_quadrature(kind: str, d: int, ell: int, R: float = 1.0) -> float:
    """Mode variance from radial integrals instead of the closed form.

    Augmented: the squared ball norm of ``r^ell g`` rescaled to the sphere
    of radius ``R``.  Ordinary: the reciprocal of the whole-space Dirichlet
    energy of the harmonic extension, rescaled by ``R^{2-d}``.
    """
    if kind == AUGMENTED:
        val, _ = integrate.quad(lambda r: r ** (d - 1 + 2 * ell), 0.0, R, epsabs=0, epsrel=1e-13)
        return val / (R ** (2 * ell) * R ** (2 * (d - 1)))
    if kind == ORDINARY:
        if ell == 0:
            raise ValueError("ordinary variance from energies needs ell >= 1")
        return R ** (2 - d) / dirichlet_energy_quadrature(ell, d, 1.0, "whole_R1")
    raise ValueError(f"unknown kind {kind!r}")


# -- exact moment integrals ------------------------------------------------

def sphere_monomial_integral(exps) -> float:
    """``int_{S^{d-1}} x^alpha dS``; zero unless every exponent is even."""
    exps = tuple(int(a) for a in exps)
    if any(a % 2 for a in exps):
        return 0.0
    d = len(exps)
    logv = math.log(2.0) + sum(math.lgamma((a + 1) / 2) for a in exps) - math.lgamma((sum(exps) + d) / 2)
    return math.exp(logv)


def ball_monomial_integral(exps, r: float) -> float:
    """``int_{B_r} x^alpha dx`` for the origin-centred ball of radius ``r``."""
    n = sum(exps) + len(exps)
    return sphere_monomial_integral(exps) * r**n / n


def _product_terms(p: ExactPolynomial, q: ExactPolynomial) -> dict:
    prod = p * q
    return prod.terms


def ball_integral(p: ExactPolynomial, r: float) -> float:
    """``int_{B_r} p`` term by term."""
    return math.fsum(float(c) * ball_monomial_integral(e, r) for e, c in p.terms.items())


def sphere_integral(p: ExactPolynomial) -> float:
    """``int_{S^{d-1}} p dS``."""
    return math.fsum(float(c) * sphere_monomial_integral(e) for e, c in p.terms.items())


def covariance_pairing(psi1: ExactPolynomial, t1: float, psi2: ExactPolynomial, t2: float,
                       d: Optional[int] = None) -> float:
    """``int psi1 psi2`` over the ball of volume ``min(t1, t2)``."""
    d = psi1.dim if d is None else d
    if psi1.dim != d or psi2.dim != d:
        raise ValueError("polynomial dimension mismatch")
    r = radius_for_volume(min(t1, t2), d)
    return math.fsum(float(c) * ball_monomial_integral(e, r)
                     for e, c in _product_terms(psi1, psi2).items())


def mode_sum_covariance(psi1: ExactPolynomial, t1: float, psi2: ExactPolynomial, t2: float,
                        ell_max: int) -> float:
    """Covariance rebuilt from augmented mode variances up to degree ``ell_max``.

    For harmonic inputs each homogeneous part of degree ``ell`` is a pure
    degree-``ell`` mode, and parts of different degree are orthogonal on
    spheres.  The degree-``ell`` contribution is the mode variance times
    ``R^{2ell + 2(d-1)}`` times the sphere inner product of the two parts.
    """
    d = psi1.dim
    R = radius_for_volume(min(t1, t2), d)
    total = []
    for ell in range(ell_max + 1):
        a, b = psi1.homogeneous_part(ell), psi2.homogeneous_part(ell)
        if a.is_zero() or b.is_zero():
            continue
        inner = sphere_integral(a * b)
        total.append(mode_variance(AUGMENTED, d, ell, R) * R ** (2 * ell + 2 * (d - 1)) * inner)
    return math.fsum(total)


# -- the d = 2 Fourier series ----------------------------------------------

@dataclass(frozen=True)
class FourierField:
    """Truncated random Fourier series on the unit circle.

    ``h(th) = (2 pi)^{-1/2} [alpha_0/sqrt2 + sum_k (alpha_k cos k th + beta_k sin k th)/sqrt(k+1)]``
    """

    alpha: np.ndarray
    beta: np.ndarray

    @property
    def kmax(self) -> int:
        return len(self.alpha) - 1

    def cos_coefficient(self, k: int) -> float:
        return float(self.alpha[k]) / math.sqrt(2 * math.pi) / (math.sqrt(2) if k == 0 else math.sqrt(k + 1))

    def __call__(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=np.float64)
        out = np.full(th.shape, self.alpha[0] / math.sqrt(2))
        for k in range(1, self.kmax + 1):
            out = out + (self.alpha[k] * np.cos(k * th) + self.beta[k] * np.sin(k * th)) / math.sqrt(k + 1)
        return out / math.sqrt(2 * math.pi)


def sample_fourier_field_2d(kmax: int, seed: int = 0, stream: int = 0,
                            rng: Optional[np.random.Generator] = None) -> FourierField:
    """Independent standard Gaussians ``alpha_0..alpha_kmax``, ``beta_1..beta_kmax``."""
    if kmax < 0:
        raise ValueError("kmax must be nonnegative")
    if rng is None:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream,))))
    alpha = rng.standard_normal(kmax + 1)
    beta = np.concatenate([[0.0], rng.standard_normal(kmax)])
    return FourierField(alpha=alpha, beta=beta)


def fourier_mode_variance(k: int) -> float:
    """Variance of the unit-normalised mode ``cos(k th)/sqrt(pi)`` of the series.

    For ``k = 0`` the mode is ``1/sqrt(2 pi)``.  This equals the augmented
    d = 2 mode variance at ``R = 1``.
    """
    if k == 0:
        # <h, 1/sqrt(2 pi)> = alpha_0/sqrt(2)
        return 0.5
    # <h, cos/sqrt(pi)> = coefficient * sqrt(pi)
    return math.pi * (1.0 / (2 * math.pi * (k + 1)))


# -- relative entropy of a rescaled Gaussian --------------------------------

def relative_entropy_sigma(sigma: float) -> float:
    """``F(sigma) = (sigma^-2 - 1)/2 + log(sigma)``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return (sigma**-2 - 1) / 2 + math.log(sigma)


def entropy_series_terms(j_max: int) -> np.ndarray:
    """``F(sigma_j)`` for ``sigma_j^2 = j/(j+1)``, ``j = 1..j_max``.

    Written as ``1/(2j) - log1p(1/j)/2`` to avoid cancellation at large ``j``.
    """
    j = np.arange(1, j_max + 1, dtype=np.float64)
    return 0.5 / j - 0.5 * np.log1p(1.0 / j)


def entropy_series_partial_sums(j_max: int) -> np.ndarray:
    return np.cumsum(entropy_series_terms(j_max))


# -- spherical eigenfunction check -----------------------------------------

def surface_laplacian_fd(poly: ExactPolynomial, n: int = 2000):
    """Finite-difference surface Laplacian of ``poly`` restricted to the unit sphere.

    d = 2: returns ``(g, lap_g)`` on ``n`` equally spaced angles.
    d = 3: returns them on an interior ``(theta, phi)`` grid avoiding the
    poles, using the spherical-coordinate form of the operator.
    """
    f = poly.evaluator()
    if poly.dim == 2:
        h = 2 * math.pi / n
        th = np.arange(n) * h
        g = f(np.column_stack([np.cos(th), np.sin(th)]))
        lap = (np.roll(g, -1) - 2 * g + np.roll(g, 1)) / h**2
        return g, lap
    if poly.dim == 3:
        m = max(16, int(math.sqrt(n)))
        h = math.pi / m
        th = np.linspace(0.25 * math.pi, 0.75 * math.pi, m // 2 + 1)
        ph = np.linspace(0.0, 2 * math.pi, 2 * m, endpoint=False)
        T, P = np.meshgrid(th, ph, indexing="ij")

        def g_at(t, p):
            pts = np.column_stack([(np.sin(t) * np.cos(p)).ravel(), (np.sin(t) * np.sin(p)).ravel(),
                                   np.cos(t).ravel()])
            return f(pts).reshape(t.shape)

        g = g_at(T, P)
        gp, gm = g_at(T + h, P), g_at(T - h, P)
        sp_, sm_ = np.sin(T + h / 2), np.sin(T - h / 2)
        d_theta = (sp_ * (gp - g) - sm_ * (g - gm)) / (h * h * np.sin(T))
        d_phi = (g_at(T, P + h) - 2 * g + g_at(T, P - h)) / (h * h * np.sin(T) ** 2)
        return g, d_theta + d_phi
    raise ValueError("surface Laplacian only for d = 2, 3")
