import math

import numpy as np
import pytest

from idlalab import gff
from idlalab.poly import ExactPolynomial, harmonic_basis, solid_harmonics_3d

X, Y = ExactPolynomial.variable(0, 2), ExactPolynomial.variable(1, 2)


def test_mode_variance_examples():
    assert gff.mode_variance(gff.AUGMENTED, 2, 1, 1.0) == 0.25
    assert gff.mode_variance(gff.AUGMENTED, 2, 0, 1.0) == 0.5
    assert gff.mode_variance(gff.ORDINARY, 2, 1, 1.0) == 0.5


@pytest.mark.parametrize("d", [2, 3, 4])
@pytest.mark.parametrize("ell", range(0, 5))
def test_mode_variance_formula(d, ell):
    R = 1.7
    assert gff.mode_variance(gff.AUGMENTED, d, ell, R) == pytest.approx(R ** (2 - d) / (2 * ell + d))
    if 2 * ell + d - 2 > 0:
        assert gff.mode_variance(gff.ORDINARY, d, ell, R) == pytest.approx(R ** (2 - d) / (2 * ell + d - 2))


def test_mode_variance_errors():
    with pytest.raises(ValueError):
        gff.mode_variance(gff.ORDINARY, 2, 0)
    with pytest.raises(ValueError):
        gff.mode_variance(gff.AUGMENTED, 1, 0)
    with pytest.raises(ValueError):
        gff.mode_variance("massive", 2, 1)


@pytest.mark.parametrize("d,ell", [(2, 3), (3, 2), (3, 4), (4, 2)])
def test_harmonic_dimension_matches_basis(d, ell):
    assert gff.harmonic_dimension(d, ell) == len(harmonic_basis(d, ell))


def test_spectrum_json():
    s = gff.ModeSpectrum.build(3, gff.ORDINARY, 2.0, 4)
    obj = s.as_json_obj()
    assert [m["ell"] for m in obj["modes"]] == [0, 1, 2, 3, 4]
    assert s.variance(2) == gff.mode_variance(gff.ORDINARY, 3, 2, 2.0)


def test_dirichlet_energy_examples():
    assert gff.dirichlet_energy(1, 2, 1.0, "inside") == pytest.approx(1.0)
    assert gff.dirichlet_energy(1, 3, 1.0, "outside") == pytest.approx(2.0)
    assert gff.dirichlet_energy(2, 2, 1.0, "whole_R1") == pytest.approx(4.0)


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("ell", [1, 2, 5])
@pytest.mark.parametrize("region", ["inside", "outside", "whole_R1"])
def test_dirichlet_energy_matches_quadrature(d, ell, region):
    a = gff.dirichlet_energy(ell, d, 1.3, region)
    b = gff.dirichlet_energy_quadrature(ell, d, 1.3, region)
    assert abs(a - b) <= 1e-8 * abs(a)


def test_dirichlet_energy_bad_region():
    with pytest.raises(ValueError):
        gff.dirichlet_energy(1, 2, 1.0, "annulus")


def test_ball_integral_examples():
    one = ExactPolynomial.constant(1, 2)
    assert gff.covariance_pairing(one, 3.0, one, 3.0) == pytest.approx(3.0)
    assert gff.covariance_pairing(one, 2.0, one, 5.0) == pytest.approx(2.0)
    assert gff.covariance_pairing(X, 1.0, Y, 1.0) == 0.0
    with pytest.raises(ValueError):
        gff.covariance_pairing(X, 1.0, ExactPolynomial.variable(0, 3), 1.0)


@pytest.mark.parametrize("d,ell", [(2, 1), (2, 3), (3, 2), (3, 3)])
def test_l2_norm_of_normalised_harmonic(d, ell):
    """A harmonic normalised on the unit sphere has ball norm R^(d+2ell)/(d+2ell)."""
    h = harmonic_basis(d, ell)[0]
    s = gff.sphere_integral(h * h)
    R = 1.4
    t = R**d * math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    got = gff.covariance_pairing(h, t, h, t) / s
    assert got == pytest.approx(R ** (d + 2 * ell) / (d + 2 * ell), rel=1e-12)


def test_sphere_monomial_integral_circle():
    assert gff.sphere_monomial_integral((0, 0)) == pytest.approx(2 * math.pi)
    assert gff.sphere_monomial_integral((2, 0)) == pytest.approx(math.pi)
    assert gff.sphere_monomial_integral((1, 0)) == 0


@pytest.mark.parametrize("ell_max", [3, 6])
def test_mode_sum_matches_ball_covariance(ell_max):
    psi = [ExactPolynomial.constant(1, 2), X, X * X - Y * Y, X**3 - 3 * X * Y * Y]
    for a in psi:
        for b in psi:
            direct = gff.covariance_pairing(a, 0.7, b, 1.2)
            modes = gff.mode_sum_covariance(a, 0.7, b, 1.2, ell_max)
            assert modes == pytest.approx(direct, rel=1e-12, abs=1e-15)


def test_mode_sum_3d():
    for h in solid_harmonics_3d(2) + solid_harmonics_3d(3):
        assert gff.mode_sum_covariance(h, 2.0, h, 2.0, 4) == pytest.approx(gff.covariance_pairing(h, 2.0, h, 2.0))


def test_fourier_field_zero_coefficients():
    f = gff.FourierField(alpha=np.zeros(5), beta=np.zeros(5))
    assert not np.any(f(np.linspace(0, 6, 50)))


def test_fourier_field_reproducible():
    a = gff.sample_fourier_field_2d(10, seed=3, stream=1)
    b = gff.sample_fourier_field_2d(10, seed=3, stream=1)
    assert np.array_equal(a.alpha, b.alpha) and np.array_equal(a.beta, b.beta)
    assert a.beta[0] == 0.0


def test_fourier_coefficient_variances():
    rng = np.random.default_rng(4)
    kmax, n = 4, 100_000
    coeffs = np.empty((n, kmax + 1))
    alpha1 = np.empty(n)
    for i in range(n):
        f = gff.sample_fourier_field_2d(kmax, rng=rng)
        alpha1[i] = f.alpha[1]
        coeffs[i] = [f.cos_coefficient(k) for k in range(kmax + 1)]
    assert alpha1.var() == pytest.approx(1.0, abs=0.02)
    for k in range(1, kmax + 1):
        assert coeffs[:, k].var() == pytest.approx(1 / (2 * math.pi * (k + 1)), rel=0.03)


def test_fourier_mode_variance_matches_augmented_spectrum():
    for k in range(0, 6):
        assert gff.fourier_mode_variance(k) == pytest.approx(gff.mode_variance(gff.AUGMENTED, 2, k, 1.0))


def test_fourier_projection_by_quadrature():
    f = gff.sample_fourier_field_2d(6, seed=9)
    th = np.linspace(0, 2 * math.pi, 4096, endpoint=False)
    vals = f(th)
    for k in range(1, 7):
        proj = 2 * np.mean(vals * np.cos(k * th))
        assert proj == pytest.approx(f.cos_coefficient(k), abs=1e-12)


def test_relative_entropy_values():
    assert gff.relative_entropy_sigma(1.0) == 0.0
    assert gff.relative_entropy_sigma(2.0) == pytest.approx(-0.375 + math.log(2), abs=1e-15)
    assert gff.relative_entropy_sigma(2.0) == pytest.approx(0.318147, abs=5e-7)
    with pytest.raises(ValueError):
        gff.relative_entropy_sigma(0.0)


def test_relative_entropy_is_quadratic_near_one():
    a = np.linspace(-0.1, 0.1, 41)
    a = a[a != 0]
    ratios = [abs(gff.relative_entropy_sigma(1 + x)) / x**2 for x in a]
    assert max(ratios) < 2.0


def test_entropy_series_terms_match_direct_formula():
    terms = gff.entropy_series_terms(50)
    for j in (1, 7, 50):
        sigma = math.sqrt(j / (j + 1))
        assert terms[j - 1] == pytest.approx(gff.relative_entropy_sigma(sigma), rel=1e-10)


def test_entropy_series_converges():
    sums = gff.entropy_series_partial_sums(10**6)
    limit = 0.5 * 0.5772156649015329
    assert np.all(np.diff(sums) > 0)
    for J in (10**3, 10**4, 10**5, 10**6):
        assert 0 < limit - sums[J - 1] <= 1 / (4 * J)


@pytest.mark.parametrize("ell", range(0, 6))
def test_surface_laplacian_circle(ell):
    for h in harmonic_basis(2, ell):
        g, lap = gff.surface_laplacian_fd(h, 4000)
        assert np.abs(lap + ell * ell * g).max() <= 1e-5 * max(1.0, np.abs(g).max()) * max(ell, 1) ** 4


@pytest.mark.parametrize("ell", range(1, 5))
def test_surface_laplacian_sphere_converges(ell):
    errs = []
    for n in (1600, 6400):
        worst = 0.0
        for h in solid_harmonics_3d(ell):
            g, lap = gff.surface_laplacian_fd(h, n)
            worst = max(worst, np.abs(lap + ell * (ell + 1) * g).max() / np.abs(g).max())
        errs.append(worst)
    # second-order scheme: doubling the resolution cuts the error by about 4
    assert errs[1] < errs[0] / 3
    assert errs[1] < 5e-3 * ell * (ell + 1)
