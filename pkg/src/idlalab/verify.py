"""End-to-end checks that compare simulations with their predicted limits.

Each ``check_*`` function returns a list of :class:`~idlalab.stats.TestVerdict`
and is shared by the ``verify`` CLI subcommand and the acceptance tests.
"""
from __future__ import annotations

import itertools
import math
import time
from fractions import Fraction

import numpy as np

from . import gff
from .cluster import grow
from .observables import AnnularTestFunction, qv_history, quadratic_variation_check, v_quadrature
from .poly import (ExactPolynomial, discrete_laplacian_grid, discrete_zk, discrete_zk_parts,
                   grid_values, harmonic_basis, rescale_to_mesh, symmetric_factorial_poly, xi_transform,
                   ComplexPairPolynomial)
from .sandpile import exact_1d, harmonic_moment, relax, shape_report
from .stats import (EnsembleConfig, TestVerdict, box_count, column, correlation, fkg_correlation,
                    gaussian_fit, run_ensemble, vdc_stability)

DEFAULT_SEED = 20261016


def _verdict(name, target, estimate, se, passed, start, **extra):
    return TestVerdict(name=name, target=float(target), estimate=float(estimate), se=float(se),
                       passed=bool(passed), runtime=time.perf_counter() - start, extra=extra)


# -- exact algebra -----------------------------------------------------------

def _stencil_at(vals: np.ndarray, centres) -> np.ndarray:
    """Lattice Laplacian of tensor-grid values at the given index tuples per axis."""
    dim = vals.ndim
    idx = np.ix_(*([np.asarray(centres)] * dim))
    out = -2 * dim * vals[idx]
    for i in range(dim):
        for s in (-1, 1):
            shifted = [np.asarray(centres)] * dim
            shifted[i] = shifted[i] + s
            out = out + vals[np.ix_(*shifted)]
    return out


def check_harmonicity(max_degree: int = 6, dims=(2, 3, 4), box: int = 20) -> list[TestVerdict]:
    """``sum_i D_i^2 Xi[psi] = 0`` for a basis of harmonic ``psi`` of degree <= ``max_degree``.

    Three layers per dimension: the exact polynomial identity, pointwise
    exact evaluation on the whole cube ``[-box, box]^d`` (d <= 3), and for
    d = 4 pointwise evaluation on the tensor subgrid ``{-box, -box/2, 0,
    box/2, box}^4``.  The lattice Laplacian of ``Xi[psi]`` has degree at
    most ``max_degree - 2 <= 4`` in each variable, so vanishing on a
    5-point tensor grid forces it to vanish identically, in particular on
    the whole cube.
    """
    out = []
    for d in dims:
        start = time.perf_counter()
        basis = [p for ell in range(max_degree + 1) for p in harmonic_basis(d, ell)]
        symbolic_bad = sum(1 for p in basis if not xi_transform(p).discrete_laplacian().is_zero())
        pointwise_bad = 0
        n_points = 0
        if d <= 3:
            axis = list(range(-box - 1, box + 2))
            for p in basis:
                vals, _ = grid_values(xi_transform(p), axis)
                lap = discrete_laplacian_grid(vals)
                pointwise_bad += int(np.count_nonzero(lap))
                n_points += lap.size
        else:
            nodes = [-box, -box // 2, 0, box // 2, box]
            axis = sorted({v + s for v in nodes for s in (-1, 0, 1)})
            centres = [axis.index(v) for v in nodes]
            for p in basis:
                vals, _ = grid_values(xi_transform(p), axis)
                lap = _stencil_at(vals, centres)
                pointwise_bad += int(np.count_nonzero(lap))
                n_points += lap.size
        out.append(_verdict(f"harmonicity d={d}", 0, symbolic_bad + pointwise_bad, 0,
                            symbolic_bad == 0 and pointwise_bad == 0, start,
                            basis_size=len(basis), points_checked=n_points,
                            symbolic_failures=symbolic_bad, pointwise_failures=pointwise_bad))
    start = time.perf_counter()
    z = ComplexPairPolynomial({(1, 0): 1})
    zb = z.conjugate()
    p3_ok = discrete_zk(3) == z * z * z - ComplexPairPolynomial({(0, 1): Fraction(1, 4)})
    p4_ok = discrete_zk(4) == z * z * z * z - z * zb
    out.append(_verdict("printed p_3, p_4", 1, float(p3_ok and p4_ok), 0, p3_ok and p4_ok, start,
                        p3=discrete_zk(3).to_string(), p4=discrete_zk(4).to_string()))
    return out


def check_pk_recursion(kmax: int = 12) -> list[TestVerdict]:
    """``D^2 P_k = k(k-1) P_{k-2}`` as polynomials for ``k <= kmax``."""
    start = time.perf_counter()
    bad = []
    for k in range(2, kmax + 1):
        lhs = symmetric_factorial_poly(k).second_difference(0)
        rhs = symmetric_factorial_poly(k - 2) * (k * (k - 1))
        if lhs != rhs:
            bad.append(k)
    return [_verdict("D^2 P_k = k(k-1) P_{k-2}", 0, len(bad), 0, not bad, start, failing_k=bad)]


# -- Monte Carlo CLTs ---------------------------------------------------------

def check_moment_clt(n_trials: int = 400, t: float = 1e4, kmax: int = 4, seed: int = DEFAULT_SEED,
                     rel_tol: float = 0.15, z: float = 3.0, corr_max: float = 0.15,
                     p_min: float = 0.01, jobs=None) -> list[TestVerdict]:
    """Variances, normality and cross-correlations of ``M_1..M_kmax``.

    Cross-correlation of two complex moments is the modulus of the complex
    correlation coefficient; the largest correlation between real or
    imaginary parts is reported alongside.
    """
    cfg = EnsembleConfig(d=2, mode="poisson", t=t, n_trials=n_trials, seed=seed,
                         statistics=("moments",), params={"kmax": kmax})
    recs = run_ensemble(cfg, jobs=jobs)
    out = []
    M = {k: column(recs, "M", k).astype(complex) for k in range(1, kmax + 1)}
    for k in range(1, kmax + 1):
        target = math.pi / (2 * (k + 1))
        for part, vals in (("Re", M[k].real), ("Im", M[k].imag)):
            v = gaussian_fit(vals, target, rel_tol=rel_tol, z=z, name=f"Var({part} M_{k})")
            out.append(v)
            start = time.perf_counter()
            p = v.extra["ks_pvalue"]
            out.append(_verdict(f"normality {part} M_{k}", p_min, p, 0, p > p_min, start,
                                ks_stat=v.extra["ks_stat"]))
    for j, k in itertools.combinations(range(1, kmax + 1), 2):
        start = time.perf_counter()
        a = M[j] - M[j].mean()
        b = M[k] - M[k].mean()
        c = np.mean(a * np.conj(b)) / math.sqrt(np.mean(np.abs(a) ** 2) * np.mean(np.abs(b) ** 2))
        parts = [correlation(x, y)[0] for x in (M[j].real, M[j].imag) for y in (M[k].real, M[k].imag)]
        out.append(_verdict(f"|corr(M_{j}, M_{k})|", corr_max, abs(c), 1 / math.sqrt(n_trials),
                            abs(c) <= corr_max, start,
                            max_component_corr=float(max(abs(x) for x in parts))))
    return out


def _phi_pairs():
    one = ExactPolynomial.constant(1, 2)
    re1, _ = discrete_zk_parts(1)
    re2, _ = discrete_zk_parts(2)
    # continuum targets: 1, x, x^2 - y^2
    X, Y = ExactPolynomial.variable(0, 2), ExactPolynomial.variable(1, 2)
    return [("1", one, one), ("Re p1", re1, X), ("Re p2", re2, X * X - Y * Y)]


def check_phi_covariance(n_trials: int = 2000, m: int = 16, times=(0.5, 1.0), seed: int = DEFAULT_SEED,
                         z: float = 3.0, const_rel: float = 0.10, jobs=None) -> list[TestVerdict]:
    """Empirical covariance matrix of ``Phi_A^m(psi, t)`` against exact ball integrals."""
    cfg = EnsembleConfig(d=2, mode="poisson", t=max(times) * m**2, n_trials=n_trials, seed=seed,
                         statistics=("phi",), params={"m": m, "times": list(times)})
    recs = run_ensemble(cfg, jobs=jobs)
    labels = []
    samples = []
    for label, _, cont in _phi_pairs():
        for s in times:
            labels.append((label, s, cont))
            samples.append(column(recs, f"phi[{label}]", float(s)).real)
    X = np.array(samples)
    out = []
    n = X.shape[1]
    for i, j in itertools.combinations_with_replacement(range(len(labels)), 2):
        start = time.perf_counter()
        a = X[i] - X[i].mean()
        b = X[j] - X[j].mean()
        prod = a * b
        est = float(prod.sum() / (n - 1))
        se = float(prod.std(ddof=1) / math.sqrt(n))
        li, si, pi = labels[i]
        lj, sj, pj = labels[j]
        target = gff.covariance_pairing(pi, si, pj, sj)
        out.append(_verdict(f"Cov(phi[{li},{si}], phi[{lj},{sj}])", target, est, se,
                            abs(est - target) <= z * se, start))
    for s in times:
        start = time.perf_counter()
        i = labels.index(("1", s, labels[0][2]))
        var = float(np.var(X[i], ddof=1))
        out.append(_verdict(f"Var(phi[1,{s}]) vs t", s, var, 0, abs(var - s) <= const_rel * s, start))
    return out


def lateness_particles(R: float, r1: float = 2.0, margin: float = 10.0) -> int:
    """Discrete-time particle count whose cluster covers the disk of radius ``r1 R``."""
    return int(math.ceil(math.pi * (r1 * R + margin) ** 2))


def check_lateness_clt(n_trials: int = 300, R: float = 48, seed: int = DEFAULT_SEED,
                       rel_tol: float = 0.25, z: float = 3.0, jobs=None) -> list[TestVerdict]:
    """Sample variance and mean of ``X_R`` for one ``a_1`` bump on [1, 2]."""
    phi = AnnularTestFunction.single_mode(1, 1.0, 1.0, 2.0)
    target = v_quadrature(phi)
    cfg = EnsembleConfig(d=2, mode="discrete", t=lateness_particles(R), n_trials=n_trials, seed=seed,
                         statistics=("lateness",), params={"R": R})
    recs = run_ensemble(cfg, jobs=jobs)
    x = column(recs, "X_R").astype(complex)
    v = gaussian_fit(x.real, target, rel_tol=rel_tol, z=z, name="Var(X_R) vs V_0")
    start = time.perf_counter()
    mean = float(x.real.mean())
    se = float(x.real.std(ddof=1) / math.sqrt(len(x)))
    return [v, _verdict("mean(X_R)", 0.0, mean, se, abs(mean) <= z * se, start,
                        max_imag=float(np.abs(x.imag).max()))]


def qv_differences(m: int, n_trials: int, t: float = 1.0, seed: int = DEFAULT_SEED) -> np.ndarray:
    re2, _ = discrete_zk_parts(2)
    psi = rescale_to_mesh(re2, m, 2)
    out = np.empty(n_trials)
    for s in range(1, n_trials + 1):
        h = qv_history(psi, m, t, seed=seed, stream=s)
        out[s - 1] = quadratic_variation_check(h, psi, m, t).difference
    return out


def check_quadratic_variation(n_trials: int = 1000, ms=(16, 32), t: float = 1.0,
                              seed: int = DEFAULT_SEED, lo: float = 2.0, hi: float = 8.0) -> list[TestVerdict]:
    """Mean squared gap between walk and Riemann quadratic variations shrinks like ``m^{-d}``."""
    start = time.perf_counter()
    msq = []
    ses = []
    for i, m in enumerate(ms):
        dif = qv_differences(m, n_trials, t, seed=seed + i)
        sq = dif * dif
        msq.append(float(sq.mean()))
        ses.append(float(sq.std(ddof=1) / math.sqrt(n_trials)))
    ratio = msq[0] / msq[1]
    rse = ratio * math.hypot(ses[0] / msq[0], ses[1] / msq[1])
    return [_verdict(f"QV gap ratio m={ms[0]}/m={ms[1]}", 4.0, ratio, rse, lo <= ratio <= hi, start,
                     mean_sq=msq, se_by_m=ses)]


def check_fkg(n_trials: int = 1000, t: float = 1000.0, seed: int = DEFAULT_SEED, z: float = 3.0,
              boxes=None, jobs=None) -> list[TestVerdict]:
    """Occupation counts of two disjoint boxes are nonnegatively correlated."""
    from .stats import DEFAULT_BOXES

    boxes = DEFAULT_BOXES if boxes is None else boxes
    start = time.perf_counter()
    histories = [grow(2, t=t, seed=seed, stream=s) for s in range(1, n_trials + 1)]
    F, G = box_count(boxes[0]), box_count(boxes[1])
    v = fkg_correlation(F, G, histories, t, z=z)
    v.runtime = time.perf_counter() - start
    return [v]


def check_vdc(kmax: int = 4, t_small: float = 1e5, t_large: float = 1e6, max_change: float = 0.05):
    out = []
    for row in vdc_stability(kmax, t_small, t_large):
        start = time.perf_counter()
        ok = math.isfinite(row["sup_large"]) and row["rel_change"] < max_change
        out.append(_verdict(f"vdC sup k={row['k']} ({row['kind']})", row["sup_small"], row["sup_large"], 0,
                            ok, start, **{k: v for k, v in row.items() if k not in ("k", "kind")}))
    return out


def check_sandpile(t: float = 1e4, tol: float = 1e-10, kmax: int = 4, max_width: float = 4.0,
                   mass_tol: float = 1e-6) -> list[TestVerdict]:
    start = time.perf_counter()
    f = relax(t, 2, tol=tol)
    out = []
    total = f.total_mass()
    out.append(_verdict("sandpile mass", t, total, 0, abs(total - t) <= mass_tol, start))
    start = time.perf_counter()
    ok = bool(f.mass.min() >= 0 and f.mass.max() <= 1)
    out.append(_verdict("0 <= w <= 1", 1, float(f.mass.max()), 0, ok, start, min=float(f.mass.min())))
    start = time.perf_counter()
    inner, outer, width = shape_report(f)
    out.append(_verdict("annulus width", max_width, width, 0, width <= max_width, start,
                        inner=inner, outer=outer))
    for k in range(1, kmax + 1):
        start = time.perf_counter()
        val, bound = harmonic_moment(f, discrete_zk(k))
        out.append(_verdict(f"|sum w p_{k}|", bound, abs(val), 0, abs(val) <= bound, start))
    start = time.perf_counter()
    f1 = relax(3, 1, tol=tol)
    w_exact, u_exact = exact_1d(3)
    got_w = f1.as_dict()
    got_u = {int(x[0]): float(u) for x, u in zip(f1.sites, f1.odometer)}
    err = max(max(abs(got_w.get((x,), 0.0) - w) for x, w in w_exact.items()),
              max(abs(got_u.get(x, 0.0) - u) for x, u in u_exact.items()),
              max(abs(w) for x, w in got_w.items() if x[0] not in w_exact) if len(got_w) > len(w_exact) else 0.0)
    out.append(_verdict("1-D t=3 exact", 0, err, 0, err <= 1e-9, start))
    return out


def check_gff(tol: float = 1e-8) -> list[TestVerdict]:
    out = []
    start = time.perf_counter()
    worst = 0.0
    for d in (2, 3):
        for ell in range(0, 7):
            for kind in (gff.AUGMENTED, gff.ORDINARY):
                if kind == gff.ORDINARY and ell == 0:
                    continue
                for R in (0.5, 1.0, 2.0):
                    a = gff.mode_variance(kind, d, ell, R)
                    b = gff.mode_variance_quadrature(kind, d, ell, R)
                    worst = max(worst, abs(a - b) / abs(a))
    out.append(_verdict("mode variance vs quadrature", 0, worst, 0, worst <= tol, start))
    start = time.perf_counter()
    worst = 0.0
    for d in (2, 3):
        for ell in range(1, 7):
            for region in ("inside", "outside", "whole_R1"):
                a = gff.dirichlet_energy(ell, d, 1.5, region)
                b = gff.dirichlet_energy_quadrature(ell, d, 1.5, region)
                worst = max(worst, abs(a - b) / abs(a))
    out.append(_verdict("Dirichlet energy vs quadrature", 0, worst, 0, worst <= tol, start))
    start = time.perf_counter()
    f1, f2 = gff.relative_entropy_sigma(1.0), gff.relative_entropy_sigma(2.0)
    direct2 = (0.25 - 1) / 2 + math.log(2)
    ok = f1 == 0 and abs(f2 - direct2) <= 1e-15 and abs(f2 - 0.318147) < 5e-7
    out.append(_verdict("F(1), F(2)", 0.318147, f2, 0, ok, start, F1=f1))
    start = time.perf_counter()
    sums = gff.entropy_series_partial_sums(10**6)
    limit = 0.5 * 0.5772156649015329  # Euler's constant / 2
    tails = [abs(limit - sums[10**j - 1]) for j in range(2, 7)]
    # each tail is below the 1/(4J) bound and the sums increase to the limit
    ok = all(tail <= 1 / (4 * 10**j) for tail, j in zip(tails, range(2, 7))) and bool(np.all(np.diff(sums) > 0))
    out.append(_verdict("entropy series converges", limit, float(sums[-1]), 0, ok, start, tails=tails))
    return out


CHECKS = {
    "harmonic": check_harmonicity,
    "pk": check_pk_recursion,
    "clt": check_moment_clt,
    "phi": check_phi_covariance,
    "lateness": check_lateness_clt,
    "qv": check_quadratic_variation,
    "fkg": check_fkg,
    "vdc": check_vdc,
    "sandpile": check_sandpile,
    "gff": check_gff,
}
