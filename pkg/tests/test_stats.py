import math

import numpy as np
import pytest

from idlalab.cluster import grow
from idlalab.poly import discrete_zk
from idlalab.stats import (CSV_COLUMNS, DEFAULT_BOXES, DegenerateSample, EnsembleConfig, EnsembleError,
                           IncreasingStatistic, UnregisteredStatistic, box_count, column, correlation,
                           fkg_correlation, gaussian_fit, neg_absorption_time, records_to_csv, run_ensemble,
                           variance_se, vdc_scan, vdc_stability)


# -- configuration -------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        EnsembleConfig(n_trials=1)
    with pytest.raises(ValueError):
        EnsembleConfig(mode="lazy")
    with pytest.raises(ValueError):
        EnsembleConfig(tolerances={"rel": 0.0})
    with pytest.raises(ValueError):
        EnsembleConfig(statistics=("nonsense",))


def test_config_json_roundtrip():
    cfg = EnsembleConfig(d=2, mode="discrete", t=50, n_trials=3, seed=9, statistics=("count", "moments"),
                         params={"kmax": 3}, tolerances={"rel_tol": 0.2})
    back = EnsembleConfig.from_json_obj(cfg.to_json_obj())
    assert back == cfg
    assert back.digest() == cfg.digest()
    assert EnsembleConfig(seed=10).digest() != EnsembleConfig(seed=11).digest()


# -- ensembles -------------------------------------------------------------------

def test_single_particle_trials():
    cfg = EnsembleConfig(d=2, mode="discrete", t=1, n_trials=2, seed=1, statistics=("count", "moments"),
                         params={"kmax": 2})
    recs = run_ensemble(cfg, jobs=1)
    assert [r.stream for r in recs] == [1, 2]
    for r in recs:
        assert r.get("count") == 1
        assert r.get("M", 1) == 0 and r.get("M", 2) == 0


def test_csv_is_deterministic(tmp_path):
    cfg = EnsembleConfig(d=2, mode="poisson", t=200.0, n_trials=4, seed=5, statistics=("count", "moments"),
                         params={"kmax": 3})
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    recs = run_ensemble(cfg, out_csv=str(a), jobs=1)
    run_ensemble(cfg, out_csv=str(b), jobs=2)
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert text.startswith("# idlalab ")
    assert f"# config {cfg.digest()}" in text
    assert ",".join(CSV_COLUMNS) in text
    assert records_to_csv(recs, cfg) == text


def test_stream_statistics_look_independent():
    cfg = EnsembleConfig(d=2, mode="poisson", t=300.0, n_trials=400, seed=21, statistics=("moments",),
                         params={"kmax": 1})
    x = column(run_ensemble(cfg, jobs=1), "M", 1).real
    rho, se = correlation(x[:-1], x[1:])
    assert abs(rho) <= 3 * se
    rng = np.random.default_rng(0)
    rho_p, se_p = correlation(x, rng.permutation(x))
    assert abs(rho_p) <= 3 * se_p


def test_failed_trials_raise(monkeypatch):
    from idlalab import stats

    def boom(config, stream, history, values):
        raise RuntimeError("kaput")

    monkeypatch.setitem(stats.TRIAL_STATISTICS, "count", boom)
    with pytest.raises(EnsembleError):
        run_ensemble(EnsembleConfig(n_trials=3, t=10.0), jobs=1)


# -- Gaussian fits -----------------------------------------------------------------

def test_gaussian_fit_calibration():
    x = np.random.default_rng(1).standard_normal(100_000)
    v = gaussian_fit(x, 1.0, rel_tol=0.05)
    assert v.passed
    assert v.extra["ks_pvalue"] > 0.001
    assert v.se == pytest.approx(math.sqrt(2 / len(x)), rel=0.05)


def test_gaussian_fit_rejects_wrong_target():
    x = np.random.default_rng(2).standard_normal(10_000) * 2
    assert not gaussian_fit(x, 1.0).passed


def test_gaussian_fit_degenerate():
    with pytest.raises(DegenerateSample):
        gaussian_fit(np.zeros(100), 1e-12)
    with pytest.raises(ValueError):
        gaussian_fit(np.ones(10), 1.0)


def test_variance_se_for_normal():
    x = np.random.default_rng(3).standard_normal(50_000)
    assert variance_se(x) == pytest.approx(math.sqrt(2 / 50_000), rel=0.05)


# -- FKG -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def histories():
    return [grow(2, t=1000.0, seed=31, stream=s) for s in range(1, 301)]


def test_fkg_identical_statistics(histories):
    F = box_count(DEFAULT_BOXES[0])
    v = fkg_correlation(F, F, histories, 1000.0)
    assert v.estimate == pytest.approx(1.0)
    assert v.passed


def test_fkg_default_boxes_are_random(histories):
    vals = [box_count(DEFAULT_BOXES[0]).evaluate(h, 1000.0) for h in histories]
    assert np.std(vals) > 0


def test_fkg_negated_flips_direction(histories):
    F, G = box_count(DEFAULT_BOXES[0]), box_count(DEFAULT_BOXES[1])
    up = fkg_correlation(F, G, histories, 1000.0)
    down = fkg_correlation(F, G.negated(), histories, 1000.0)
    assert down.estimate == pytest.approx(-up.estimate)
    assert down.extra["direction"] == "<="
    assert down.passed


def test_fkg_absorption_time(histories):
    F = box_count(DEFAULT_BOXES[0])
    G = neg_absorption_time((17, 0), 1000.0)
    assert fkg_correlation(F, G, histories, 1000.0).passed


def test_fkg_constant_statistic_is_degenerate(histories):
    inner = box_count(((-2, -2), (2, 2)))
    with pytest.raises(DegenerateSample):
        fkg_correlation(inner, box_count(DEFAULT_BOXES[0]), histories, 1000.0)


def test_fkg_registry_is_closed(histories):
    with pytest.raises(UnregisteredStatistic):
        fkg_correlation(IncreasingStatistic("radius", ()), box_count(DEFAULT_BOXES[0]), histories, 1000.0)
    with pytest.raises(UnregisteredStatistic):
        fkg_correlation(lambda h, t: 1.0, box_count(DEFAULT_BOXES[0]), histories, 1000.0)


def test_box_count_monotone_in_time(histories):
    F = box_count(DEFAULT_BOXES[0])
    for h in histories[:20]:
        vals = [F.evaluate(h, t) for t in (200.0, 500.0, 800.0, 1000.0)]
        assert vals == sorted(vals)


# -- van der Corput ------------------------------------------------------------------

def brute_force_vdc(k, t_max, t_min, use_pk):
    """Evaluate the same suprema on every lattice radius directly."""
    R = int(math.sqrt(t_max / math.pi)) + 1
    pts = [(x, y) for x in range(-R, R + 1) for y in range(-R, R + 1)]
    n2s = sorted({x * x + y * y for x, y in pts if math.pi * (x * x + y * y) <= t_max})
    f = discrete_zk(k).evaluator() if use_pk else None
    best = 0.0
    for t in [t_min] + [math.pi * n for n in n2s if math.pi * n >= t_min]:
        inside = np.array([p for p in pts if math.pi * (p[0] ** 2 + p[1] ** 2) <= t])
        if k == 0:
            val = abs(len(inside) - t) * t ** (-1 / 3)
        else:
            z = inside[:, 0] + 1j * inside[:, 1]
            s = f(inside.astype(float)).sum() if use_pk else (z**k).sum()
            val = abs(s) * t ** (-1 / 3 - k / 2)
        best = max(best, val)
    return best


def test_vdc_disk_of_radius_one():
    row = vdc_scan(0, math.pi, t_min=math.pi)[0]
    assert row.sup == pytest.approx(abs(5 - math.pi) * math.pi ** (-1 / 3))
    assert abs(5 - math.pi) == pytest.approx(1.858, abs=1e-3)


def test_vdc_moments_below_four_vanish():
    rows = vdc_scan(3, 5000.0)
    for r in rows:
        if r.k in (1, 2, 3):
            assert r.sup == 0.0


@pytest.mark.parametrize("k,use_pk", [(4, False), (4, True), (5, True)])
def test_vdc_matches_brute_force_sums(k, use_pk):
    rows = vdc_scan(k, 800.0)
    row = next(r for r in rows if r.k == k and r.kind == ("pk" if use_pk else "zk"))
    assert row.sup == pytest.approx(brute_force_vdc(k, 800.0, 10.0, use_pk), rel=1e-9, abs=1e-12)


def test_vdc_count_at_least_brute_force_right_limits():
    row = vdc_scan(0, 800.0)[0]
    assert row.sup >= brute_force_vdc(0, 800.0, 10.0, False) - 1e-12


def test_vdc_stability_rows():
    rows = vdc_stability(2, 2000.0, 20000.0)
    assert {r["kind"] for r in rows} == {"count", "zk", "pk"}
    for r in rows:
        assert r["sup_large"] >= r["sup_small"]
        assert r["rel_change"] >= 0
