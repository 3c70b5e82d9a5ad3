"""Ensembles of independent trials and the statistical verdicts built on them."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats as sps

from . import __version__
from .cluster import DISCRETE, POISSON, ClusterHistory, grow, lateness
from .observables import (AnnularTestFunction, ObservableRecord, complex_moments,
                          lateness_statistic, phi_A)
from .poly import ExactPolynomial, discrete_zk_parts, rescale_to_mesh

CSV_COLUMNS = ("seed", "stream", "t", "name", "k", "re", "im")


class EnsembleError(RuntimeError):
    pass


class DegenerateSample(ValueError):
    pass


class UnregisteredStatistic(TypeError):
    pass


# -- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class EnsembleConfig:
    """What to simulate and which statistics to record per trial.

    ``t`` is the particle count in discrete mode and the Poisson time
    otherwise.  ``statistics`` names entries of :data:`TRIAL_STATISTICS`;
    ``params`` carries their knobs (``kmax``, ``m``, ``R``, ...).
    """

    d: int = 2
    mode: str = POISSON
    t: float = 1000.0
    n_trials: int = 100
    seed: int = 0
    statistics: tuple = ("count",)
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_trials < 2:
            raise ValueError("an ensemble needs at least 2 trials")
        if self.mode not in (DISCRETE, POISSON):
            raise ValueError(f"unknown mode {self.mode!r}")
        for name, tol in self.tolerances.items():
            if not tol > 0:
                raise ValueError(f"tolerance {name} must be positive")
        unknown = [s for s in self.statistics if s not in TRIAL_STATISTICS]
        if unknown:
            raise ValueError(f"unknown statistics {unknown}")

    def to_json_obj(self) -> dict:
        obj = asdict(self)
        obj["statistics"] = list(self.statistics)
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "EnsembleConfig":
        obj = dict(obj)
        obj["statistics"] = tuple(obj.get("statistics", ("count",)))
        return cls(**obj)

    def digest(self) -> str:
        blob = json.dumps(self.to_json_obj(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class TestVerdict:
    """Outcome of one statistical check; ``passed`` is decided by the check itself."""

    name: str
    target: float
    estimate: float
    se: float
    passed: bool
    runtime: float = 0.0
    extra: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def to_json_obj(self) -> dict:
        return asdict(self)


# -- per-trial statistics ----------------------------------------------------

def _grow_for(config: EnsembleConfig, stream: int, horizon: Optional[float] = None) -> ClusterHistory:
    t = config.t if horizon is None else horizon
    if config.mode == DISCRETE:
        return grow(config.d, n=int(t), seed=config.seed, stream=stream)
    return grow(config.d, t=t, seed=config.seed, stream=stream)


def _stat_count(config, stream, history, values):
    values["count"] = float(len(history))


def _stat_moments(config, stream, history, values):
    kmax = int(config.params.get("kmax", 4))
    values["M"] = complex_moments(history, history.t_max, kmax)


def _phi_family(config):
    """``(label, psi1)`` pairs for the Phi statistic: 1, Re p_1, Re p_2 by default."""
    d = config.d
    one = ExactPolynomial.constant(1, d)
    if d != 2:
        return [("1", one), ("x1", ExactPolynomial.variable(0, d))]
    return [("1", one), ("Re p1", discrete_zk_parts(1)[0]), ("Re p2", discrete_zk_parts(2)[0])]


def _stat_phi(config, stream, history, values):
    m = int(config.params.get("m", 16))
    times = [float(s) for s in config.params.get("times", (0.5, 1.0))]
    for label, psi1 in _phi_family(config):
        psi = rescale_to_mesh(psi1, m, psi1.degree)
        values[f"phi[{label}]"] = {s: phi_A(history, psi, m, s) for s in times}


def default_test_function() -> AnnularTestFunction:
    return AnnularTestFunction.single_mode(1, 1.0, 1.0, 2.0)


def _stat_lateness(config, stream, history, values):
    R = float(config.params.get("R", 48))
    x = lateness_statistic(lateness(history), default_test_function(), R)
    values["X_R"] = complex(x.value, x.imag)


def _stat_boxes(config, stream, history, values):
    for label, box in zip(("X", "Y"), config.params.get("boxes", DEFAULT_BOXES)):
        values[f"box[{label}]"] = float(box_count(box).evaluate(history, config.t))


TRIAL_STATISTICS: dict[str, Callable] = {
    "count": _stat_count,
    "moments": _stat_moments,
    "phi": _stat_phi,
    "lateness": _stat_lateness,
    "boxes": _stat_boxes,
}


def _horizon(config: EnsembleConfig) -> float:
    if "phi" in config.statistics:
        m = int(config.params.get("m", 16))
        times = config.params.get("times", (0.5, 1.0))
        return max(config.t, m**config.d * max(times))
    return config.t


def run_trial(config: EnsembleConfig, stream: int) -> ObservableRecord:
    history = _grow_for(config, stream, _horizon(config))
    values: dict = {}
    for name in config.statistics:
        TRIAL_STATISTICS[name](config, stream, history, values)
    return ObservableRecord(seed=config.seed, stream=stream, t=config.t, values=values)


def _run_trial_safe(args):
    config, stream = args
    try:
        return stream, run_trial(config, stream), None
    except Exception as exc:  # recorded, judged by the caller
        return stream, None, f"{type(exc).__name__}: {exc}"


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("IDLA_JOBS", "1")))
    except ValueError:
        return 1


def run_ensemble(config: EnsembleConfig, out_csv: Optional[str] = None,
                 jobs: Optional[int] = None) -> list[ObservableRecord]:
    """Run trials on streams ``1..N`` and return their records in stream order.

    Rows are appended to ``out_csv`` as trials finish (in order), so an
    interrupted run keeps everything completed so far.  Failed trials are
    skipped and listed as trailing comment lines; more than 1% failures raise
    :class:`EnsembleError`.
    """
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    tasks = [(config, s) for s in range(1, config.n_trials + 1)]
    records: list[ObservableRecord] = []
    failures: list[tuple[int, str]] = []
    fh = open(out_csv, "w", newline="") if out_csv else None
    try:
        writer = None
        if fh is not None:
            write_csv_header(fh, config)
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
        if jobs == 1:
            results = map(_run_trial_safe, tasks)
            pool = None
        else:
            pool = ProcessPoolExecutor(max_workers=jobs)
            results = pool.map(_run_trial_safe, tasks, chunksize=max(1, len(tasks) // (8 * jobs)))
        try:
            for stream, rec, err in results:
                if err is not None:
                    failures.append((stream, err))
                    continue
                records.append(rec)
                if writer is not None:
                    for row in rec.rows():
                        writer.writerow(format_row(row))
                    fh.flush()
        finally:
            if pool is not None:
                pool.shutdown(cancel_futures=True)
        if fh is not None and failures:
            for stream, err in failures:
                fh.write(f"# failed stream {stream}: {err}\n")
    finally:
        if fh is not None:
            fh.close()
    if len(failures) > 0.01 * config.n_trials:
        raise EnsembleError(f"{len(failures)} of {config.n_trials} trials failed; first: {failures[0][1]}")
    return records


def write_csv_header(fh, config: EnsembleConfig) -> None:
    fh.write(f"# idlalab {__version__}\n")
    fh.write(f"# seed {config.seed} streams 1..{config.n_trials}\n")
    fh.write(f"# config {config.digest()}\n")


def format_row(row) -> list[str]:
    seed, stream, t, name, k, re, im = row
    return [str(seed), str(stream), repr(float(t)), name, str(k), repr(float(re)), repr(float(im))]


def records_to_csv(records: Sequence[ObservableRecord], config: EnsembleConfig) -> str:
    buf = io.StringIO()
    write_csv_header(buf, config)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in records:
        for row in rec.rows():
            w.writerow(format_row(row))
    return buf.getvalue()


def column(records: Sequence[ObservableRecord], name: str, k=None) -> np.ndarray:
    """One statistic across the ensemble (complex values stay complex)."""
    vals = [r.get(name, k) for r in records]
    arr = np.array(vals)
    if np.iscomplexobj(arr) and not np.any(arr.imag):
        arr = arr.real
    return arr


# -- Gaussian fits -----------------------------------------------------------

def variance_se(samples: np.ndarray) -> float:
    """Standard error of the sample variance from the fourth central moment."""
    x = np.asarray(samples, dtype=np.float64)
    n = len(x)
    c = x - x.mean()
    m2 = float(np.mean(c * c))
    m4 = float(np.mean(c**4))
    return math.sqrt(max(m4 - m2 * m2, 0.0) / n)


def gaussian_fit(samples, target_variance: float, rel_tol: float = 0.15, z: float = 3.0,
                 name: str = "variance") -> TestVerdict:
    """Compare the sample variance with ``target_variance``.

    Passes when ``|var - target| <= max(rel_tol * target, z * se)``.  The
    Kolmogorov-Smirnov distance to the fitted normal and its p-value are
    reported in ``extra`` but do not decide the verdict.
    """
    start = time.perf_counter()
    x = np.asarray(samples, dtype=np.float64)
    if len(x) < 50:
        raise ValueError("gaussian_fit needs at least 50 samples")
    var = float(np.var(x, ddof=1))
    if not var > 0:
        raise DegenerateSample("samples have zero variance")
    se = variance_se(x)
    allowed = max(rel_tol * target_variance, z * se)
    ks = sps.kstest(x, "norm", args=(float(x.mean()), math.sqrt(var)))
    return TestVerdict(name=name, target=float(target_variance), estimate=var, se=se,
                       passed=abs(var - target_variance) <= allowed,
                       runtime=time.perf_counter() - start,
                       extra={"allowed": allowed, "mean": float(x.mean()),
                              "mean_se": math.sqrt(var / len(x)),
                              "ks_stat": float(ks.statistic), "ks_pvalue": float(ks.pvalue)})


def correlation(x, y) -> tuple[float, float]:
    """Pearson correlation and its large-sample standard error ``(1 - rho^2)/sqrt(N)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    sx, sy = x.std(), y.std()
    if sx == 0 or sy == 0:
        raise DegenerateSample("constant statistic")
    rho = float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))
    rho = min(1.0, max(-1.0, rho))
    return rho, (1 - rho * rho) / math.sqrt(len(x))


# -- monotone statistics for FKG ---------------------------------------------

DEFAULT_BOXES = (((14, -4), (22, 4)), ((-22, -4), (-14, 4)))


@dataclass(frozen=True)
class IncreasingStatistic:
    """A functional of the growth history that is increasing (``sign=+1``) or its negation.

    Instances come only from the registry below; each registered kind is
    increasing in the set of occupied sites at every time.
    """

    kind: str
    params: tuple
    sign: int = 1

    def negated(self) -> "IncreasingStatistic":
        return IncreasingStatistic(self.kind, self.params, -self.sign)

    def evaluate(self, history: ClusterHistory, t: float) -> float:
        return self.sign * _INCREASING[self.kind](history, t, *self.params)


def _count_in_box(history, t, lo, hi):
    sites = history.sites_at(t)
    inside = np.all((sites >= np.array(lo)) & (sites <= np.array(hi)), axis=1)
    return float(inside.sum())


def _neg_absorption_time(history, t, x, cap):
    s = history.index_of(x)
    if s == 0:
        return -float(cap)
    F = float(history.absorption_times()[s - 1])
    return -min(F, float(cap))


# Monotonicity notes:
#   box_count: #(A_T(t) n box) only grows when sites are added.
#   neg_absorption_time: the absorption time of x can only decrease when
#     the cluster is larger, so its negative (capped at t_max) increases.
_INCREASING = {
    "box_count": _count_in_box,
    "neg_absorption_time": _neg_absorption_time,
}


def box_count(box) -> IncreasingStatistic:
    lo, hi = box
    return IncreasingStatistic("box_count", (tuple(lo), tuple(hi)))


def neg_absorption_time(x, cap: float) -> IncreasingStatistic:
    return IncreasingStatistic("neg_absorption_time", (tuple(x), float(cap)))


def fkg_correlation(F: IncreasingStatistic, G: IncreasingStatistic, histories: Sequence[ClusterHistory],
                    t: float, z: float = 3.0) -> TestVerdict:
    """One-sided check that ``F`` and ``G`` are nonnegatively correlated.

    When exactly one of them is negated the sign of the test flips.
    """
    start = time.perf_counter()
    for S in (F, G):
        if not isinstance(S, IncreasingStatistic) or S.kind not in _INCREASING:
            raise UnregisteredStatistic(f"{S!r} is not a registered increasing statistic")
    fx = np.array([F.evaluate(h, t) for h in histories])
    gx = np.array([G.evaluate(h, t) for h in histories])
    rho, se = correlation(fx, gx)
    same = F.sign == G.sign
    passed = rho >= -z * se if same else rho <= z * se
    return TestVerdict(name=f"fkg[{F.kind},{G.kind}]", target=0.0, estimate=rho, se=se,
                       passed=bool(passed), runtime=time.perf_counter() - start,
                       extra={"z": z, "direction": ">=" if same else "<=", "n": len(histories)})


# -- van der Corput scan -----------------------------------------------------

@dataclass(frozen=True)
class VdcRow:
    k: int
    kind: str          # "count", "zk" or "pk"
    sup: float
    argmax_t: float
    t_max: float


def _disk_points(t_max: float) -> np.ndarray:
    rmax = math.sqrt(t_max / math.pi)
    R = int(math.floor(rmax))
    ax = np.arange(-R, R + 1, dtype=np.int64)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    n2 = (pts * pts).sum(axis=1)
    keep = math.pi * n2 <= t_max
    return pts[keep]


def _group_sums(order_n2: np.ndarray, vals) -> tuple[np.ndarray, list]:
    """Cumulative sums of ``vals`` at the end of each block of equal ``n2``."""
    ends = np.flatnonzero(np.diff(order_n2)) if len(order_n2) else np.array([], dtype=np.int64)
    ends = np.append(ends, len(order_n2) - 1)
    if vals.dtype != object and len(vals) and \
            float(np.abs(vals).max()) * len(vals) >= 2.0**62:
        vals = vals.astype(object)
    # exact running sums: int64 cannot overflow after the guard above
    return ends, list(np.cumsum(vals)[ends])


def vdc_scan(kmax: int, t_max: float, t_min: float = 10.0, include_pk: bool = True) -> list[VdcRow]:
    """Exact suprema of the lattice-disk errors over ``t in [t_min, t_max]``.

    For ``k = 0`` the quantity is ``t^{-1/3} |#{pi|z|^2 <= t} - t|``, for
    ``k >= 1`` it is ``t^{-1/3 - k/2} |sum z^k|`` (and the same with
    ``p_k``).  Between consecutive radii the count error is linear and the
    sums are constant, so the supremum is attained at a jump (from the left
    or the right) or at an endpoint; all of those are evaluated exactly
    with integer arithmetic.
    """
    from .observables import gaussian_powers
    from .poly import discrete_zk

    pts = _disk_points(t_max)
    n2 = (pts * pts).sum(axis=1)
    order = np.argsort(n2, kind="stable")
    pts, n2 = pts[order], n2[order]
    ends, _ = _group_sums(n2, np.ones(len(n2), dtype=np.int64))
    radii2 = n2[ends].astype(np.float64)
    counts = (ends + 1).astype(np.float64)
    jump_t = math.pi * radii2
    # count just before the first jump at or after t_min
    start_count = float(np.searchsorted(math.pi * n2.astype(np.float64), t_min, side="right"))
    rows = []

    # k = 0: both sides of every jump inside [t_min, t_max], plus both endpoints
    # (a left limit counts only when its jump lies strictly inside the range)
    sel = (jump_t >= t_min) & (jump_t <= t_max)
    left = (jump_t > t_min) & (jump_t <= t_max)
    prev_counts = np.concatenate([[0.0], counts[:-1]])
    cand_t = np.concatenate([jump_t[sel], jump_t[left], [t_min, t_max]])
    end_count = float(np.searchsorted(math.pi * n2.astype(np.float64), t_max, side="right"))
    cand_c = np.concatenate([counts[sel], prev_counts[left], [start_count, end_count]])
    score = np.abs(cand_c - cand_t) * cand_t ** (-1 / 3)
    i = int(np.argmax(score))
    rows.append(VdcRow(0, "count", float(score[i]), float(cand_t[i]), t_max))
    if kmax < 1:
        return rows

    powers = gaussian_powers(pts[:, 0], pts[:, 1], kmax)
    kinds = [("zk", k, powers[k]) for k in range(1, kmax + 1)]
    if include_pk:
        for k in range(1, kmax + 1):
            ints, den = _pk_integer_values(discrete_zk(k), pts)
            kinds.append(("pk", k, ints + (den,)))
    for kind, k, data in kinds:
        den = data[2] if len(data) > 2 else 1
        _, sre = _group_sums(n2, data[0])
        _, sim = _group_sums(n2, data[1])
        # sums are constant on [pi*n_j, pi*n_{j+1}) so the left end wins
        best, arg = 0.0, t_min
        first = int(np.searchsorted(jump_t, t_min, side="right")) - 1
        for j in range(max(first, 0), len(ends)):
            tj = max(float(jump_t[j]), t_min)
            if tj > t_max:
                break
            mag = math.hypot(int(sre[j]) / den, int(sim[j]) / den)
            val = mag * tj ** (-1 / 3 - k / 2)
            if val > best:
                best, arg = val, tj
        rows.append(VdcRow(k, kind, best, arg, t_max))
    return rows


def _pk_integer_values(p, pts):
    """Exact values of ``D * p_k`` at ``pts`` as integer arrays, and ``D``."""
    re_poly, im_poly = p.to_xy()
    den = 1
    for poly in (re_poly, im_poly):
        den = math.lcm(den, poly.integer_form()[1])
    deg = max(re_poly.degree, im_poly.degree, 0)
    x = pts[:, 0].astype(object) if deg > 6 else pts[:, 0]
    y = pts[:, 1].astype(object) if deg > 6 else pts[:, 1]
    xp = [np.ones_like(x)]
    yp = [np.ones_like(y)]
    for _ in range(deg):
        xp.append(xp[-1] * x)
        yp.append(yp[-1] * y)
    out = []
    for poly in (re_poly, im_poly):
        acc = np.zeros_like(x)
        for (a, b), c in poly.terms.items():
            coef = c * den
            acc = acc + int(coef) * xp[a] * yp[b]
        out.append(acc)
    return (out[0], out[1]), den


def vdc_stability(kmax: int, t_small: float = 1e5, t_large: float = 1e6) -> list[dict]:
    """Running suprema at two horizons and their relative change.

    The relative change is defined as 0 when both suprema are 0 (sums that
    vanish by lattice symmetry).  The suprema over the last decade of each
    horizon (``tail_small``, ``tail_large``) are reported alongside, since
    the running suprema are usually attained at small ``t``.
    """
    small = {(r.k, r.kind): r for r in vdc_scan(kmax, t_small)}
    large = {(r.k, r.kind): r for r in vdc_scan(kmax, t_large)}
    tail_s = {(r.k, r.kind): r for r in vdc_scan(kmax, t_small, t_min=t_small / 10)}
    tail_l = {(r.k, r.kind): r for r in vdc_scan(kmax, t_large, t_min=t_large / 10)}
    out = []
    for key, big in large.items():
        a = small[key].sup
        b = big.sup
        rel = 0.0 if a == b == 0 else abs(b - a) / max(abs(a), abs(b))
        out.append({"k": key[0], "kind": key[1], "sup_small": a, "sup_large": b,
                    "argmax_large": big.argmax_t, "rel_change": rel,
                    "tail_small": tail_s[key].sup, "tail_large": tail_l[key].sup})
    return out
