"""Command-line entry point ``idlalab``.

Every subcommand accepts ``--config FILE`` (a :class:`~idlalab.io.RunConfig`
JSON document); explicit flags override values from the file.  Results go to
stdout as JSON unless an output path is given.
"""
from __future__ import annotations

import argparse
import inspect
import json
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__, gff
from .cluster import DISCRETE, POISSON, ClusterHistory, grow, lateness, radius_for_volume, signed_discrepancy
from .io import (RunConfig, SnapshotError, load_snapshot, render_lateness, render_symmetric_difference,
                 save_snapshot)
from .observables import AnnularTestFunction, complex_moments, lateness_statistic, phi_A, v_quadrature
from .poly import discrete_zk, harmonic_basis, rescale_to_mesh, xi_transform
from .sandpile import relax, shape_report

VERIFY_CHOICES = ("clt", "fkg", "vdc", "sandpile", "qv", "harmonic", "pk", "phi", "lateness", "gff")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def _emit(obj, out: Optional[str] = None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _key_value(text: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    try:
        return key, float(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{value!r} is not a number") from exc


def _common(p: argparse.ArgumentParser, cluster: bool = True) -> None:
    p.add_argument("--config", help="RunConfig JSON file; flags override its values")
    p.add_argument("--dump-config", metavar="PATH", help="write the effective RunConfig as JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--stream", type=int)
    p.add_argument("--out", help="output path")
    if cluster:
        p.add_argument("-d", "--dim", dest="d", type=int)
        p.add_argument("--mode", choices=(DISCRETE, POISSON))
        p.add_argument("-t", "--time", dest="t", type=float, help="Poisson time (poisson mode) or horizon")
        p.add_argument("-n", "--particles", dest="n", type=int, help="particle count (discrete mode)")
        p.add_argument("--snapshot", help="load a cluster snapshot instead of growing one")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="idlalab", description="Internal DLA fluctuation toolkit")
    ap.add_argument("--version", action="version", version=f"idlalab {__version__}")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("grow", help="grow a cluster and write a binary snapshot")
    _common(p)

    p = sub.add_parser("sandpile", help="relax the divisible sandpile")
    _common(p, cluster=False)
    p.add_argument("-d", "--dim", dest="d", type=int)
    p.add_argument("-t", "--mass", dest="t", type=float, help="initial mass at the origin")
    p.add_argument("--tol", dest="relax_tol", type=float, help="stop when the largest excess is below this")

    p = sub.add_parser("poly", help="print discrete harmonic polynomials")
    p.add_argument("--config")
    p.add_argument("--dump-config", metavar="PATH")
    p.add_argument("--out")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--zk", type=int, metavar="K", help="discrete analogue of z^K in d = 2")
    g.add_argument("--basis", type=int, nargs=2, metavar=("D", "ELL"),
                   help="Xi images of a basis of degree-ELL harmonics in dimension D")
    p.add_argument("--mesh", type=int, metavar="M", help="also print psi_(M) for --zk")

    p = sub.add_parser("moments", help="complex moments M_k of a cluster")
    _common(p)
    p.add_argument("--kmax", type=int, default=4)
    p.add_argument("--at", type=float, nargs="+", help="times to evaluate (default: the horizon)")

    p = sub.add_parser("phi", help="Phi_A^m(psi, t) for psi = Re/Im of discrete z^k")
    _common(p)
    p.add_argument("-m", type=int, required=False)
    p.add_argument("-k", type=int, default=0, help="degree of the discrete z^k")
    p.add_argument("--part", choices=("re", "im"), default="re")
    p.add_argument("--at", type=float, nargs="+", help="rescaled times s (default 1)")

    p = sub.add_parser("lateness-stat", help="X_R for a single-mode annular test function")
    _common(p)
    p.add_argument("-R", type=float)
    p.add_argument("-k", type=int, default=1)
    p.add_argument("--lo", type=float, default=1.0)
    p.add_argument("--hi", type=float, default=2.0)
    p.add_argument("--shape", choices=("spline", "box"), default="spline")

    p = sub.add_parser("gff", help="mode variances or a sampled Fourier field")
    _common(p, cluster=False)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--mode-table", action="store_true")
    g.add_argument("--sample", action="store_true")
    p.add_argument("-d", "--dim", dest="d", type=int)
    p.add_argument("--kind", choices=(gff.AUGMENTED, gff.ORDINARY), default=gff.AUGMENTED)
    p.add_argument("-R", type=float, default=1.0)
    p.add_argument("--ell-max", type=int, default=8)
    p.add_argument("--kmax", type=int, default=32)

    p = sub.add_parser("render", help="PPM images of lateness or the symmetric difference")
    _common(p)
    p.add_argument("--kind", choices=("lateness", "symdiff"), required=True)
    p.add_argument("--at", type=float, help="time for symdiff (default: the horizon)")
    p.add_argument("--bound", type=float, help="palette clamp for lateness")

    p = sub.add_parser("verify", help="run a statistical check and print JSON verdicts")
    p.add_argument("check", choices=VERIFY_CHOICES)
    p.add_argument("--config")
    p.add_argument("--dump-config", metavar="PATH")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--trials", type=int, help="number of trials (Monte Carlo checks)")
    p.add_argument("--tol", action="append", type=_key_value, metavar="NAME=VALUE",
                   help="override a keyword of the check, e.g. rel_tol=0.2 or z=4 (repeatable)")
    return ap


# -- helpers -------------------------------------------------------------------

def _config(args) -> RunConfig:
    base = RunConfig()
    if getattr(args, "config", None):
        with open(args.config) as fh:
            base = RunConfig.from_json(fh.read())
    tol = dict(getattr(args, "tol", None) or [])
    if getattr(args, "trials", None) is not None:
        tol["n_trials"] = args.trials
    if getattr(args, "relax_tol", None) is not None:
        tol["tol"] = args.relax_tol
    cfg = base.merged(subcommand=args.subcommand, d=getattr(args, "d", None), mode=getattr(args, "mode", None),
                      t=getattr(args, "t", None), n=getattr(args, "n", None), seed=getattr(args, "seed", None),
                      stream=getattr(args, "stream", None), out=getattr(args, "out", None),
                      tolerances=tol or None, palette_bound=getattr(args, "bound", None))
    if getattr(args, "dump_config", None):
        with open(args.dump_config, "w") as fh:
            fh.write(cfg.to_json() + "\n")
    return cfg


def _cluster(args, cfg: RunConfig) -> ClusterHistory:
    if getattr(args, "snapshot", None):
        obj = load_snapshot(args.snapshot)
        if not isinstance(obj, ClusterHistory):
            raise SnapshotError("snapshot holds a sandpile, not a cluster")
        return obj
    if cfg.mode == DISCRETE:
        n = cfg.n if cfg.n is not None else (int(cfg.t) if cfg.t is not None else None)
        if n is None:
            raise ValueError("discrete mode needs -n")
        return grow(cfg.d, n=n, seed=cfg.seed, stream=cfg.stream)
    if cfg.t is None:
        raise ValueError("poisson mode needs -t")
    return grow(cfg.d, t=cfg.t, seed=cfg.seed, stream=cfg.stream)


def _stamp(cfg: RunConfig, source=None) -> list[str]:
    """Version, seed, stream and config hash; ``source`` supplies the seed of a loaded snapshot."""
    seed, stream = (source.seed, source.stream) if source is not None else (cfg.seed, cfg.stream)
    return [f"idlalab {__version__}", f"seed {seed} stream {stream}", f"config {cfg.digest()}"]


# -- subcommands -----------------------------------------------------------------

def cmd_grow(args, cfg):
    h = _cluster(args, cfg)
    if cfg.out:
        save_snapshot(h, cfg.out)
    _emit({"stamp": _stamp(cfg, h), "d": h.d, "mode": h.mode, "sites": len(h.sites), "t_max": h.t_max,
           "radius": h.radius(),
           "seed": h.seed, "stream": h.stream, "snapshot": cfg.out, "config": cfg.digest()})
    return 0


def cmd_sandpile(args, cfg):
    f = relax(cfg.t if cfg.t is not None else 100.0, cfg.d, tol=cfg.tolerances.get("tol", 1e-10))
    if cfg.out:
        save_snapshot(f, cfg.out, seed=cfg.seed, stream=cfg.stream)
    inner, outer, width = shape_report(f)
    _emit({"stamp": _stamp(cfg), "t": f.t, "d": f.d, "total_mass": f.total_mass(), "sites": len(f.sites),
           "residual": f.residual,
           "sweeps": f.sweeps, "inner_radius": inner, "outer_radius": outer, "annulus_width": width,
           "snapshot": cfg.out})
    return 0


def cmd_poly(args, cfg):
    out = {"stamp": _stamp(cfg)}
    if args.zk is not None:
        p = discrete_zk(args.zk)
        out["zk"] = p.to_string()
        out["zk_terms"] = p.to_json_obj()
        re, im = p.to_xy()
        out["re"] = re.to_string()
        out["im"] = im.to_string()
        if args.mesh:
            out["mesh_re"] = rescale_to_mesh(re, args.mesh, args.zk).as_polynomial().to_string()
    else:
        d, ell = args.basis
        out["basis"] = []
        for b in harmonic_basis(d, ell):
            xb = xi_transform(b)
            out["basis"].append({"psi": b.to_string(), "xi": xb.to_string(),
                                 "psi_terms": b.to_json_obj(), "xi_terms": xb.to_json_obj()})
    _emit(out, cfg.out)
    return 0


def cmd_moments(args, cfg):
    h = _cluster(args, cfg)
    times = args.at or [h.t_max]
    rows = []
    for t in times:
        for k, v in complex_moments(h, t, args.kmax).items():
            rows.append({"t": t, "k": k, "re": v.real, "im": v.imag})
    _emit({"stamp": _stamp(cfg, h), "moments": rows}, cfg.out)
    return 0


def cmd_phi(args, cfg):
    h = _cluster(args, cfg)
    m = args.m or 16
    re, im = discrete_zk(args.k).to_xy()
    psi = rescale_to_mesh(re if args.part == "re" else im, m, args.k)
    rows = [{"s": s, "phi": phi_A(h, psi, m, s)} for s in (args.at or [1.0])]
    _emit({"stamp": _stamp(cfg, h), "m": m, "k": args.k, "part": args.part, "phi": rows}, cfg.out)
    return 0


def cmd_lateness_stat(args, cfg):
    if args.R is None:
        raise ValueError("lateness-stat needs -R")
    h = _cluster(args, cfg)
    phi = AnnularTestFunction.single_mode(args.k, 1.0, args.lo, args.hi, args.shape)
    x = lateness_statistic(lateness(h), phi, args.R)
    _emit({"stamp": _stamp(cfg, h), "R": args.R, "X_R": x.value, "imag": x.imag, "n_sites": x.n_sites,
           "V0": v_quadrature(phi)}, cfg.out)
    return 0


def cmd_gff(args, cfg):
    if args.mode_table:
        spectrum = gff.ModeSpectrum.build(cfg.d, args.kind, args.R, args.ell_max)
        _emit({"stamp": _stamp(cfg), **spectrum.as_json_obj()}, cfg.out)
        return 0
    f = gff.sample_fourier_field_2d(args.kmax, seed=cfg.seed, stream=cfg.stream)
    _emit({"stamp": _stamp(cfg), "alpha": f.alpha, "beta": f.beta}, cfg.out)
    return 0


def cmd_render(args, cfg):
    if not cfg.out:
        raise ValueError("render needs --out")
    h = _cluster(args, cfg)
    if args.kind == "lateness":
        img = render_lateness(lateness(h), cfg.palette_bound)
        counts = {}
    else:
        t = args.at if args.at is not None else h.t_max
        img = render_symmetric_difference(h, t)
        outside, missing = signed_discrepancy(h, t).split_counts()
        counts = {"outside": outside, "missing": missing, "radius": radius_for_volume(t, 2)}
    img.with_comments(*_stamp(cfg, h)).save(cfg.out)
    _emit({"stamp": _stamp(cfg, h), "image": cfg.out, "width": img.width, "height": img.height, **counts})
    return 0


def _verify_kwargs(fn, cfg: RunConfig, jobs) -> dict:
    params = inspect.signature(fn).parameters
    kwargs = {}
    for key, value in cfg.tolerances.items():
        if key not in params:
            raise ValueError(f"unknown option {key!r}; choose from {sorted(params)}")
        default = params[key].default
        kwargs[key] = int(value) if isinstance(default, int) and not isinstance(default, bool) else value
    if "seed" in params and cfg.seed:
        kwargs["seed"] = cfg.seed
    if "jobs" in params and jobs is not None:
        kwargs["jobs"] = jobs
    return kwargs


def cmd_verify(args, cfg):
    from .verify import CHECKS

    fn = CHECKS[args.check]
    verdicts = fn(**_verify_kwargs(fn, cfg, args.jobs))
    _emit([v.to_json_obj() for v in verdicts], cfg.out)
    return 0 if all(v.passed for v in verdicts) else 1


COMMANDS = {
    "grow": cmd_grow,
    "sandpile": cmd_sandpile,
    "poly": cmd_poly,
    "moments": cmd_moments,
    "phi": cmd_phi,
    "lateness-stat": cmd_lateness_stat,
    "gff": cmd_gff,
    "render": cmd_render,
    "verify": cmd_verify,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        return COMMANDS[args.subcommand](args, cfg)
    except (SnapshotError, ValueError) as exc:
        print(f"idlalab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
