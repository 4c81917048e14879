"""Command-line entry point.

Every subcommand computes all of its outputs before writing anything, and
files are replaced atomically, so a failed run never leaves partial output.
Exit status is 0 on success, 2 for invalid configuration and 1 for any
other failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .asymptotics import a_beta, b_const, profile
from .config import ConfigError, SweepConfig, load_config, local_scale_fn, resolve_v
from .designs import build_design, holder_allocation, optimal_allocation, uniform_allocation
from .error import imse, sup_mse
from .experiments import FitError, atomic_write, dumps, fit_rows, reproduce_example4, reproduce_example5, rows_to_csv, run_sweep
from .kernels import gram_min_eigen_ratio, local_stationarity_ratio, permutation_invariance_error
from .quadrature import QuadratureSpec

MIN_SWEEP_POINTS = 4


def _provenance(command: str, cfg: Optional[SweepConfig] = None, extra: Optional[dict] = None) -> list[str]:
    lines = [f"fieldinterp {__version__} {command}"]
    if cfg is not None:
        lines.append("config " + json.dumps(cfg.raw, sort_keys=True, separators=(",", ":")))
    if extra:
        lines.append("settings " + json.dumps(extra, sort_keys=True, separators=(",", ":")))
    return lines


def _load(args) -> SweepConfig:
    if not args.config:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config, args.quad_order)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.raw["seed"] = args.seed
    return cfg


def _sibling(path: str, suffix: str) -> str:
    stem, _ = os.path.splitext(path)
    return stem + suffix


def cmd_imse(args) -> dict:
    cfg = _load(args)
    rows = run_sweep(cfg.model, cfg.densities, cfg.allocations(), cfg.quad, args.threads, sup=cfg.sup)
    return {"primary": rows_to_csv(rows, _provenance("imse", cfg))}


def cmd_sweep(args) -> dict:
    cfg = _load(args)
    if len(cfg.N) < MIN_SWEEP_POINTS:
        raise ConfigError(f"config field 'N': a sweep needs at least {MIN_SWEEP_POINTS} values, got {len(cfg.N)}")
    rows = run_sweep(cfg.model, cfg.densities, cfg.allocations(), cfg.quad, args.threads, sup=cfg.sup)
    fit = cfg.fit
    result = fit_rows(rows, fit["axis"], fit["subtract"], fit["theory_slope"], fit["upper_half"]).to_dict()
    raw = fit_rows(rows, fit["axis"], (), fit["theory_slope"], fit["upper_half"]).to_dict() if fit["subtract"] else result
    report = {"fit": result, "fit_raw": raw, "config": cfg.raw}
    return {"primary": rows_to_csv(rows, _provenance("sweep", cfg)), ".fit.json": dumps(report)}


def cmd_asym(args) -> dict:
    cfg = _load(args)
    model, dec = cfg.model, cfg.decomposition
    sm = model.smoothness
    if sm is None:
        raise ConfigError("config field 'model': asymptotics need declared smoothness")
    v = cfg.v
    if v is None:
        v = resolve_v(model, cfg.densities)
    prof = profile(v, sm, dec)
    per_N = []
    for N in cfg.N:
        per_N.append(
            {
                "N": N,
                "optimal": optimal_allocation(v, sm, dec, N).to_dict(),
                "uniform": uniform_allocation(dec, N).to_dict(),
                "holder0": holder_allocation(sm, dec, N, 0).to_dict(),
                "holder1": holder_allocation(sm, dec, N, 1).to_dict(),
                "optimal_bound": prof.optimal_bound(N),
            }
        )
    out = {
        "a_beta": [a_beta(a) for a in sm.alpha],
        "b": [b_const(a, l) for a, l in zip(sm.alpha, dec.l)],
        "profile": prof.to_dict(),
        "allocations": per_N,
        "config": cfg.raw,
    }
    return {"primary": dumps(out)}


def cmd_design(args) -> dict:
    cfg = _load(args)
    designs = []
    for alloc in cfg.allocations():
        design = build_design(cfg.densities, alloc, cfg.decomposition)
        designs.append({"allocation": alloc.to_dict(), "design": design.to_dict()})
    return {"primary": dumps({"designs": designs, "config": cfg.raw})}


def cmd_kernel_check(args) -> dict:
    cfg = _load(args)
    model = cfg.model
    rng = np.random.default_rng(cfg.seed)
    pts = rng.random((args.points, model.dim))
    out = {"gram_min_eigen_ratio": gram_min_eigen_ratio(model, pts), "config": cfg.raw}
    if local_scale_fn(model, 0) is not None and model.smoothness is not None:
        ratios = {}
        for h in (1e-2, 1e-3, 1e-4):
            r = local_stationarity_ratio(model, pts, h=h, seed=cfg.seed)
            ratios[repr(h)] = {"min": float(r.min()), "max": float(r.max()), "max_abs_dev": float(np.max(np.abs(r - 1.0)))}
        out["local_stationarity"] = ratios
        out["permutation_invariance_error"] = permutation_invariance_error(model, seed=cfg.seed)
    else:
        out["local_stationarity"] = None
    return {"primary": dumps(out)}


def cmd_reproduce(args) -> dict:
    quad = QuadratureSpec(order=args.quad_order) if args.quad_order else QuadratureSpec()
    if args.example == 4:
        report, csv_text = reproduce_example4(quad, args.threads)
    else:
        report, csv_text = reproduce_example5(quad, args.threads)
    return {"primary": dumps(report), ".csv": csv_text}


COMMANDS = {
    "imse": (cmd_imse, "IMSE of the configured designs as CSV"),
    "sweep": (cmd_sweep, "IMSE sweep with a log-log rate fit"),
    "asym": (cmd_asym, "asymptotic constants and knot allocations as JSON"),
    "design": (cmd_design, "knot vectors of the configured designs as JSON"),
    "kernel-check": (cmd_kernel_check, "numerical local-stationarity diagnostic"),
    "reproduce": (cmd_reproduce, "rerun one of the two worked examples"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fieldinterp", description="Sampling designs and interpolation error for random fields.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", help="output path; stdout when omitted")
        p.add_argument("--quad-order", type=int, default=None, help="Gauss-Legendre order per axis")
        p.add_argument("--threads", type=int, default=1, help="worker threads for the cell loop")
        p.add_argument("--seed", type=int, default=None, help="overrides the seed in the config")
        if name == "reproduce":
            p.add_argument("--example", type=int, choices=(4, 5), required=True)
        if name == "kernel-check":
            p.add_argument("--points", type=int, default=16, help="random test points")
    return parser


def _emit(outputs: dict, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(outputs["primary"])
        return
    atomic_write(out, outputs["primary"])
    for suffix, text in outputs.items():
        if suffix != "primary":
            atomic_write(_sibling(out, suffix), text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    func = COMMANDS[args.command][0]
    try:
        outputs = func(args)
        _emit(outputs, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FitError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
