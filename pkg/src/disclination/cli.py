"""Command line entry point: ``disclination <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from ._version import __version__
from .energy import ansatz_energy, kl3d_energy, make_problem
from .geometry import Params
from .grid import write_fields_csv
from .harness import ExperimentConfig, _tag, _write_json, diagnose, diagnose_fields, fit_scaling, run_sweep
from .optimize import OptimizationError, gradient_check
from .radial import radial_ansatz, radial_fvk_energy, radial_minimize, write_radial_csv

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--h", type=float, help="thickness (single run)")
    p.add_argument("--delta", type=float, help="cone deficit")
    p.add_argument("--model", choices=["fvk", "plate"], help="energy model")
    p.add_argument("--nr", type=int, help="radial nodes (default: ceil(64 log10(1/h)), at most 512)")
    p.add_argument("--nphi", type=int, help="angular nodes (default 256)")
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int, help="random seed")


def build_parser():
    parser = _Parser(prog="disclination", description="Thin sheets with a disclination: energies, minimizers, diagnostics.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("eval-ansatz", help="energy of the cut-off cone")
    _common(p)
    p = sub.add_parser("minimize", help="minimize at one thickness")
    _common(p)
    p = sub.add_parser("sweep", help="continuation sweep over thicknesses and scaling fit")
    _common(p)
    p.add_argument("--h-list", type=float, nargs="+", help="decreasing thicknesses")
    p = sub.add_parser("diagnose", help="diagnostic battery on a field file")
    _common(p)
    p.add_argument("--fields", type=Path, required=True, help="fields CSV written by minimize/sweep")
    p = sub.add_parser("gradcheck", help="finite-difference check of the energy gradient")
    _common(p)
    p.add_argument("--directions", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-6)
    p = sub.add_parser("radial", help="radially symmetric minimization")
    _common(p)
    p = sub.add_parser("kl3d", help="three-dimensional energy of the Kirchhoff-Love extension")
    _common(p)
    p.add_argument("--nq", type=int, default=4, help="Gauss points across the thickness")
    return parser


def _config(args, **extra):
    overrides = {
        "model": args.model,
        "delta": args.delta,
        "n_r": args.nr,
        "n_phi": args.nphi,
        "out_dir": str(args.out) if args.out else None,
        "seed": args.seed,
        **extra,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if getattr(args, "h", None) is not None and "h_list" not in overrides:
        overrides["h_list"] = [args.h]
    if args.config is not None:
        return ExperimentConfig.from_json(args.config, **overrides)
    return ExperimentConfig(**overrides)


def _single(args, default_h=0.01):
    cfg = _config(args)
    h = args.h if args.h is not None else (cfg.h_list[0] if args.config else default_h)
    params = Params(h, cfg.delta, cfg.model)
    return cfg, params, cfg.grid_for(h)


def _emit(obj):
    print(json.dumps(obj, indent=2, default=lambda o: o.item() if isinstance(o, np.generic) else str(o)))


def cmd_eval_ansatz(args):
    cfg, params, grid = _single(args)
    problem = make_problem(params, grid)
    x = problem.ansatz()
    bd = ansatz_energy(params, grid)
    norm = 2.0 * math.pi * params.delta**2 * params.h**2
    result = {**bd.to_dict(), "h": params.h, "delta": params.delta, "model": params.model.value,
              "n_r": grid.n_r, "n_phi": grid.n_phi, "normalized_minus_log": bd.total / norm - abs(math.log(params.h)),
              "stencil_total": problem.breakdown(x).total}
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_fields_csv(Path(args.out) / f"ansatz_{_tag(params.h)}.csv", grid, problem.fields(x))
    _emit(result)


def cmd_minimize(args):
    cfg, params, _ = _single(args)
    cfg.h_list = [params.h]
    rows = run_sweep(cfg, write=args.out is not None)
    row = rows[0]
    _emit(vars(row))
    if row.status != "ok":
        raise NumericalFailure(row.error)


def cmd_sweep(args):
    cfg = _config(args, h_list=args.h_list)
    rows = run_sweep(cfg, write=True)
    result = {"rows": [vars(r) for r in rows]}
    try:
        result["fit"] = fit_scaling(rows).to_dict()
    except ValueError as exc:
        result["fit"] = {"error": str(exc)}
    _write_json(Path(cfg.out_dir) / "fit.json", {"version": __version__, **result["fit"]})
    _emit(result)
    if any(r.status != "ok" for r in rows):
        raise NumericalFailure("at least one thickness failed")


def cmd_diagnose(args):
    cfg, params, _ = _single(args)
    report = diagnose(args.fields, params, cfg.out_dir, isoper_slack=cfg.isoper_slack, certificate_slack=cfg.certificate_slack)
    _emit({k: report[k] for k in ("kappa_L1_dev", "certificate", "certificate_ok", "isoperimetric_ok", "window")})


def cmd_gradcheck(args):
    if args.nr is None:
        args.nr = 64
    if args.nphi is None:
        args.nphi = 64
    cfg, params, grid = _single(args, default_h=0.05)
    problem = make_problem(params, grid)
    rng = np.random.default_rng(cfg.seed)
    x = problem.ansatz() + 0.01 * rng.standard_normal(problem.ansatz().size)
    err = gradient_check(problem.oracle, x, n_directions=args.directions, seed=cfg.seed)
    _emit({"model": params.model.value, "max_relative_error": err, "tol": args.tol, "ok": err < args.tol})
    if not err < args.tol:
        raise NumericalFailure(f"gradient check failed: {err:.3g}")


def cmd_radial(args):
    cfg, params, grid = _single(args)
    if params.model.value != "fvk":
        raise UsageError("the radial reduction is only available for the fvk model")
    ansatz = radial_fvk_energy(radial_ansatz(params, grid), params)
    fields, bd, report = radial_minimize(params, grid, cfg.optimizer_for(params.h))
    norm = 2.0 * math.pi * params.delta**2 * params.h**2
    result = {**bd.to_dict(), "ansatz_total": ansatz.total, "iterations": report.iterations, "reason": report.reason,
              "normalized_minus_log": bd.total / norm - abs(math.log(params.h))}
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_radial_csv(Path(args.out) / f"radial_{_tag(params.h)}.csv", fields)
    _emit(result)


def cmd_kl3d(args):
    cfg, params, _ = _single(args)
    energy = kl3d_energy(params, args.nq)
    _emit({"h": params.h, "delta": params.delta, "energy": energy, "ratio_h2_log": energy / (params.h**2 * abs(math.log(params.h)))})


COMMANDS = {
    "eval-ansatz": cmd_eval_ansatz,
    "minimize": cmd_minimize,
    "sweep": cmd_sweep,
    "diagnose": cmd_diagnose,
    "gradcheck": cmd_gradcheck,
    "radial": cmd_radial,
    "kl3d": cmd_kl3d,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (UsageError, ValueError, OSError) as exc:
        print(f"disclination: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, OptimizationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"disclination: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
