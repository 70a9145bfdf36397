"""Sweeps over thickness, scaling fits, diagnostic batteries and their files."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ._version import __version__
from .curvature import (
    annulus_integral,
    dyadic_radii,
    hessian_norm2,
    interpolation_diagnostic,
    isoper_check,
    kappa_fvk,
    kappa_plate,
    l1_deviation,
    lower_bound_certificate,
)
from .energy import make_problem
from .geometry import Model, Params
from .grid import PolarGrid, read_fields_csv, write_fields_csv
from .optimize import OptimizerConfig, continuation

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    model: str = "fvk"
    delta: float = 0.5
    h_list: list = field(default_factory=lambda: [0.05, 0.02, 0.01, 0.005])
    n_r: int | None = None
    n_phi: int = 256
    nodes_per_decade: float = 64.0
    max_n_r: int = 512
    core_ratio: float = 10.0
    optimizer: dict = field(default_factory=dict)
    isoper_slack: float = 0.05
    certificate_slack: float = 0.05
    out_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        self.model = Model(self.model).value
        self.h_list = [float(h) for h in self.h_list]
        if not self.h_list:
            raise ValueError("h_list is empty")
        if any(not 0.0 < h < 1.0 for h in self.h_list):
            raise ValueError("every h must lie in (0, 1)")
        if any(b >= a for a, b in zip(self.h_list, self.h_list[1:])):
            raise ValueError("h_list must be strictly decreasing")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        unknown = set(self.optimizer) - {f.name for f in fields(OptimizerConfig)}
        if unknown:
            raise ValueError(f"unknown optimizer settings: {sorted(unknown)}")

    @classmethod
    def from_json(cls, path, **overrides):
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read config {path}: {exc}") from exc
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"config {path}: unknown keys {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def grid_for(self, h):
        n_r = self.n_r
        if n_r is None:
            n_r = min(self.max_n_r, math.ceil(self.nodes_per_decade * math.log10(1.0 / h)))
        return PolarGrid(r_min=h / self.core_ratio, n_r=int(n_r), n_phi=int(self.n_phi))

    def optimizer_for(self, h):
        settings = {"seed": self.seed, **self.optimizer}
        return OptimizerConfig.for_thickness(h, **settings)


@dataclass
class SweepRow:
    h: float
    delta: float
    model: str
    n_r: int
    n_phi: int
    E_total: float = math.nan
    E_membrane: float = math.nan
    E_bending: float = math.nan
    E_ansatz: float = math.nan
    iterations: int = 0
    grad_norm: float = math.nan
    kappa_L1_dev: float = math.nan
    certificate: float = math.nan
    certificate_ok: bool = False
    status: str = "ok"
    error: str = ""


def _tag(h):
    return f"{h:g}"


def diagnostic_window(h, grid: PolarGrid):
    """``[6h, 1 - 5h]`` clipped to the grid (falls back to the whole grid if empty)."""
    a, b = max(6.0 * h, grid.r_min), min(1.0 - 5.0 * h, grid.r_max)
    if not a < b:
        a, b = grid.r_min, grid.r_max
    return a, b


def diagnose_fields(params: Params, grid: PolarGrid, flds: dict, *, isoper_slack=0.05, certificate_slack=0.05):
    """The full diagnostic battery on named fields (``u1, u2, v`` or ``y1, y2, y3``)."""
    h, delta = params.h, params.delta
    a, b = diagnostic_window(h, grid)
    radii = dyadic_radii(grid, h0=h)
    radii = radii[(radii > grid.r_min) & (radii < grid.r_max)]
    if params.model is Model.FVK:
        scalars = {"v": flds["v"]}
        profile = kappa_fvk(flds["v"], grid, None, delta)
        factor = 1.0
    else:
        scalars = {k: flds[k] for k in ("y1", "y2", "y3")}
        profile = kappa_plate(np.stack([flds["y1"], flds["y2"], flds["y3"]]), grid, None, delta)
        factor = 1.0 / 3.0
    dyadic = [{"r": float(r), "kappa": float(np.interp(r, profile.radii, profile.kappa))} for r in radii]
    isoper = [
        {"field": name, **isoper_check(f, grid, r, isoper_slack).to_dict()} for name, f in scalars.items() for r in radii
    ]
    bending = sum(annulus_integral(hessian_norm2(f, grid), grid, a, b) for f in scalars.values())
    certificate = factor * lower_bound_certificate(profile, a, b)
    report = {
        "version": __version__,
        "h": h,
        "delta": delta,
        "model": params.model.value,
        "grid": {"r_min": grid.r_min, "n_r": grid.n_r, "n_phi": grid.n_phi},
        "window": [a, b],
        "target": profile.target,
        "kappa_L1_dev": l1_deviation(profile, a, b),
        "dyadic_kappa": dyadic,
        "isoperimetric": isoper,
        "isoperimetric_ok": all(row["satisfied"] for row in isoper),
        "annulus_bending": bending,
        "certificate": certificate,
        "certificate_factor": factor,
        "certificate_slack": certificate_slack,
        "certificate_ok": bool(certificate <= bending * (1.0 + certificate_slack)),
    }
    if params.model is Model.FVK:
        u = np.stack([flds["u1"], flds["u2"]])
        try:
            report["interpolation"] = interpolation_diagnostic(u, flds["v"], params, grid, min(b, 0.5), r0=max(h, grid.r_min)).to_dict()
        except ValueError as exc:
            report["interpolation"] = {"error": str(exc)}
    return profile, report


def _write_json(path, obj):
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, default=_json_default))
    tmp.replace(path)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_sweep_csv(path, rows):
    path = Path(path)
    names = [f.name for f in fields(SweepRow)]
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(f"# disclination {__version__} sweep\n")
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in rows:
            writer.writerow([_csv_value(getattr(row, n)) for n in names])
    tmp.replace(path)


def _csv_value(x):
    if isinstance(x, float):
        return repr(x)
    return x


def read_sweep_csv(path):
    with open(path) as fh:
        lines = [line for line in fh if not line.startswith("#")]
    rows = []
    types = {f.name: f.type for f in fields(SweepRow)}
    for rec in csv.DictReader(lines):
        kw = {}
        for k, v in rec.items():
            t = types[k]
            if t == "bool":
                kw[k] = v == "True"
            elif t == "int":
                kw[k] = int(v)
            elif t == "float":
                kw[k] = float(v)
            else:
                kw[k] = v
        rows.append(SweepRow(**kw))
    return rows


def run_sweep(config: ExperimentConfig, write=True):
    """Continuation sweep over ``config.h_list`` with diagnostics per thickness.

    Failures at one ``h`` are recorded in that row and the sweep carries on.
    """
    out = Path(config.out_dir)
    if write:
        out.mkdir(parents=True, exist_ok=True)
    steps = continuation(config.h_list, config.delta, config.model, config.grid_for, config.optimizer_for)
    rows = []
    for step in steps:
        grid = step.grid
        row = SweepRow(step.h, config.delta, config.model, grid.n_r, grid.n_phi, E_ansatz=step.ansatz_energy)
        if step.error is not None:
            row.status, row.error = "failed", step.error
            rows.append(row)
            continue
        try:
            rep = step.report
            bd = rep.breakdown
            row.E_total, row.E_membrane, row.E_bending = bd["total"], bd["membrane"], bd["bending"]
            row.iterations, row.grad_norm = rep.iterations, rep.grad_norm
            flds = step.problem.fields(step.x)
            profile, report = diagnose_fields(
                step.problem.params,
                grid,
                flds,
                isoper_slack=config.isoper_slack,
                certificate_slack=config.certificate_slack,
            )
            row.kappa_L1_dev = report["kappa_L1_dev"]
            row.certificate = report["certificate"]
            row.certificate_ok = report["certificate_ok"] and row.certificate <= row.E_bending / step.h**2 * (
                1.0 + config.certificate_slack
            )
            if write:
                tag = _tag(step.h)
                write_fields_csv(out / f"fields_{tag}.csv", grid, flds)
                profile.write_csv(out / f"kappa_{tag}.csv")
                _write_json(out / f"report_{tag}.json", {**report, "optimizer": rep.to_dict(), "energy": bd, "ansatz_energy": step.ansatz_energy})
        except Exception as exc:  # noqa: BLE001 - recorded per row by design
            log.warning("sweep: diagnostics at h=%g failed: %s", step.h, exc)
            row.status, row.error = "failed", f"{type(exc).__name__}: {exc}"
        rows.append(row)
    if write:
        write_sweep_csv(out / "sweep.csv", rows)
    return rows


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    max_abs_residual: float
    n: int

    def to_dict(self):
        return asdict(self)


def fit_scaling(rows):
    """Least squares of ``E_total / (2 pi Delta^2 h^2)`` against ``|log h|`` over successful rows."""
    rows = [r for r in rows if getattr(r, "status", "ok") == "ok" and math.isfinite(r.E_total)]
    if len(rows) < 3:
        raise ValueError(f"need at least 3 successful rows, got {len(rows)}")
    hs = np.array([r.h for r in rows])
    if len(np.unique(hs)) != len(hs):
        raise ValueError("rows must have distinct h")
    x = np.abs(np.log(hs))
    y = np.array([r.E_total / (2.0 * math.pi * r.delta**2 * r.h**2) for r in rows])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    return ScalingFit(float(slope), float(intercept), float(np.max(np.abs(resid))), len(rows))


_FIELD_NAMES = {Model.FVK: ("u1", "u2", "v"), Model.PLATE: ("y1", "y2", "y3")}


def diagnose(field_path, params: Params, out_dir, *, isoper_slack=0.05, certificate_slack=0.05):
    """Run the diagnostic battery on a field file and write its reports.

    Writes ``kappa_<h>.csv``, ``isoper_<h>.csv`` and ``diagnose_<h>.json``
    into ``out_dir`` and returns the report dictionary.
    """
    field_path = Path(field_path)
    grid, flds = read_fields_csv(field_path)
    missing = [n for n in _FIELD_NAMES[params.model] if n not in flds]
    if missing:
        raise ValueError(f"field file {field_path} lacks columns {missing} for model {params.model.value}")
    profile, report = diagnose_fields(params, grid, flds, isoper_slack=isoper_slack, certificate_slack=certificate_slack)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tag = _tag(params.h)
    profile.write_csv(out / f"kappa_{tag}.csv")
    iso_path = out / f"isoper_{tag}.csv"
    tmp = iso_path.with_suffix(".csv.tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(f"# disclination {__version__} isoperimetric checks\n")
        writer = csv.writer(fh)
        writer.writerow(["field", "r", "lhs", "rhs", "slack", "satisfied"])
        for row in report["isoperimetric"]:
            writer.writerow([row["field"], repr(row["r"]), repr(row["lhs"]), repr(row["rhs"]), row["slack"], row["satisfied"]])
    tmp.replace(iso_path)
    report = {**report, "source": str(field_path)}
    _write_json(out / f"diagnose_{tag}.json", report)
    return report


def row_dict(row: SweepRow):
    return asdict(row)
