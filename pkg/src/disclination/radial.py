"""Radially symmetric reduction of the FvK energy.

With ``u = u_r(r) e_r`` and ``v = v(r)`` the energy becomes a one-dimensional
integral. The 1D nodes are exactly the radial nodes of a :class:`PolarGrid`,
so radial and planar results can be compared without interpolation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline

from ._version import __version__
from .energy import EnergyBreakdown
from .geometry import Params, cutoff
from .grid import PolarGrid
from .optimize import OptimizerConfig, factorized_inverse, minimize


@dataclass(frozen=True)
class RadialFields:
    u_r: np.ndarray
    v: np.ndarray
    grid: PolarGrid

    def __post_init__(self):
        n = self.grid.n_r
        if np.shape(self.u_r) != (n,) or np.shape(self.v) != (n,):
            raise ValueError(f"radial fields need {n} samples each")
        if not (np.all(np.isfinite(self.u_r)) and np.all(np.isfinite(self.v))):
            raise ValueError("radial fields must be finite")

    @property
    def r(self):
        return self.grid.r

    def pack(self):
        return np.concatenate([self.u_r, self.v])


def _split(x, grid):
    return x[: grid.n_r], x[grid.n_r :]


def _energy_and_grad(x, params: Params, grid: PolarGrid, want_grad=True):
    R1, R2 = grid.radial_derivative_1d, grid.radial_second_derivative_1d
    r = grid.r
    W = 2.0 * math.pi * r * grid.radial_weights
    u, v = _split(x, grid)
    du, dv, d2v = R1 @ u, R1 @ v, R2 @ v
    A = 2.0 * du + dv * dv
    B = 2.0 * u / r + params.delta**2
    h2 = params.h**2
    membrane = float(np.sum(W * (A * A + B * B)))
    bending = h2 * float(np.sum(W * (d2v * d2v + (dv / r) ** 2)))
    breakdown = EnergyBreakdown(membrane, bending)
    if not want_grad:
        return breakdown, None
    gu = R1.T @ (4.0 * W * A) + 4.0 * W * B / r
    gv = R1.T @ (4.0 * W * A * dv) + 2.0 * h2 * (R2.T @ (W * d2v) + R1.T @ (W * dv / r**2))
    return breakdown, np.concatenate([gu, gv])


def radial_fvk_energy(fields: RadialFields, params: Params) -> EnergyBreakdown:
    """``2 pi int r [(2u_r' + v'^2)^2 + (2u_r/r + Delta^2)^2] + h^2 2 pi int r [v''^2 + (v'/r)^2]``."""
    return _energy_and_grad(fields.pack(), params, fields.grid, want_grad=False)[0]


def radial_fvk_gradient(fields: RadialFields, params: Params):
    """Exact gradient of the discrete radial energy: ``(dE/du_r, dE/dv)``."""
    g = _energy_and_grad(fields.pack(), params, fields.grid)[1]
    return _split(g, fields.grid)


def radial_ansatz(params: Params, grid: PolarGrid) -> RadialFields:
    """Cut-off cone in radial form: ``u_r = -Delta^2/2 eta r``, ``v = Delta eta r``."""
    r = grid.r
    eta = cutoff(r / params.h)[0]
    return RadialFields(-0.5 * params.delta**2 * eta * r, params.delta * eta * r, grid)


def radial_oracle(params: Params, grid: PolarGrid):
    """``x -> (energy, gradient)`` on the packed vector ``(u_r, v)``."""

    def oracle(x):
        b, g = _energy_and_grad(x, params, grid)
        return b.total, g

    return oracle


def _project(grid):
    n = grid.n_r

    def project(x):
        x = x.copy()
        x[n:] -= x[n:].mean()
        return x

    return project


def radial_gauss_newton(x, params: Params, grid: PolarGrid):
    """Gauss-Newton Hessian of the radial membrane term plus the exact bending Hessian."""
    R1, R2 = grid.radial_derivative_1d, grid.radial_second_derivative_1d
    r = grid.r
    W = 2.0 * math.pi * r * grid.radial_weights
    dv = R1 @ _split(x, grid)[1]
    J_a = sp.hstack([2.0 * R1, 2.0 * sp.diags(dv) @ R1])
    J_b = sp.hstack([sp.diags(2.0 / r), sp.csr_matrix((grid.n_r, grid.n_r))])
    Wd = sp.diags(W)
    H = 2.0 * (J_a.T @ Wd @ J_a + J_b.T @ Wd @ J_b)
    K = 2.0 * params.h**2 * (R2.T @ Wd @ R2 + R1.T @ sp.diags(W / r**2) @ R1)
    return (H + sp.block_diag([sp.csr_matrix((grid.n_r, grid.n_r)), K])).tocsc()


def radial_minimize(params: Params, grid: PolarGrid, config: OptimizerConfig | None = None, x0=None):
    """Minimize the radial energy from the cut-off cone (or ``x0``).

    Returns ``(fields, breakdown, report)``.
    """
    config = config or OptimizerConfig.for_thickness(params.h)
    start = radial_ansatz(params, grid).pack() if x0 is None else np.asarray(x0, dtype=float)
    x, report = minimize(
        radial_oracle(params, grid),
        start,
        config,
        precond=factorized_inverse(radial_gauss_newton(start, params, grid)),
        project=_project(grid),
    )
    fields = RadialFields(*_split(x, grid), grid)
    breakdown = radial_fvk_energy(fields, params)
    report.breakdown = breakdown.to_dict()
    return fields, breakdown, report


def lift_to_2d(fields: RadialFields, grid: PolarGrid):
    """``u = u_r(|x|) xhat``, ``v = v(|x|)`` on a planar grid, cubic in ``log r``.

    Returns ``(u, v)`` with shapes ``(2, n_r, n_phi)`` and ``(n_r, n_phi)``.
    """
    src = fields.grid
    tol = 1e-12
    if grid.r_min < src.r_min * (1 - tol) or grid.r_max > src.r_max * (1 + tol):
        raise ValueError(
            f"planar radii [{grid.r_min}, {grid.r_max}] exceed the radial range [{src.r_min}, {src.r_max}]"
        )
    s = np.clip(grid.s, src.s[0], src.s[-1])
    ur = CubicSpline(src.s, fields.u_r)(s)
    vr = CubicSpline(src.s, fields.v)(s)
    ones = np.ones(grid.n_phi)
    u = np.stack([np.outer(ur, ones) * grid.cos, np.outer(ur, ones) * grid.sin])
    return u, np.outer(vr, ones)


def write_radial_csv(path, fields: RadialFields):
    path = Path(path)
    header = f"disclination {__version__} radial profile\nr,u_r,v"
    tmp = path.with_suffix(path.suffix + ".tmp")
    np.savetxt(tmp, np.column_stack([fields.r, fields.u_r, fields.v]), delimiter=",", header=header, fmt="%.17g")
    tmp.replace(path)
