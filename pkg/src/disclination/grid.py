"""Log-polar discretization of the annulus ``r_min <= |x| <= r_max``.

Fields are sampled on the tensor grid ``(r_k, phi_j)`` and stored as arrays
of shape ``(n_r, n_phi)`` (scalar), ``(2, n_r, n_phi)`` (planar vector) or
``(3, n_r, n_phi)`` (map into R^3). Flattening is r-major: node
``k * n_phi + j``. Radii are uniform in ``s = log r``, so every finite
difference below acts in ``(s, phi)`` and is converted with
``d/dr = r^-1 d/ds``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ._version import __version__


def _first_derivative_1d(n, step):
    D = sp.lil_matrix((n, n))
    for k in range(1, n - 1):
        D[k, k - 1] = -1.0
        D[k, k + 1] = 1.0
    D[0, :3] = [-3.0, 4.0, -1.0]
    D[n - 1, n - 3 :] = [1.0, -4.0, 3.0]
    return (D / (2.0 * step)).tocsr()


def _second_derivative_1d(n, step):
    D = sp.lil_matrix((n, n))
    for k in range(1, n - 1):
        D[k, k - 1 : k + 2] = [1.0, -2.0, 1.0]
    D[0, :4] = [2.0, -5.0, 4.0, -1.0]
    D[n - 1, n - 4 :] = [-1.0, 4.0, -5.0, 2.0]
    return (D / step**2).tocsr()


def _periodic_derivatives(n, step):
    eye = sp.identity(n, format="csr")
    fwd = sp.csr_matrix(np.roll(np.eye(n), 1, axis=1))
    bwd = fwd.T.tocsr()
    return ((fwd - bwd) / (2.0 * step)).tocsr(), ((fwd - 2.0 * eye + bwd) / step**2).tocsr()


@dataclass(frozen=True)
class PolarGrid:
    r_min: float
    n_r: int
    n_phi: int
    r_max: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.r_min < self.r_max:
            raise ValueError("need 0 < r_min < r_max")
        if self.n_r < 8 or self.n_phi < 8:
            raise ValueError("need at least 8 nodes in each direction")

    @classmethod
    def for_thickness(cls, h, n_r=None, n_phi=256, core_ratio=10.0):
        """Default resolution policy: ``ceil(64 log10(1/h))`` radial nodes (at most 512) on ``[h/10, 1]``."""
        if n_r is None:
            n_r = min(512, math.ceil(64.0 * math.log(1.0 / h) / math.log(10.0)))
        return cls(r_min=h / core_ratio, n_r=int(n_r), n_phi=int(n_phi))

    # -- nodes -----------------------------------------------------------

    @cached_property
    def ds(self):
        return math.log(self.r_max / self.r_min) / (self.n_r - 1)

    @cached_property
    def s(self):
        return math.log(self.r_min) + self.ds * np.arange(self.n_r)

    @cached_property
    def r(self):
        r = np.exp(self.s)
        r[-1] = self.r_max
        r[0] = self.r_min
        return r

    @cached_property
    def dphi(self):
        return 2.0 * math.pi / self.n_phi

    @cached_property
    def phi(self):
        return self.dphi * np.arange(self.n_phi)

    @property
    def shape(self):
        return (self.n_r, self.n_phi)

    @property
    def size(self):
        return self.n_r * self.n_phi

    @cached_property
    def rr(self):
        return np.repeat(self.r[:, None], self.n_phi, axis=1)

    @cached_property
    def cos(self):
        return np.broadcast_to(np.cos(self.phi), self.shape).copy()

    @cached_property
    def sin(self):
        return np.broadcast_to(np.sin(self.phi), self.shape).copy()

    def points(self):
        """Cartesian node coordinates, shape ``(n_r, n_phi, 2)``."""
        return np.stack([self.rr * self.cos, self.rr * self.sin], axis=-1)

    def sample(self, func):
        """Evaluate ``func`` on all nodes; ``func`` takes points of shape ``(..., 2)``."""
        return func(self.points())

    # -- quadrature --------------------------------------------------------

    @cached_property
    def radial_weights(self):
        """Trapezoid weights in ``s``, so that ``sum(f * r * w) ~ int f r dr``."""
        w = self.r * self.ds
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    @cached_property
    def weights(self):
        """Area weight of each node, shape ``(n_r, n_phi)``."""
        return np.repeat((self.r * self.radial_weights * self.dphi)[:, None], self.n_phi, axis=1)

    def integrate(self, density):
        """Area integral over the annulus of a scalar density sampled on the nodes."""
        density = np.asarray(density, dtype=float)
        if density.shape != self.shape:
            raise ValueError(f"density has shape {density.shape}, grid is {self.shape}")
        return float(np.sum(self.weights * density))

    # -- differential operators (sparse, acting on r-major flat vectors) ------

    @cached_property
    def _ops_1d(self):
        Ds = _first_derivative_1d(self.n_r, self.ds)
        Dss = _second_derivative_1d(self.n_r, self.ds)
        Dp, Dpp = _periodic_derivatives(self.n_phi, self.dphi)
        return Ds, Dss, Dp, Dpp

    @cached_property
    def radial_derivative_1d(self):
        """``d/dr`` on a single radial profile (n_r x n_r)."""
        Ds = self._ops_1d[0]
        return (sp.diags(1.0 / self.r) @ Ds).tocsr()

    @cached_property
    def radial_second_derivative_1d(self):
        Ds, Dss = self._ops_1d[:2]
        return (sp.diags(1.0 / self.r**2) @ (Dss - Ds)).tocsr()

    @cached_property
    def ops(self):
        """Sparse polar and Cartesian derivative matrices on the flattened grid.

        Keys: ``r, p, rr, rp, pp`` are d/dr, d/dphi, d2/dr2, d2/drdphi, d2/dphi2;
        ``d1, d2`` the Cartesian first derivatives; ``h11, h12, h22`` the
        Cartesian Hessian entries.
        """
        Ds, Dss, Dp, Dpp = self._ops_1d
        Ir = sp.identity(self.n_r, format="csr")
        Ip = sp.identity(self.n_phi, format="csr")
        rinv = sp.diags(1.0 / self.rr.ravel())
        c = sp.diags(self.cos.ravel())
        s = sp.diags(self.sin.ravel())

        d_s = sp.kron(Ds, Ip, format="csr")
        d_ss = sp.kron(Dss, Ip, format="csr")
        d_p = sp.kron(Ir, Dp, format="csr")
        d_pp = sp.kron(Ir, Dpp, format="csr")
        d_sp = sp.kron(Ds, Dp, format="csr")

        d_r = rinv @ d_s
        d_rr = rinv @ rinv @ (d_ss - d_s)
        d_rp = rinv @ d_sp
        # polar components of the Hessian in the (e_r, e_phi) frame
        h_rr = d_rr
        h_rf = rinv @ d_rp - rinv @ rinv @ d_p
        h_ff = rinv @ rinv @ d_pp + rinv @ d_r
        cc, ss, cs = c @ c, s @ s, c @ s

        out = {
            "r": d_r,
            "p": d_p,
            "rr": d_rr,
            "rp": d_rp,
            "pp": d_pp,
            "d1": c @ d_r - s @ rinv @ d_p,
            "d2": s @ d_r + c @ rinv @ d_p,
            "h11": cc @ h_rr - 2.0 * cs @ h_rf + ss @ h_ff,
            "h22": ss @ h_rr + 2.0 * cs @ h_rf + cc @ h_ff,
            "h12": cs @ (h_rr - h_ff) + (cc - ss) @ h_rf,
        }
        return {k: v.tocsr() for k, v in out.items()}

    def apply(self, name, f):
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise ValueError(f"field has shape {f.shape}, grid is {self.shape}")
        return (self.ops[name] @ f.ravel()).reshape(self.shape)

    def gradient(self, f):
        """Cartesian gradient, shape ``(n_r, n_phi, 2)``."""
        return np.stack([self.apply("d1", f), self.apply("d2", f)], axis=-1)

    def hessian(self, f):
        """Cartesian Hessian, shape ``(n_r, n_phi, 2, 2)``; symmetric by construction."""
        h11, h12, h22 = (self.apply(k, f) for k in ("h11", "h12", "h22"))
        return np.stack([np.stack([h11, h12], -1), np.stack([h12, h22], -1)], -2)

    # -- rings --------------------------------------------------------------

    def ring_index(self, r):
        """Index of the ring closest to ``r`` in log distance."""
        return int(np.argmin(np.abs(self.s - math.log(r))))

    def ring(self, field, r, rtol=1e-10):
        """Samples of ``field`` (trailing axes ``(n_r, n_phi)``) on the circle of radius ``r``.

        Returns ``(values, on_grid)``. Off-grid radii are linearly interpolated
        in ``log r`` between the bracketing rings and flagged ``on_grid=False``.
        """
        field = np.asarray(field, dtype=float)
        if not self.r_min * (1 - rtol) <= r <= self.r_max * (1 + rtol):
            raise ValueError(f"radius {r} outside grid range [{self.r_min}, {self.r_max}]")
        k = self.ring_index(r)
        if abs(self.r[k] - r) <= rtol * r:
            return field[..., k, :], True
        pos = (math.log(r) - self.s[0]) / self.ds
        k0 = min(int(math.floor(pos)), self.n_r - 2)
        lam = pos - k0
        return (1.0 - lam) * field[..., k0, :] + lam * field[..., k0 + 1, :], False


def circle_integral(values, r):
    """Arc-length integral over the circle of radius ``r`` of equispaced samples (periodic trapezoid)."""
    values = np.asarray(values, dtype=float)
    return float(r * 2.0 * math.pi * np.mean(values, axis=-1))


def angular_derivative(values):
    """Spectral ``d/dphi`` of equispaced periodic samples along the last axis."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    k = np.fft.rfftfreq(n, d=1.0 / n)
    coef = np.fft.rfft(values, axis=-1) * (1j * k)
    if n % 2 == 0:
        coef[..., -1] = 0.0
    return np.fft.irfft(coef, n=n, axis=-1)


# -- field files ---------------------------------------------------------------


def write_fields_csv(path, grid: PolarGrid, fields: dict):
    """Write named scalar fields as rows ``r, phi, <names...>`` in r-major node order."""
    path = Path(path)
    names = list(fields)
    cols = [grid.rr.ravel(), np.broadcast_to(grid.phi, grid.shape).ravel()]
    for name in names:
        arr = np.asarray(fields[name], dtype=float)
        if arr.shape != grid.shape:
            raise ValueError(f"field {name!r} has shape {arr.shape}, grid is {grid.shape}")
        cols.append(arr.ravel())
    header = (
        f"disclination {__version__} fields; r_min={grid.r_min!r} r_max={grid.r_max!r} "
        f"n_r={grid.n_r} n_phi={grid.n_phi}; node order r-major\n" + ",".join(["r", "phi", *names])
    )
    tmp = path.with_suffix(path.suffix + ".tmp")
    np.savetxt(tmp, np.column_stack(cols), delimiter=",", header=header, fmt="%.17g")
    tmp.replace(path)


def read_fields_csv(path):
    """Inverse of :func:`write_fields_csv`; returns ``(grid, {name: array})``."""
    path = Path(path)
    try:
        with open(path) as fh:
            fh.readline()
            names = fh.readline().lstrip("#").strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot read field file {path}: {exc}") from exc
    if names[:2] != ["r", "phi"] or data.shape[1] != len(names):
        raise ValueError(f"malformed field file {path}: columns {names}")
    r_vals = np.unique(data[:, 0])
    phi_vals = np.unique(data[:, 1])
    n_r, n_phi = len(r_vals), len(phi_vals)
    if n_r * n_phi != data.shape[0]:
        raise ValueError(f"malformed field file {path}: rows do not form a tensor grid")
    try:
        grid = PolarGrid(r_min=float(r_vals[0]), n_r=n_r, n_phi=n_phi, r_max=float(r_vals[-1]))
    except ValueError as exc:
        raise ValueError(f"malformed field file {path}: {exc}") from exc
    if not np.allclose(grid.r, r_vals, rtol=1e-9) or not np.allclose(grid.phi, phi_vals, atol=1e-12):
        raise ValueError(f"malformed field file {path}: nodes are not log-polar")
    if not np.allclose(data[:, 0].reshape(grid.shape), grid.rr, rtol=1e-9):
        raise ValueError(f"malformed field file {path}: rows are not in r-major order")
    fields = {name: data[:, i].reshape(grid.shape) for i, name in enumerate(names) if i >= 2}
    if not all(np.all(np.isfinite(v)) for v in fields.values()):
        raise ValueError(f"malformed field file {path}: non-finite values")
    return grid, fields
