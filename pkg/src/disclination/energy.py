"""Discrete membrane + bending energies and their exact gradients.

Both energies are quadrature sums over a :class:`PolarGrid`. Gradients are
the exact derivatives of those sums: every linear difference stencil is
transposed against the quadrature-weighted derivative of the integrand.
Matrix norms are Frobenius throughout.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator

from .geometry import Model, Params, ansatz_fvk, ansatz_plate, reference_metric
from .grid import PolarGrid


@dataclass(frozen=True)
class EnergyBreakdown:
    membrane: float
    bending: float

    @property
    def total(self):
        return self.membrane + self.bending

    def to_dict(self):
        return {**asdict(self), "total": self.total}


@lru_cache(maxsize=16)
def _transposed(grid: PolarGrid):
    return {k: m.T.tocsr() for k, m in grid.ops.items()}


def _check(arr, lead, grid, name):
    arr = np.asarray(arr, dtype=float)
    want = (*lead, *grid.shape)
    if arr.shape != want:
        raise ValueError(f"{name} has shape {arr.shape}, expected {want} for this grid")
    return arr


def _bending_and_grad(vf, grid, h, want_grad):
    """``h^2 int |D^2 v|^2`` for a flat scalar field and, optionally, its gradient."""
    ops = grid.ops
    w = grid.weights.ravel()
    a, b, c = ops["h11"] @ vf, ops["h12"] @ vf, ops["h22"] @ vf
    energy = h**2 * float(np.sum(w * (a * a + 2.0 * b * b + c * c)))
    if not want_grad:
        return energy, None
    T = _transposed(grid)
    g = 2.0 * h**2 * (T["h11"] @ (w * a) + 2.0 * (T["h12"] @ (w * b)) + T["h22"] @ (w * c))
    return energy, g


def _bending_matrix(grid, h):
    """``2 h^2 (H11^T W H11 + 2 H12^T W H12 + H22^T W H22)``, the Hessian of the bending sum."""
    ops = grid.ops
    W = sp.diags(grid.weights.ravel())
    K = ops["h11"].T @ W @ ops["h11"] + 2.0 * ops["h12"].T @ W @ ops["h12"] + ops["h22"].T @ W @ ops["h22"]
    return 2.0 * h**2 * K


# -- Foeppl-von Karman ---------------------------------------------------------


def _fvk(u, v, params: Params, grid: PolarGrid, want_grad):
    u = _check(u, (2,), grid, "u")
    v = _check(v, (), grid, "v")
    ops = grid.ops
    d1, d2 = ops["d1"], ops["d2"]
    u1, u2, vf = u[0].ravel(), u[1].ravel(), v.ravel()
    v1, v2 = d1 @ vf, d2 @ vf
    c, s = grid.cos.ravel(), grid.sin.ravel()
    D2 = params.delta**2
    # strain 2 sym Du + Dv (x) Dv + Delta^2 xperp (x) xperp
    S11 = 2.0 * (d1 @ u1) + v1 * v1 + D2 * s * s
    S22 = 2.0 * (d2 @ u2) + v2 * v2 + D2 * c * c
    S12 = d2 @ u1 + d1 @ u2 + v1 * v2 - D2 * c * s
    w = grid.weights.ravel()
    membrane = float(np.sum(w * (S11 * S11 + 2.0 * S12 * S12 + S22 * S22)))
    bending, gb = _bending_and_grad(vf, grid, params.h, want_grad)
    breakdown = EnergyBreakdown(membrane, bending)
    if not want_grad:
        return breakdown, None
    T = _transposed(grid)
    a11, a12, a22 = 4.0 * w * S11, 4.0 * w * S12, 4.0 * w * S22
    gu1 = T["d1"] @ a11 + T["d2"] @ a12
    gu2 = T["d1"] @ a12 + T["d2"] @ a22
    gv = T["d1"] @ (a11 * v1 + a12 * v2) + T["d2"] @ (a12 * v1 + a22 * v2) + gb
    gu = np.stack([gu1.reshape(grid.shape), gu2.reshape(grid.shape)])
    return breakdown, (gu, gv.reshape(grid.shape))


def fvk_energy(u, v, params: Params, grid: PolarGrid) -> EnergyBreakdown:
    """``int |2 sym Du + Dv (x) Dv + Delta^2 xperp (x) xperp|^2 + h^2 |D^2 v|^2``.

    ``u`` has shape ``(2, n_r, n_phi)``, ``v`` shape ``(n_r, n_phi)``.
    """
    return _fvk(u, v, params, grid, False)[0]


def fvk_gradient(u, v, params: Params, grid: PolarGrid):
    """Exact gradient of the discrete FvK energy: ``(dE/du, dE/dv)``."""
    return _fvk(u, v, params, grid, True)[1]


# -- nonlinear plate -------------------------------------------------------------


def _metric_components(grid, delta):
    c, s = grid.cos.ravel(), grid.sin.ravel()
    D2 = delta**2
    return 1.0 - D2 * s * s, D2 * c * s, 1.0 - D2 * c * c


def _plate(y, params: Params, grid: PolarGrid, want_grad):
    y = _check(y, (3,), grid, "y")
    ops = grid.ops
    yf = y.reshape(3, -1)
    Y1 = np.stack([ops["d1"] @ yi for yi in yf])
    Y2 = np.stack([ops["d2"] @ yi for yi in yf])
    g11, g12, g22 = _metric_components(grid, params.delta)
    G11 = np.sum(Y1 * Y1, axis=0) - g11
    G12 = np.sum(Y1 * Y2, axis=0) - g12
    G22 = np.sum(Y2 * Y2, axis=0) - g22
    w = grid.weights.ravel()
    membrane = float(np.sum(w * (G11 * G11 + 2.0 * G12 * G12 + G22 * G22)))
    bending, grads = 0.0, []
    for yi in yf:
        b, gb = _bending_and_grad(yi, grid, params.h, want_grad)
        bending += b
        grads.append(gb)
    breakdown = EnergyBreakdown(membrane, bending)
    if not want_grad:
        return breakdown, None
    T = _transposed(grid)
    a11, a12, a22 = 4.0 * w * G11, 4.0 * w * G12, 4.0 * w * G22
    g = np.empty_like(yf)
    for i in range(3):
        g[i] = T["d1"] @ (a11 * Y1[i] + a12 * Y2[i]) + T["d2"] @ (a12 * Y1[i] + a22 * Y2[i]) + grads[i]
    return breakdown, g.reshape(y.shape)


def plate_energy(y, params: Params, grid: PolarGrid) -> EnergyBreakdown:
    """``int |Dy^T Dy - g_Delta|^2 + h^2 |D^2 y|^2`` for ``y`` of shape ``(3, n_r, n_phi)``."""
    return _plate(y, params, grid, False)[0]


def plate_gradient(y, params: Params, grid: PolarGrid):
    """Exact gradient of the discrete plate energy, same shape as ``y``."""
    return _plate(y, params, grid, True)[1]


def ansatz_energy(params: Params, grid: PolarGrid) -> EnergyBreakdown:
    """Energy of the closed-form ansatz of ``params.model``, from its exact derivatives.

    Only the quadrature comes from ``grid``. Difference stencils are not
    used, so the steep cutoff ramp in the core does not need extra
    resolution. This is the energy of the construction itself; the optimizer
    sees the stencil version (``breakdown`` of the problem's ``ansatz``).
    """
    x = grid.points()
    w = grid.weights
    if params.model is Model.FVK:
        _, Du, _, Dv, D2v = ansatz_fvk(x, params)
        xperp = np.stack([-grid.sin, grid.cos], axis=-1)
        S = Du + np.swapaxes(Du, -1, -2) + np.einsum("...a,...b->...ab", Dv, Dv)
        S = S + params.delta**2 * np.einsum("...a,...b->...ab", xperp, xperp)
        bend = np.sum(D2v * D2v, axis=(-1, -2))
    else:
        _, Dy, D2y = ansatz_plate(x, params)
        S = np.einsum("...ia,...ib->...ab", Dy, Dy) - reference_metric(x, params.delta)
        bend = np.sum(D2y * D2y, axis=(-1, -2, -3))
    membrane = float(np.sum(w * np.sum(S * S, axis=(-1, -2))))
    return EnergyBreakdown(membrane, params.h**2 * float(np.sum(w * bend)))


# -- optimizer-facing problems ---------------------------------------------------


def _resample(field, old: PolarGrid, new: PolarGrid):
    """Linear interpolation in ``(log r, phi)``; radii outside the old range are clamped."""
    phi = np.append(old.phi, 2.0 * math.pi)
    out = []
    for comp in field.reshape(-1, *old.shape):
        data = np.concatenate([comp, comp[:, :1]], axis=1)
        interp = RegularGridInterpolator((old.s, phi), data)
        s = np.clip(np.log(new.rr), old.s[0], old.s[-1])
        out.append(interp(np.stack([s, np.broadcast_to(new.phi, new.shape)], axis=-1)))
    return np.stack(out).reshape(field.shape[:-2] + new.shape)


class FvKProblem:
    """Flat-vector view of the FvK energy: ``x = (u1, u2, v)`` concatenated."""

    model = Model.FVK

    def __init__(self, params: Params, grid: PolarGrid):
        self.params, self.grid = params, grid

    def pack(self, u, v):
        return np.concatenate([np.ravel(u), np.ravel(v)])

    def unpack(self, x):
        n = self.grid.size
        return x[: 2 * n].reshape(2, *self.grid.shape), x[2 * n :].reshape(self.grid.shape)

    def fields(self, x):
        u, v = self.unpack(x)
        return {"u1": u[0], "u2": u[1], "v": v}

    def oracle(self, x):
        b, (gu, gv) = _fvk(*self.unpack(x), self.params, self.grid, True)
        return b.total, np.concatenate([gu.ravel(), gv.ravel()])

    def breakdown(self, x):
        return fvk_energy(*self.unpack(x), self.params, self.grid)

    def ansatz(self):
        u, _, v, _, _ = ansatz_fvk(self.grid.points(), self.params)
        return self.pack(np.moveaxis(u, -1, 0), v)

    def flat_state(self):
        return np.zeros(3 * self.grid.size)

    def gauss_newton(self, x):
        """Gauss-Newton Hessian of the membrane term plus the exact bending Hessian."""
        ops, grid = self.grid.ops, self.grid
        d1, d2 = ops["d1"], ops["d2"]
        v = self.unpack(x)[1].ravel()
        V1, V2 = sp.diags(d1 @ v), sp.diags(d2 @ v)
        Z = sp.csr_matrix(d1.shape)
        J11 = sp.hstack([2.0 * d1, Z, 2.0 * V1 @ d1])
        J22 = sp.hstack([Z, 2.0 * d2, 2.0 * V2 @ d2])
        J12 = sp.hstack([d2, d1, V2 @ d1 + V1 @ d2])
        W = sp.diags(grid.weights.ravel())
        H = 2.0 * (J11.T @ W @ J11 + 2.0 * J12.T @ W @ J12 + J22.T @ W @ J22)
        K = _bending_matrix(grid, self.params.h)
        return (H + sp.block_diag([Z, Z, K])).tocsc()

    def preconditioner(self, x):
        return angular_mode_inverse(self.gauss_newton(x), self.grid)

    def project(self, x):
        """Fix the gauge: zero means, no rigid tilt of ``v``, no in-plane rotation of ``u``.

        A tilt ``v -> v - a.x`` is removed together with the compensating
        ``u -> u + a v - (a.x) a / 2`` that leaves the strain unchanged.
        """
        grid = self.grid
        w = grid.weights
        u, v = self.unpack(x)
        u, v = u.copy(), v - np.sum(w * v) / np.sum(w)
        X, Y = grid.rr * grid.cos, grid.rr * grid.sin
        X, Y = X - np.sum(w * X) / np.sum(w), Y - np.sum(w * Y) / np.sum(w)
        gram = np.array([[np.sum(w * X * X), np.sum(w * X * Y)], [np.sum(w * X * Y), np.sum(w * Y * Y)]])
        a = np.linalg.solve(gram, [np.sum(w * v * X), np.sum(w * v * Y)])
        ax = a[0] * X + a[1] * Y
        for i in range(2):
            u[i] += a[i] * (v - 0.5 * ax)
        v = v - ax
        omega = np.sum(w * (X * u[1] - Y * u[0])) / np.sum(w * (X * X + Y * Y))
        u[0] += omega * Y
        u[1] -= omega * X
        u -= (np.sum(w * u, axis=(1, 2)) / np.sum(w))[:, None, None]
        v = v - np.sum(w * v) / np.sum(w)
        return self.pack(u, v)

    def resample(self, x, old_grid: PolarGrid):
        n = old_grid.size
        u = x[: 2 * n].reshape(2, *old_grid.shape)
        v = x[2 * n :].reshape(old_grid.shape)
        return self.pack(_resample(u, old_grid, self.grid), _resample(v, old_grid, self.grid))

    def bending_field(self, x):
        return self.unpack(x)[1]


class PlateProblem:
    """Flat-vector view of the plate energy: ``x = (y1, y2, y3)`` concatenated."""

    model = Model.PLATE

    def __init__(self, params: Params, grid: PolarGrid):
        self.params, self.grid = params, grid

    def pack(self, y):
        return np.ravel(y).copy()

    def unpack(self, x):
        return x.reshape(3, *self.grid.shape)

    def fields(self, x):
        y = self.unpack(x)
        return {"y1": y[0], "y2": y[1], "y3": y[2]}

    def oracle(self, x):
        b, g = _plate(self.unpack(x), self.params, self.grid, True)
        return b.total, g.ravel()

    def breakdown(self, x):
        return plate_energy(self.unpack(x), self.params, self.grid)

    def ansatz(self):
        y, _, _ = ansatz_plate(self.grid.points(), self.params)
        return self.pack(np.moveaxis(y, -1, 0))

    def flat_state(self):
        p = self.grid.points()
        return self.pack(np.stack([p[..., 0], p[..., 1], np.zeros(self.grid.shape)]))

    def gauss_newton(self, x):
        """Gauss-Newton Hessian of the membrane term plus the exact bending Hessian."""
        ops, grid = self.grid.ops, self.grid
        d1, d2 = ops["d1"], ops["d2"]
        yf = self.unpack(x).reshape(3, -1)
        B11, B22, B12 = [], [], []
        for yi in yf:
            Y1, Y2 = sp.diags(d1 @ yi), sp.diags(d2 @ yi)
            B11.append(2.0 * Y1 @ d1)
            B22.append(2.0 * Y2 @ d2)
            B12.append(Y2 @ d1 + Y1 @ d2)
        J11, J22, J12 = sp.hstack(B11), sp.hstack(B22), sp.hstack(B12)
        W = sp.diags(grid.weights.ravel())
        H = 2.0 * (J11.T @ W @ J11 + 2.0 * J12.T @ W @ J12 + J22.T @ W @ J22)
        K = _bending_matrix(grid, self.params.h)
        return (H + sp.block_diag([K, K, K])).tocsc()

    def preconditioner(self, x):
        # rigid motions are not gauge-fixed here, so their (near) null modes need a firmer shift:
        # linearized rotations cost energy at second order and would otherwise swamp the direction
        return angular_mode_inverse(self.gauss_newton(x), self.grid, shift=1e-4)

    def project(self, x):
        return x

    def resample(self, x, old_grid: PolarGrid):
        return self.pack(_resample(x.reshape(3, *old_grid.shape), old_grid, self.grid))

    def bending_field(self, x):
        return self.unpack(x)


def _polar_frame_matrix(grid):
    """Orthogonal map from (radial, angular, scalar) components to (x1, x2, scalar)."""
    c, s = sp.diags(grid.cos.ravel()), sp.diags(grid.sin.ravel())
    return sp.bmat([[c, -s, None], [s, c, None], [None, None, sp.identity(grid.size)]]).tocsr()


def angular_mode_inverse(H, grid: PolarGrid, shift=1e-8):
    """Approximate ``H^-1`` for three-component fields via angular Fourier modes.

    ``H`` acts on ``(x1, x2, scalar)`` node fields. Rewritten in polar vector
    components it is block-circulant in phi whenever the linearization point
    is rotationally symmetric, so each Fourier mode decouples into a dense
    ``3 n_r`` system. The circulant stencil is read off the phi = 0 node of
    each ring, which keeps this a valid (symmetric positive definite)
    preconditioner for general states.
    """
    n_r, n_phi, N = grid.n_r, grid.n_phi, grid.size
    Q = _polar_frame_matrix(grid)
    Hp = (Q.T @ H @ Q).tocsr()
    rows = (np.arange(3)[:, None] * N + np.arange(n_r)[None, :] * n_phi).ravel()
    block = Hp[rows].tocoo()
    comp, rest = np.divmod(block.col, N)
    ring, j = np.divmod(rest, n_phi)
    col = comp * n_r + ring
    n_modes = n_phi // 2 + 1
    phase = np.exp(1j * np.outer(np.arange(n_modes), j) * grid.dphi)
    M = np.zeros((n_modes, 3 * n_r, 3 * n_r), dtype=complex)
    for m in range(n_modes):
        M[m] = sp.coo_matrix((block.data * phase[m], (block.row, col)), shape=(3 * n_r, 3 * n_r)).toarray()
    M = 0.5 * (M + np.conj(np.swapaxes(M, 1, 2)))
    scale = shift * float(np.mean(np.abs(np.diagonal(M[0]))))
    M += scale * np.eye(3 * n_r)
    Minv = np.linalg.inv(M)

    def apply(q):
        b = (Q.T @ q).reshape(3 * n_r, n_phi)
        bh = np.fft.rfft(b, axis=1).T[:, :, None]
        xh = (Minv @ bh)[:, :, 0].T
        return Q @ np.fft.irfft(xh, n=n_phi, axis=1).ravel()

    return apply


def make_problem(params: Params, grid: PolarGrid):
    return FvKProblem(params, grid) if params.model is Model.FVK else PlateProblem(params, grid)


# -- three-dimensional evaluation -------------------------------------------------


def _singular_values(F):
    sigma = np.linalg.svd(F, compute_uv=False)
    flip = np.linalg.det(F) < 0.0
    sigma[..., -1] = np.where(flip, -sigma[..., -1], sigma[..., -1])
    return sigma


def dist_so3(F):
    """Euclidean distance from 3x3 matrices (batched on leading axes) to SO(3)."""
    sigma = _singular_values(np.asarray(F, dtype=float))
    return np.sqrt(np.sum((sigma - 1.0) ** 2, axis=-1))


def stored_energy(F):
    """Quadratic-growth density ``W(F) = dist^2(F, SO(3))``."""
    sigma = _singular_values(np.asarray(F, dtype=float))
    return np.sum((sigma - 1.0) ** 2, axis=-1)


def _radial_panels(r_min, h, per_decade=24, order=8):
    """Gauss-Legendre nodes in ``log r`` on ``[r_min, 1]`` with breaks at h/2 and h."""
    breaks = sorted({r_min, *[b for b in (h / 2.0, h) if r_min < b < 1.0], 1.0})
    nodes, weights = np.polynomial.legendre.leggauss(order)
    rs, ws = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        n_pan = max(1, math.ceil(per_decade * math.log10(hi / lo)))
        edges = np.linspace(math.log(lo), math.log(hi), n_pan + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            s = 0.5 * (a + b) + 0.5 * (b - a) * nodes
            rs.append(np.exp(s))
            ws.append(0.5 * (b - a) * weights * np.exp(2.0 * s))  # dr r = r^2 ds
    return np.concatenate(rs), np.concatenate(ws)


def kl3d_energy(params: Params, n_thickness_quadrature=4, r_min=None, n_phi=16):
    """``h^-1 int W(DY)`` for the Kirchhoff-Love extension ``Y = y + x3 nu`` of the sector ansatz.

    The midsurface is the cut-off cone composed with the sector map, so that
    it is defined on the sector of opening ``2 pi sqrt(1 - Delta^2)``. The
    integral is taken in disk coordinates ``z = iota(x)`` (Jacobian
    ``sqrt(1 - Delta^2)``) over ``r_min <= |z| <= 1``, default ``r_min = h/10``.
    """
    if n_thickness_quadrature < 2:
        raise ValueError("thickness quadrature needs at least 2 points")
    h, delta = params.h, params.delta
    r_min = h / 10.0 if r_min is None else r_min
    a = math.sqrt(1.0 - delta**2)

    r, wr = _radial_panels(r_min, h)
    psi = (np.arange(n_phi) + 0.5) * (2.0 * math.pi / n_phi)
    R, PSI = np.meshgrid(r, psi, indexing="ij")
    z = np.stack([R * np.cos(PSI), R * np.sin(PSI)], axis=-1)
    zhat = z / R[..., None]
    zperp = np.stack([-zhat[..., 1], zhat[..., 0]], axis=-1)

    # tangent map of the midsurface in the orthonormal frame (xhat, xperp) of the sector
    _, Dy, _ = ansatz_plate(z, params)
    A_r = np.einsum("...ia,...a->...i", Dy, zhat)
    A_p = np.einsum("...ia,...a->...i", Dy, zperp) / a
    e_r = np.concatenate([zhat, np.zeros(R.shape + (1,))], axis=-1)
    e_p = np.concatenate([zperp, np.zeros(R.shape + (1,))], axis=-1)
    nu = -delta * e_r + a * np.array([0.0, 0.0, 1.0])
    # the ansatz normal equals the cone normal wherever it is defined; d nu / d phi_z = -delta e_phi
    dnu_p = (-delta / R)[..., None] * e_p / a

    xs, wx = np.polynomial.legendre.leggauss(n_thickness_quadrature)
    density = np.zeros(R.shape)
    for x3, wt in zip(0.5 * h * xs, 0.5 * wx):
        F = np.stack([A_r, A_p + x3 * dnu_p, nu], axis=-1)
        density += wt * stored_energy(F)
    # h^-1 * int dx3 -> weights sum to 1 over [-h/2, h/2] after the 1/h factor
    dphi = 2.0 * math.pi / n_phi
    return float(a * np.sum(wr[:, None] * dphi * density))

