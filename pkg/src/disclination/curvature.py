"""Curvature diagnostics: boundary-integral curvature, winding numbers, isoperimetric
checks and the dyadic bending lower bound.

The curvature of a scalar field ``v`` inside ``B_r`` is

    kappa(r) = int_{B_r} det D^2 v = 1/2 oint (v_1 dv_2 - v_2 dv_1)
             = 1/2 int_0^{2pi} [v_r^2 + v_phi^2 / r^2 - 2 v_phi v_{r phi} / r] dphi,

the last form after dropping an exact phi-derivative. It only needs values on
the ring, so it stays meaningful when ``det D^2 v`` concentrates below the
grid scale.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from ._version import __version__
from .geometry import Params
from .grid import PolarGrid, angular_derivative


class OnBoundaryError(ValueError):
    """The target point is too close to the sampled curve for a reliable degree."""


class UnderResolvedError(ValueError):
    """The summed winding angle is not close enough to a multiple of 2 pi."""


@dataclass(frozen=True)
class CurvatureProfile:
    radii: np.ndarray
    kappa: np.ndarray
    target: float
    off_grid: np.ndarray | None = None

    def __post_init__(self):
        radii = np.asarray(self.radii, dtype=float)
        kappa = np.asarray(self.kappa, dtype=float)
        if radii.ndim != 1 or radii.shape != kappa.shape:
            raise ValueError("radii and kappa must be 1D arrays of equal length")
        if np.any(np.diff(radii) <= 0.0):
            raise ValueError("radii must be strictly increasing")
        if not np.all(np.isfinite(kappa)):
            raise ValueError("kappa must be finite")
        off = np.zeros(radii.shape, bool) if self.off_grid is None else np.asarray(self.off_grid, bool)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "off_grid", off)

    @property
    def abs_dev(self):
        return np.abs(self.kappa - self.target)

    def restrict(self, a, b):
        """Profile on ``[a, b]`` with linearly interpolated end values added when needed."""
        r, k = self.radii, self.kappa
        if a < r[0] * (1 - 1e-12) or b > r[-1] * (1 + 1e-12) or not a < b:
            raise ValueError(f"interval [{a}, {b}] not inside profile range [{r[0]}, {r[-1]}]")
        inside = (r > a) & (r < b)
        rr = np.concatenate([[a], r[inside], [b]])
        kk = np.concatenate([[np.interp(a, r, k)], k[inside], [np.interp(b, r, k)]])
        return rr, kk

    def write_csv(self, path):
        path = Path(path)
        header = f"disclination {__version__} curvature profile; target={self.target!r}\nr,kappa,target,abs_dev"
        data = np.column_stack([self.radii, self.kappa, np.full(self.radii.shape, self.target), self.abs_dev])
        tmp = path.with_suffix(path.suffix + ".tmp")
        np.savetxt(tmp, data, delimiter=",", header=header, fmt="%.17g")
        tmp.replace(path)


def dyadic_radii(grid: PolarGrid, h0=None, r_max=None):
    """Radii ``2^j h0`` inside the grid, each snapped to its nearest ring.

    ``h0`` defaults to ``10 r_min``, the thickness under the default grid policy.
    """
    h0 = 10.0 * grid.r_min if h0 is None else h0
    r_max = grid.r_max if r_max is None else r_max
    out = []
    R = h0
    while R <= r_max * (1 + 1e-12):
        if R >= grid.r_min * (1 - 1e-12):
            out.append(grid.r[grid.ring_index(R)])
        R *= 2.0
    return np.unique(out)


def _kappa_density(v, grid: PolarGrid):
    """Per-node integrand of ``kappa`` in ``dphi`` (already including the 1/2).

    Angular derivatives are spectral: with central differences a linear field
    picks up a spurious O(dphi^2) curvature, which the isoperimetric check
    then sees as an O(dphi) violation.
    """
    v = np.asarray(v, dtype=float)
    vr = (grid.ops["r"] @ v.ravel()).reshape(grid.shape)
    vp, vrp = angular_derivative(v), angular_derivative(vr)
    r = grid.rr
    return 0.5 * (vr * vr + (vp / r) ** 2 - 2.0 * vp * vrp / r)


def _profile_from_density(density, grid, radii, target):
    radii = grid.r if radii is None else np.atleast_1d(np.asarray(radii, dtype=float))
    kappa, off = [], []
    for R in radii:
        ring, on_grid = grid.ring(density, R)
        kappa.append(2.0 * math.pi * float(np.mean(ring)))
        off.append(not on_grid)
    return CurvatureProfile(radii, np.array(kappa), target, np.array(off))


def kappa_fvk(v, grid: PolarGrid, radii=None, delta=0.0):
    """``int_{B_r} det D^2 v`` from ring values, at ``radii`` (default: every ring)."""
    v = np.asarray(v, dtype=float)
    if v.shape != grid.shape:
        raise ValueError(f"v has shape {v.shape}, grid is {grid.shape}")
    return _profile_from_density(_kappa_density(v, grid), grid, radii, math.pi * delta**2)


def kappa_plate(y, grid: PolarGrid, radii=None, delta=0.0):
    """Sum over the three components of their ring curvatures."""
    y = np.asarray(y, dtype=float)
    if y.shape != (3, *grid.shape):
        raise ValueError(f"y has shape {y.shape}, expected {(3, *grid.shape)}")
    density = sum(_kappa_density(yi, grid) for yi in y)
    return _profile_from_density(density, grid, radii, math.pi * delta**2)


def _ring_cumulative(ring_values, grid: PolarGrid):
    """``int_{r_min}^{r_k} f(r) dr`` for ring samples ``f``, trapezoid in ``s = log r``."""
    return cumulative_trapezoid(ring_values * grid.r, dx=grid.ds, initial=0.0)


def _at_radius(values, grid: PolarGrid, r):
    return float(np.interp(math.log(r), grid.s, values))


def kappa_interior(v, grid: PolarGrid, r):
    """``int_{B_r} det D^2 v`` as an area quadrature over the annulus plus the inner-ring value.

    The grid does not cover ``B_{r_min}``; its share is taken from the ring
    formula at ``r_min``.
    """
    v = np.asarray(v, dtype=float)
    H = grid.hessian(v)
    det = H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] ** 2
    ring = grid.r * grid.dphi * np.sum(det, axis=1)
    cum = _ring_cumulative(ring, grid)
    inner = kappa_fvk(v, grid, [grid.r_min]).kappa[0]
    return inner + _at_radius(cum, grid, r)


def annulus_integral(density, grid: PolarGrid, a, b):
    """``int_{a <= |x| <= b} density`` with ring-wise quadrature; ``a, b`` within the grid."""
    density = np.asarray(density, dtype=float)
    ring = grid.r * grid.dphi * np.sum(density, axis=1)
    cum = _ring_cumulative(ring, grid)
    return _at_radius(cum, grid, b) - _at_radius(cum, grid, a)


def hessian_norm2(v, grid: PolarGrid):
    H = grid.hessian(v)
    return np.sum(H * H, axis=(-1, -2))


def brouwer_degree(curve, target, gap_factor=10.0, max_residual=0.1):
    """Winding number of the closed polygon ``curve`` (shape ``(n, 2)``) around ``target``."""
    curve = np.asarray(curve, dtype=float)
    target = np.asarray(target, dtype=float)
    gaps = np.linalg.norm(np.roll(curve, -1, axis=0) - curve, axis=1)
    rel = curve - target
    dist = float(np.min(np.linalg.norm(rel, axis=1)))
    if dist <= gap_factor * float(np.max(gaps)):
        raise OnBoundaryError(f"target at distance {dist:.3g} from the curve; sample gap {np.max(gaps):.3g}")
    theta = np.arctan2(rel[:, 1], rel[:, 0])
    step = np.diff(np.append(theta, theta[0]))
    step = (step + math.pi) % (2.0 * math.pi) - math.pi
    if float(np.max(np.abs(step))) >= 0.5 * math.pi:
        # wrapped increments of a closed polygon always sum to a multiple of 2 pi;
        # an increment this large means the turning direction itself is a guess
        raise UnderResolvedError(f"angle increment {np.max(np.abs(step)):.3f} rad between samples")
    turns = float(np.sum(step)) / (2.0 * math.pi)
    deg = int(round(turns))
    if abs(turns - deg) >= max_residual:
        raise UnderResolvedError(f"winding {turns:.4f} is not near an integer")
    return deg


def gradient_ring(v, grid: PolarGrid, r):
    """Samples of ``Dv`` on the circle of radius ``r``, shape ``(n_phi, 2)``."""
    g = np.moveaxis(grid.gradient(v), -1, 0)
    ring, _ = grid.ring(g, r)
    return ring.T


@dataclass(frozen=True)
class IsoperimetricCheck:
    r: float
    lhs: float
    rhs: float
    slack: float
    satisfied: bool

    def to_dict(self):
        return asdict(self)


def isoper_check(v, grid: PolarGrid, r, slack=0.05):
    """Length of the gradient image of ``dB_r`` against ``sqrt(4 pi |kappa(r)|)``."""
    curve = gradient_ring(v, grid, r)
    tangent = angular_derivative(curve.T)
    lhs = 2.0 * math.pi * float(np.mean(np.linalg.norm(tangent, axis=0)))
    kappa = kappa_fvk(v, grid, [r]).kappa[0]
    rhs = math.sqrt(4.0 * math.pi * abs(kappa))
    return IsoperimetricCheck(float(r), lhs, rhs, slack, bool(lhs >= rhs * (1.0 - slack)))


def l1_deviation(profile: CurvatureProfile, a, b):
    """``int_a^b |kappa - target| dr`` by the trapezoid rule on the profile radii."""
    r, k = profile.restrict(a, b)
    return float(trapezoid(np.abs(k - profile.target), r))


def lower_bound_certificate(profile: CurvatureProfile, a, b):
    """``2 int_a^b |kappa(r)| dr / r``: a lower bound for ``int_{a<|x|<b} |D^2 v|^2`` of one scalar field."""
    r, k = profile.restrict(a, b)
    return float(2.0 * trapezoid(np.abs(k) / r, r))


@dataclass(frozen=True)
class InterpolationDiagnostic:
    a: float
    b: float
    F_l1: float
    dF_l1: float
    d2F_l1: float
    identity_residual: float
    ratio: float

    def to_dict(self):
        return asdict(self)


def interpolation_diagnostic(u, v, params: Params, grid: PolarGrid, R, r0=None):
    """Metric/curvature interpolation quantities on ``[r0, R]`` (``r0`` defaults to h).

    ``F = (a - b) / 2`` with ``a(s) = int_{r0}^s dr int (2 u_{r,r} + v_r^2) dphi`` and
    ``b(r) = int (2 u_r + v_phi^2 / r + Delta^2 r) dphi``. Its derivative is
    computed by finite differences and, independently, as ``kappa(r) - pi Delta^2``;
    ``identity_residual`` is the L1 distance between the two. ``ratio`` is
    ``|F'| / sqrt(|F| |F''|)`` in L1 norms, reported and not asserted.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    r0 = params.h if r0 is None else r0
    k0, k1 = grid.ring_index(r0), grid.ring_index(R)
    if not 0 <= k0 < k1 - 2:
        raise ValueError(f"interval [{r0}, {R}] holds too few rings")
    ops = grid.ops
    ur = grid.cos * u[0] + grid.sin * u[1]
    urr = (ops["r"] @ ur.ravel()).reshape(grid.shape)
    vf = v.ravel()
    vr = (ops["r"] @ vf).reshape(grid.shape)
    vp = angular_derivative(v)
    r = grid.r
    dphi = grid.dphi
    delta2 = params.delta**2

    a_ring = dphi * np.sum(2.0 * urr + vr * vr, axis=1)
    b_ring = dphi * np.sum(2.0 * ur + vp * vp / grid.rr + delta2 * grid.rr, axis=1)
    sl = slice(k0, k1 + 1)
    rs = r[sl]
    a_vals = cumulative_trapezoid(a_ring[sl] * rs, dx=grid.ds, initial=0.0)
    F = 0.5 * (a_vals - b_ring[sl])
    dF = np.gradient(F, rs, edge_order=2)
    dens = _kappa_density(v, grid)
    dF_id = 2.0 * math.pi * np.mean(dens[sl], axis=1) - math.pi * delta2
    H = grid.hessian(v)
    det = H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] ** 2
    d2F = rs * dphi * np.sum(det[sl], axis=1)

    F_l1 = float(trapezoid(np.abs(F), rs))
    dF_l1 = float(trapezoid(np.abs(dF), rs))
    d2F_l1 = float(trapezoid(np.abs(d2F), rs))
    residual = float(trapezoid(np.abs(dF - dF_id), rs))
    denom = math.sqrt(F_l1 * d2F_l1)
    ratio = dF_l1 / denom if denom > 0 else math.inf
    return InterpolationDiagnostic(float(rs[0]), float(rs[-1]), F_l1, dF_l1, d2F_l1, residual, ratio)
