"""Closed-form reference objects for a sheet with a single disclination.

Points are arrays whose last axis has length 2; every function here is
vectorized over the leading axes. Derivative tensors carry the output
component first, e.g. ``Dy[..., i, a] = d y_i / d x_a`` and
``D2y[..., i, a, b] = d^2 y_i / d x_a d x_b``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Model(str, enum.Enum):
    FVK = "fvk"
    PLATE = "plate"


class DomainError(ValueError):
    """Raised when a closed form is requested where it is singular or undefined."""


@dataclass(frozen=True)
class Params:
    h: float
    delta: float
    model: Model = Model.FVK

    def __post_init__(self):
        if not 0.0 < self.h < 1.0:
            raise ValueError(f"thickness h must lie in (0, 1), got {self.h}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"deficit delta must lie in (0, 1), got {self.delta}")
        object.__setattr__(self, "model", Model(self.model))


def _polar_frame(x):
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[..., 0], x[..., 1])
    if np.any(r == 0.0):
        raise DomainError("derivatives are undefined at the origin")
    xhat = x / r[..., None]
    xperp = np.stack([-xhat[..., 1], xhat[..., 0]], axis=-1)
    return r, xhat, xperp


def cutoff(t):
    """C^2 ramp with eta = 0 on [0, 1/2] and eta = 1 on [1, inf).

    Realized as the quintic smoothstep in s = 2t - 1, so sup|eta'| = 3.75
    and sup|eta''| ~= 23.09. Returns ``(eta, eta', eta'')``.
    """
    t = np.asarray(t, dtype=float)
    s = np.clip(2.0 * t - 1.0, 0.0, 1.0)
    inside = (t > 0.5) & (t < 1.0)
    eta = s**3 * (10.0 - 15.0 * s + 6.0 * s**2)
    d1 = np.where(inside, 60.0 * s**2 * (1.0 - s) ** 2, 0.0)
    d2 = np.where(inside, 240.0 * s * (1.0 - s) * (1.0 - 2.0 * s), 0.0)
    return eta, d1, d2


def cone_map(x, delta, derivatives=True):
    """The singular cone ``sqrt(1 - delta^2) x + delta |x| e3``.

    With ``derivatives=False`` only the map is returned and the origin is
    allowed; otherwise returns ``(y, Dy, D2y)``.
    """
    x = np.asarray(x, dtype=float)
    a = np.sqrt(1.0 - delta**2)
    r = np.hypot(x[..., 0], x[..., 1])
    y = np.concatenate([a * x, (delta * r)[..., None]], axis=-1)
    if not derivatives:
        return y
    r, xhat, xperp = _polar_frame(x)
    Dy = np.zeros(x.shape[:-1] + (3, 2))
    Dy[..., 0, 0] = a
    Dy[..., 1, 1] = a
    Dy[..., 2, :] = delta * xhat
    D2y = np.zeros(x.shape[:-1] + (3, 2, 2))
    D2y[..., 2, :, :] = (delta / r)[..., None, None] * np.einsum("...a,...b->...ab", xperp, xperp)
    return y, Dy, D2y


def reference_metric(x, delta):
    """Stress-free metric ``Id - delta^2 xperp (x) xperp`` of the cone."""
    _, _, xperp = _polar_frame(x)
    g = np.broadcast_to(np.eye(2), xperp.shape[:-1] + (2, 2)).copy()
    return g - delta**2 * np.einsum("...a,...b->...ab", xperp, xperp)


def ansatz_plate(x, params: Params):
    """Cone with its tip cut off at scale h: ``eta(|x|/h) * cone_map(x)``.

    Returns ``(y, Dy, D2y)``.
    """
    h = params.h
    r, xhat, xperp = _polar_frame(x)
    eta, d1, d2 = cutoff(r / h)
    yc, Dyc, D2yc = cone_map(x, params.delta)

    grad_eta = (d1 / h)[..., None] * xhat
    hess_eta = (d2 / h**2)[..., None, None] * np.einsum("...a,...b->...ab", xhat, xhat) + (
        d1 / (h * r)
    )[..., None, None] * np.einsum("...a,...b->...ab", xperp, xperp)

    y = eta[..., None] * yc
    Dy = np.einsum("...i,...a->...ia", yc, grad_eta) + eta[..., None, None] * Dyc
    cross = np.einsum("...ia,...b->...iab", Dyc, grad_eta)
    D2y = (
        np.einsum("...i,...ab->...iab", yc, hess_eta)
        + cross
        + np.swapaxes(cross, -1, -2)
        + eta[..., None, None, None] * D2yc
    )
    return y, Dy, D2y


def ansatz_fvk(x, params: Params):
    """In-plane displacement and deflection of the cut-off cone.

    ``u = -delta^2/2 eta(|x|/h) x`` and ``v = delta eta(|x|/h) |x|``.
    Returns ``(u, Du, v, Dv, D2v)`` with ``Du[..., i, a] = d u_i / d x_a``.
    """
    h, delta = params.h, params.delta
    r, xhat, xperp = _polar_frame(x)
    t = r / h
    eta, d1, d2 = cutoff(t)
    x = np.asarray(x, dtype=float)
    c = -0.5 * delta**2

    u = c * eta[..., None] * x
    Du = c * (
        eta[..., None, None] * np.eye(2) + t[..., None, None] * d1[..., None, None] * np.einsum("...a,...b->...ab", xhat, xhat)
    )
    v = delta * eta * r
    Dv = (delta * (eta + t * d1))[..., None] * xhat
    radial = delta * (t * d2 + 2.0 * d1) / h
    hoop = delta * (t * d1 + eta) / r
    D2v = radial[..., None, None] * np.einsum("...a,...b->...ab", xhat, xhat) + hoop[
        ..., None, None
    ] * np.einsum("...a,...b->...ab", xperp, xperp)
    return u, Du, v, Dv, D2v


def _sector_scale(delta):
    return np.sqrt(1.0 - delta**2)


def sector_map(x, delta):
    """Open the sector ``|arg x| < sqrt(1 - delta^2) pi`` onto the punctured disk.

    Returns ``(z, Diota)`` with ``Diota = zhat (x) xhat + zperp (x) xperp / sqrt(1 - delta^2)``.
    """
    x = np.asarray(x, dtype=float)
    r, xhat, xperp = _polar_frame(x)
    a = _sector_scale(delta)
    phi = np.arctan2(x[..., 1], x[..., 0])
    if np.any(np.abs(phi) >= a * np.pi):
        raise DomainError("point lies outside the sector")
    psi = phi / a
    zhat = np.stack([np.cos(psi), np.sin(psi)], axis=-1)
    zperp = np.stack([-zhat[..., 1], zhat[..., 0]], axis=-1)
    z = r[..., None] * zhat
    D = np.einsum("...i,...a->...ia", zhat, xhat) + np.einsum("...i,...a->...ia", zperp, xperp) / a
    return z, D


def sector_map_inverse(z, delta):
    """Inverse of :func:`sector_map` on the disk minus the cut along the negative x1-axis."""
    z = np.asarray(z, dtype=float)
    r = np.hypot(z[..., 0], z[..., 1])
    psi = np.arctan2(z[..., 1], z[..., 0])
    if np.any(r == 0.0) or np.any((z[..., 1] == 0.0) & (z[..., 0] < 0.0)):
        raise DomainError("inverse is undefined at the origin and on the cut")
    phi = _sector_scale(delta) * psi
    return r[..., None] * np.stack([np.cos(phi), np.sin(phi)], axis=-1)
