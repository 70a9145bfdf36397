from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disclination.geometry import (
    DomainError,
    Model,
    Params,
    ansatz_fvk,
    ansatz_plate,
    cone_map,
    cutoff,
    reference_metric,
    sector_map,
    sector_map_inverse,
)

coord = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)
deltas = st.floats(min_value=0.05, max_value=0.95)


def _points(rng, n, r_lo=1e-3, r_hi=1.0):
    r = np.exp(rng.uniform(np.log(r_lo), np.log(r_hi), n))
    phi = rng.uniform(-np.pi, np.pi, n)
    return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)


def test_params_validation():
    assert Params(0.1, 0.5, "plate").model is Model.PLATE
    for bad in ((0.0, 0.5), (1.0, 0.5), (0.1, 0.0), (0.1, 1.0)):
        with pytest.raises(ValueError):
            Params(*bad)
    with pytest.raises(ValueError):
        Params(0.1, 0.5, "shell")


def test_cone_map_values():
    y, _, _ = cone_map(np.array([1.0, 0.0]), 0.6)
    np.testing.assert_allclose(y, [0.8, 0.0, 0.6], atol=1e-15)
    _, _, D2y = cone_map(np.array([0.5, 0.0]), 0.6)
    assert math.isclose(np.linalg.norm(D2y), 1.2, rel_tol=1e-14)


def test_cone_map_flat_case():
    x = np.array([[0.3, -0.2], [0.1, 0.7]])
    y, Dy, D2y = cone_map(x, 0.0)
    np.testing.assert_allclose(y, np.column_stack([x, np.zeros(2)]))
    assert np.all(D2y == 0.0)


def test_cone_map_origin():
    np.testing.assert_array_equal(cone_map(np.zeros(2), 0.5, derivatives=False), np.zeros(3))
    with pytest.raises(DomainError):
        cone_map(np.zeros(2), 0.5)
    with pytest.raises(DomainError):
        reference_metric(np.zeros(2), 0.5)


def test_reference_metric_examples():
    np.testing.assert_allclose(reference_metric(np.array([0.0, 1.0]), 0.6), np.diag([0.64, 1.0]), atol=1e-15)
    np.testing.assert_allclose(reference_metric(np.array([0.4, -0.3]), 0.0), np.eye(2))


def test_reference_metric_is_pullback_of_cone():
    rng = np.random.default_rng(0)
    x = _points(rng, 1000)
    for delta in (0.2, 0.6, 0.9):
        _, Dy, _ = cone_map(x, delta)
        pull = np.einsum("nia,nib->nab", Dy, Dy)
        g = reference_metric(x, delta)
        assert np.max(np.abs(pull - g) / np.abs(g).max(axis=(1, 2))[:, None, None]) < 1e-12
        eig = np.linalg.eigvalsh(g)
        np.testing.assert_allclose(eig, np.tile([1 - delta**2, 1.0], (len(x), 1)), atol=1e-13)


def test_cutoff_examples():
    assert cutoff(0.4) == (0.0, 0.0, 0.0)
    assert tuple(map(float, cutoff(1.2))) == (1.0, 0.0, 0.0)
    assert math.isclose(float(cutoff(0.75)[0]), 0.5, abs_tol=1e-15)


def test_cutoff_shape_and_derivatives():
    t = np.linspace(0.0, 1.5, 30001)
    eta, d1, d2 = cutoff(t)
    assert np.all(np.diff(eta) >= 0.0)
    assert np.max(d1) <= 4.0 and math.isclose(np.max(d1), 3.75, rel_tol=1e-6)
    # derivative accuracy of the returned values against central differences: O(step^2)
    errs = []
    for step in (1e-2, 5e-3):
        tt = np.linspace(0.55, 0.95, 41)
        fd1 = (cutoff(tt + step)[0] - cutoff(tt - step)[0]) / (2 * step)
        fd2 = (cutoff(tt + step)[0] - 2 * cutoff(tt)[0] + cutoff(tt - step)[0]) / step**2
        errs.append((np.max(np.abs(fd1 - cutoff(tt)[1])), np.max(np.abs(fd2 - cutoff(tt)[2]))))
    assert errs[0][0] / errs[1][0] > 3.5 and errs[0][1] / errs[1][1] > 3.5
    # C^2 joins at both ends of the ramp
    for t0 in (0.5, 1.0):
        left, right = cutoff(t0 - 1e-9), cutoff(t0 + 1e-9)
        np.testing.assert_allclose(left, right, atol=1e-6)


def _fd_jacobian(f, x, step=1e-6):
    cols = []
    for a in range(2):
        e = np.zeros(2)
        e[a] = step
        cols.append((f(x + e) - f(x - e)) / (2 * step))
    return np.stack(cols, axis=-1)


def test_ansatz_plate_properties():
    params = Params(0.05, 0.6)
    rng = np.random.default_rng(1)
    outer = _points(rng, 500, r_lo=0.05, r_hi=1.0)
    _, Dy, _ = ansatz_plate(outer, params)
    g = np.einsum("nia,nib->nab", Dy, Dy) - reference_metric(outer, params.delta)
    assert np.max(np.abs(g)) < 1e-12
    inner = _points(rng, 200, r_lo=1e-4, r_hi=0.025)
    y, Dy, _ = ansatz_plate(inner, params)
    assert np.all(y == 0.0) and np.all(Dy == 0.0)
    # derivative tensors against finite differences in the ramp
    for x in _points(rng, 20, r_lo=0.026, r_hi=0.05):
        _, Dy, D2y = ansatz_plate(x, params)
        np.testing.assert_allclose(_fd_jacobian(lambda p: ansatz_plate(p, params)[0], x), Dy, atol=1e-6)
        np.testing.assert_allclose(_fd_jacobian(lambda p: ansatz_plate(p, params)[1], x), D2y, atol=1e-3)


def test_ansatz_plate_membrane_bounded_in_core():
    sups = []
    for h in (0.1, 0.01):
        params = Params(h, 0.6)
        rng = np.random.default_rng(2)
        x = _points(rng, 20000, r_lo=1e-3 * h, r_hi=h)
        _, Dy, _ = ansatz_plate(x, params)
        G = np.einsum("nia,nib->nab", Dy, Dy) - reference_metric(x, params.delta)
        sups.append(np.max(np.sum(G * G, axis=(1, 2))))
    assert math.isclose(sups[0], sups[1], rel_tol=0.05)


def test_ansatz_fvk_properties():
    params = Params(0.05, 0.6)
    rng = np.random.default_rng(3)
    x = _points(rng, 500, r_lo=0.05, r_hi=1.0)
    u, Du, v, Dv, D2v = ansatz_fvk(x, params)
    r = np.linalg.norm(x, axis=-1)
    xperp = np.stack([-x[:, 1], x[:, 0]], axis=-1) / r[:, None]
    S = Du + np.swapaxes(Du, -1, -2) + np.einsum("na,nb->nab", Dv, Dv) + params.delta**2 * np.einsum(
        "na,nb->nab", xperp, xperp
    )
    assert np.max(np.abs(S)) < 1e-12
    np.testing.assert_allclose(np.sum(D2v * D2v, axis=(1, 2)), params.delta**2 / r**2, rtol=1e-12)
    inner = _points(rng, 100, r_lo=1e-4, r_hi=0.025)
    u, _, v, _, _ = ansatz_fvk(inner, params)
    assert np.all(u == 0.0) and np.all(v == 0.0)
    for x0 in _points(rng, 20, r_lo=0.026, r_hi=0.05):
        _, Du, _, Dv, D2v = ansatz_fvk(x0, params)
        np.testing.assert_allclose(_fd_jacobian(lambda p: ansatz_fvk(p, params)[0], x0), Du, atol=1e-7)
        np.testing.assert_allclose(_fd_jacobian(lambda p: ansatz_fvk(p, params)[2], x0), Dv, atol=1e-7)
        np.testing.assert_allclose(_fd_jacobian(lambda p: ansatz_fvk(p, params)[3], x0), D2v, atol=1e-4)


def test_sector_map_examples():
    rng = np.random.default_rng(4)
    x = _points(rng, 200)
    z, D = sector_map(x, 0.0)
    np.testing.assert_allclose(z, x, atol=1e-14)
    np.testing.assert_allclose(D, np.broadcast_to(np.eye(2), D.shape), atol=1e-14)
    a = math.sqrt(1 - 0.36)
    phi = rng.uniform(-0.99 * a * np.pi, 0.99 * a * np.pi, 200)
    r = rng.uniform(0.01, 1.0, 200)
    x = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)
    z, D = sector_map(x, 0.6)
    np.testing.assert_allclose(np.linalg.norm(z, axis=-1), r, rtol=1e-14)
    np.testing.assert_allclose(np.linalg.det(D), 1.25, rtol=1e-13)


def test_sector_map_errors():
    with pytest.raises(DomainError):
        sector_map(np.array([-1.0, 0.01]), 0.6)
    with pytest.raises(DomainError):
        sector_map(np.zeros(2), 0.6)
    with pytest.raises(DomainError):
        sector_map_inverse(np.array([-0.5, 0.0]), 0.6)


@settings(max_examples=200, deadline=None)
@given(r=st.floats(1e-3, 1.0), frac=st.floats(-0.999, 0.999), delta=deltas)
def test_sector_map_round_trip(r, frac, delta):
    a = math.sqrt(1 - delta**2)
    x = np.array([r * math.cos(frac * a * math.pi), r * math.sin(frac * a * math.pi)])
    z, _ = sector_map(x, delta)
    if z[1] == 0.0 and z[0] < 0.0:
        return
    np.testing.assert_allclose(sector_map_inverse(z, delta), x, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(x1=coord, x2=coord, delta=deltas)
def test_metric_pullback_property(x1, x2, delta):
    x = np.array([x1, x2])
    if np.hypot(x1, x2) < 1e-6:
        return
    _, Dy, _ = cone_map(x, delta)
    np.testing.assert_allclose(Dy.T @ Dy, reference_metric(x, delta), atol=1e-12)
