from __future__ import annotations

import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from disclination.energy import (
    EnergyBreakdown,
    dist_so3,
    fvk_energy,
    fvk_gradient,
    kl3d_energy,
    make_problem,
    plate_energy,
    plate_gradient,
    stored_energy,
)
from disclination.geometry import Params, cone_map
from disclination.grid import PolarGrid
from disclination.optimize import gradient_check

GRID = PolarGrid(0.01, 32, 32)


def _smooth_fields(grid, rng, n, scale=0.1):
    X, Y = grid.rr * grid.cos, grid.rr * grid.sin
    out = []
    for _ in range(n):
        a = rng.standard_normal(6)
        out.append(scale * (a[0] * X + a[1] * Y + a[2] * X * Y + a[3] * np.sin(2 * X) + a[4] * np.cos(Y) * X + a[5] * Y**3))
    return np.stack(out)


def test_breakdown():
    b = EnergyBreakdown(1.5, 0.25)
    assert b.total == 1.75 and b.to_dict() == {"membrane": 1.5, "bending": 0.25, "total": 1.75}


def test_fvk_flat_state():
    params = Params(0.1, 0.6)
    g = PolarGrid(0.001, 256, 32)
    b = fvk_energy(np.zeros((2, *g.shape)), np.zeros(g.shape), params, g)
    assert b.bending == 0.0
    assert math.isclose(b.membrane, math.pi * 0.6**4 * (1 - 0.001**2), rel_tol=1e-3)
    assert math.isclose(b.membrane, 0.4072, rel_tol=1e-3)


def test_fvk_cone_bending_closed_form():
    errs = []
    for n in (32, 64, 128):
        g = PolarGrid(0.01, n, 32)
        params = Params(0.1, 0.6)
        b = fvk_energy(np.zeros((2, *g.shape)), 0.6 * g.rr, params, g)
        errs.append(abs(b.bending / (2 * math.pi * 0.36 * 0.01 * math.log(100.0)) - 1.0))
    assert errs[-1] < 5e-3 and errs[0] / errs[-1] > 8.0


def test_shape_errors():
    params = Params(0.1, 0.5)
    with pytest.raises(ValueError, match="shape"):
        fvk_energy(np.zeros((2, 4, 4)), np.zeros(GRID.shape), params, GRID)
    with pytest.raises(ValueError, match="shape"):
        plate_energy(np.zeros((3, 8, 32)), params, GRID)


def test_fvk_invariances():
    rng = np.random.default_rng(0)
    params = Params(0.05, 0.5)
    for _ in range(5):
        u = _smooth_fields(GRID, rng, 2)
        v = _smooth_fields(GRID, rng, 1)[0]
        base = fvk_energy(u, v, params, GRID)
        shifted = fvk_energy(u + rng.standard_normal((2, 1, 1)), v + rng.standard_normal(), params, GRID)
        flipped = fvk_energy(u, -v, params, GRID)
        for other in (shifted, flipped):
            assert abs(other.total - base.total) <= 1e-12 * max(1.0, base.total)
            assert other.membrane >= 0.0 and other.bending >= 0.0


def test_fvk_gradient_linear_in_u():
    rng = np.random.default_rng(1)
    params = Params(0.05, 0.5)
    v = _smooth_fields(GRID, rng, 1)[0]
    u1, u2 = _smooth_fields(GRID, rng, 2), _smooth_fields(GRID, rng, 2)
    g = lambda u: fvk_gradient(u, v, params, GRID)[0]  # noqa: E731
    lhs, rhs = g(u1 + u2), g(u1) + g(u2) - g(np.zeros_like(u1))
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(lhs)))


def test_plate_cone_map():
    params = Params(0.1, 0.6)
    out = []
    for n in (64, 128):
        g = PolarGrid(0.01, n, n)
        y, _, _ = cone_map(g.points(), 0.6)
        b = plate_energy(np.moveaxis(y, -1, 0), params, g)
        out.append((b.membrane, abs(b.bending / (0.01 * 2 * math.pi * 0.36 * math.log(100.0)) - 1)))
    # membrane is the square of an O(step^2) metric defect
    assert out[1][0] < 1e-5 and out[0][0] / out[1][0] > 8.0
    assert out[1][1] < 1e-3 and out[0][1] / out[1][1] > 3.5


def test_plate_frame_indifference():
    rng = np.random.default_rng(2)
    params = Params(0.05, 0.5)
    y = _smooth_fields(GRID, rng, 3) + np.stack([GRID.rr * GRID.cos, GRID.rr * GRID.sin, np.zeros(GRID.shape)])
    base = plate_energy(y, params, GRID)
    gy = plate_gradient(y, params, GRID)
    for R in Rotation.random(20, random_state=3).as_matrix():
        c = rng.standard_normal(3)
        moved = np.einsum("ij,j...->i...", R, y) + c[:, None, None]
        b = plate_energy(moved, params, GRID)
        assert abs(b.membrane - base.membrane) <= 1e-12 * max(1.0, base.membrane)
        assert abs(b.bending - base.bending) <= 1e-12 * max(1.0, base.bending)
        gm = plate_gradient(moved, params, GRID)
        np.testing.assert_allclose(gm, np.einsum("ij,j...->i...", R, gy), atol=1e-10 * np.max(np.abs(gy)))


def test_plate_flat_isometry_is_critical():
    # the discrete identity map is exact only to O(step^2), so energy and gradient vanish under refinement
    flat = SimpleNamespace(h=0.1, delta=0.0)
    prev = None
    for n in (32, 64, 128):
        g = PolarGrid(0.01, n, n)
        y = np.stack([g.rr * g.cos, g.rr * g.sin, np.zeros(g.shape)])
        b, gr = plate_energy(y, flat, g), plate_gradient(y, flat, g)
        assert np.all(gr[2] == 0.0)
        cur = (b.total, np.max(np.abs(gr)))
        if prev is not None:
            assert prev[0] / cur[0] > 8.0 and prev[1] / cur[1] > 3.5
        prev = cur
    assert prev[1] < 1e-2


@pytest.mark.parametrize("model", ["fvk", "plate"])
def test_gradient_finite_difference(model):
    rng = np.random.default_rng(4)
    pr = make_problem(Params(0.05, 0.5, model), GRID)
    n = pr.flat_state().size // GRID.size
    x = pr.ansatz() + _smooth_fields(GRID, rng, n, 0.02).ravel()
    assert gradient_check(pr.oracle, x, n_directions=10) < 1e-6


def test_oracle_is_deterministic():
    rng = np.random.default_rng(5)
    pr = make_problem(Params(0.05, 0.5), GRID)
    x = pr.ansatz() + _smooth_fields(GRID, rng, 3, 0.02).ravel()
    e1, g1 = pr.oracle(x)
    e2, g2 = pr.oracle(x.copy())
    assert e1 == e2 and np.array_equal(g1, g2)


def _expansion(u, v, h, delta, grid):
    """Coefficients of the discrete plate energy of ``x + eps^2 u + eps v e3`` as a quartic in ``eps^2``."""
    base = np.stack([grid.rr * grid.cos, grid.rr * grid.sin, np.zeros(grid.shape)])
    eps = np.array([0.2, 0.4, 0.6, 0.8, 1.0])
    vals = []
    for e in eps:
        y = base + np.concatenate([e**2 * u, e * v[None]])
        vals.append(plate_energy(y, Params(e * h, e * delta, "plate"), grid).total)
    return np.linalg.solve(np.vander(eps**2, 5, increasing=True), vals)


def test_fvk_plate_consistency():
    # I(eps) - eps^4 I_vK = O(eps^6) in the continuum; discretely the eps^0 and eps^2 coefficients
    # are O(step^2) defects of the identity map and must vanish under refinement
    h, delta = 0.2, 0.5
    prev = None
    for n in (32, 64, 128):
        g = PolarGrid(0.05, n, n)
        X, Y = g.rr * g.cos, g.rr * g.sin
        u = np.stack([0.1 * np.sin(X * Y), 0.2 * X * Y * Y])
        v = np.cos(X) + 0.5 * X * Y
        c = _expansion(u, v, h, delta, g)
        e_vk = fvk_energy(u, v, Params(h, delta), g).total
        cur = np.array([abs(c[0]), abs(c[1]), abs(c[2] / e_vk - 1.0)])
        if prev is not None:
            assert np.all(prev / cur > 3.0), (prev, cur)
        prev = cur
    assert np.all(prev < 1e-2)


def test_dist_so3_examples():
    assert dist_so3(np.eye(3)) == pytest.approx(0.0, abs=1e-15)
    assert dist_so3(2 * np.eye(3)) == pytest.approx(math.sqrt(3), rel=1e-14)
    assert dist_so3(np.diag([1.0, 1.0, 0.0])) == pytest.approx(1.0, rel=1e-14)
    assert dist_so3(np.diag([1.0, 1.0, -1.0])) == pytest.approx(2.0, rel=1e-14)
    R = Rotation.random(50, random_state=0).as_matrix()
    assert np.max(stored_energy(R)) < 1e-24


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.1, 3.0))
def test_dist_so3_is_rotation_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    F = scale * rng.standard_normal((3, 3))
    R1, R2 = Rotation.random(2, random_state=seed % 2**31).as_matrix()
    d = dist_so3(F)
    assert d >= 0.0
    assert dist_so3(R1 @ F @ R2) == pytest.approx(d, rel=1e-10, abs=1e-12)
    # distance is attained: no rotation is closer than the returned value
    assert d <= np.linalg.norm(F - R1) + 1e-12


def test_kl3d_flat_limit_is_order_h2():
    ratios = []
    for h in (0.1, 0.05, 0.025):
        E = kl3d_energy(SimpleNamespace(h=h, delta=0.0, model="plate"), 4)
        ratios.append(E / h**2)
    assert max(ratios) / min(ratios) < 1.5


def test_kl3d_validation():
    with pytest.raises(ValueError):
        kl3d_energy(Params(0.1, 0.5), 1)
