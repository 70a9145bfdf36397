"""Limited-memory quasi-Newton minimization with Armijo backtracking.

The oracle is any callable ``x -> (energy, gradient)`` on flat float arrays.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

log = logging.getLogger(__name__)


class OptimizationError(RuntimeError):
    """The oracle produced a non-finite energy or gradient at an accepted point."""


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 20000
    grad_tol: float = 1e-10
    energy_rel_tol: float = 1e-12
    stall_window: int = 50
    lbfgs_memory: int = 20
    c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    restarts: int = 3
    perturbation: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.c1 < 0.5:
            raise ValueError("Armijo constant c1 must lie in (0, 0.5)")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtrack factor must lie in (0, 1)")
        positive = ("max_iters", "grad_tol", "energy_rel_tol", "stall_window", "lbfgs_memory", "max_backtracks")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.restarts < 0 or self.perturbation < 0:
            raise ValueError("restarts and perturbation must be non-negative")

    @classmethod
    def for_thickness(cls, h, **overrides):
        """Defaults with the gradient tolerance scaled like the energy, ~ h^2."""
        overrides.setdefault("grad_tol", 1e-7 * h**2)
        return cls(**overrides)

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass
class OptimizeReport:
    iterations: int
    energy: float
    grad_norm: float
    history: list = field(default_factory=list)
    reason: str = ""
    evaluations: int = 0
    breakdown: dict | None = None
    start: str = ""
    restart_energies: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def minimize(oracle, x0, config: OptimizerConfig | None = None, *, precond=None, project=None):
    """Minimize ``oracle`` from ``x0``.

    ``precond`` seeds the inverse-Hessian estimate: either a positive
    diagonal approximating the Hessian diagonal, or a callable applying an
    approximate inverse Hessian to a vector. ``project`` maps a
    point onto a gauge slice without changing its energy (e.g. removing
    mean values of fields whose energy only sees derivatives).

    Returns ``(x, report)``. Energies in ``report.history`` are
    non-increasing.
    """
    cfg = config or OptimizerConfig()
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("starting point is not finite")
    if project is not None:
        x = project(x)
    hinv = _inverse_operator(precond)

    f, g = oracle(x)
    evals = 1
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise OptimizationError(f"non-finite energy or gradient at the starting point (energy={f})")
    history = [float(f)]
    mem = deque(maxlen=cfg.lbfgs_memory)
    reason = "max_iters"
    it = 0

    while it < cfg.max_iters:
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= cfg.grad_tol:
            reason = "grad_tol"
            break
        d = -_two_loop(g, mem, hinv)
        slope = float(g @ d)
        if not slope < 0.0:
            mem.clear()
            d = -g if hinv is None else -hinv(g)
            slope = float(g @ d)

        if not mem:
            # no curvature information yet: cap the first trial step
            t = min(1.0, 1.0 / max(float(np.max(np.abs(d))), 1e-300)) if hinv is None else 1.0
        else:
            t = 1.0
        for _ in range(cfg.max_backtracks):
            x_new = x + t * d
            if project is not None:
                x_new = project(x_new)
            f_new, g_new = oracle(x_new)
            evals += 1
            if math.isfinite(f_new) and f_new <= f + cfg.c1 * t * slope:
                break
            t *= cfg.backtrack
        else:
            reason = "line_search_failed"
            break
        if not np.all(np.isfinite(g_new)):
            raise OptimizationError(f"non-finite gradient at accepted point, iteration {it + 1}")
        assert f_new <= f, "accepted step increased the energy"

        s, y = x_new - x, g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * math.sqrt(float(s @ s) * float(y @ y)):
            yhy = float(y @ y) if hinv is None else float(y @ hinv(y))
            mem.append((s, y, 1.0 / sy, sy / yhy))
        x, f, g = x_new, f_new, g_new
        history.append(float(f))
        it += 1

        w = cfg.stall_window
        if len(history) > w and history[-w - 1] - f <= cfg.energy_rel_tol * abs(f):
            reason = "energy_stalled"
            break

    report = OptimizeReport(
        iterations=it,
        energy=float(f),
        grad_norm=float(np.max(np.abs(g))),
        history=history,
        reason=reason,
        evaluations=evals,
    )
    log.debug("minimize: %s after %d iterations, energy %.12g", reason, it, f)
    return x, report


def factorized_inverse(H, shift=1e-10):
    """Sparse LU of ``H + shift * mean(diag H) * I`` as an inverse-Hessian seed.

    The shift removes exact null directions such as constant offsets.
    """
    H = sp.csc_matrix(H)
    diag = H.diagonal()
    lu = splu((H + sp.diags(np.full(H.shape[0], shift * float(np.mean(np.abs(diag)))))).tocsc())
    return lu.solve


def _inverse_operator(precond):
    if precond is None or callable(precond):
        return precond
    inv = 1.0 / np.asarray(precond, dtype=float)
    return lambda q: inv * q


def _two_loop(g, mem, hinv):
    q = g.copy()
    alphas = []
    for s, y, rho, _ in reversed(mem):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    gamma = mem[-1][3] if mem else 1.0
    q = gamma * (q if hinv is None else hinv(q))
    for (s, y, rho, _), a in zip(mem, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def gradient_check(oracle, x, n_directions=10, steps=(1e-4, 1e-5, 1e-6), seed=0):
    """Largest relative error of the analytic directional derivative.

    Central differences along ``n_directions`` random unit directions; the
    result is the smallest, over the step sizes, of the worst direction.
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    _, g = oracle(x)
    dirs = rng.standard_normal((n_directions, x.size))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    best = math.inf
    for step in steps:
        worst = 0.0
        for d in dirs:
            fd = (oracle(x + step * d)[0] - oracle(x - step * d)[0]) / (2.0 * step)
            an = float(g @ d)
            worst = max(worst, abs(fd - an) / max(abs(an), 1e-300))
        best = min(best, worst)
    return best


# -- problem-level drivers -------------------------------------------------------


def smooth_perturbation(grid, n_fields, amplitude, rng, max_mode=3):
    """Random combination of low angular modes times a smooth radial bump.

    Shape ``(n_fields * grid.size,)``; each field is scaled to sup-norm ``amplitude``.
    """
    s = (grid.s - grid.s[0]) / (grid.s[-1] - grid.s[0])
    out = []
    for _ in range(n_fields):
        f = np.zeros(grid.shape)
        for m in range(max_mode + 1):
            a, b = rng.standard_normal(2)
            k = rng.integers(1, 4)
            radial = np.sin(math.pi * k * s)
            f += np.outer(radial, a * np.cos(m * grid.phi) + b * np.sin(m * grid.phi))
        out.append(amplitude * f / max(float(np.max(np.abs(f))), 1e-300))
    return np.concatenate([f.ravel() for f in out])


def solve(problem, x0, config: OptimizerConfig, *, start="given"):
    """Minimize a problem (see :mod:`disclination.energy`) with seeded random restarts.

    The first run starts at ``x0``; each restart perturbs the best point so
    far by smooth low modes of relative size ``config.perturbation`` and the
    lowest energy wins. The inverse-Hessian seed is built once at ``x0``.
    """
    precond = problem.preconditioner(x0)
    x, report = minimize(problem.oracle, x0, config, precond=precond, project=problem.project)
    best_x, best = x, report
    energies = [report.energy]
    n_fields = x0.size // problem.grid.size
    for k in range(config.restarts):
        rng = np.random.default_rng([config.seed, k])
        amp = config.perturbation * max(float(np.max(np.abs(best_x))), 1.0)
        trial = best_x + smooth_perturbation(problem.grid, n_fields, amp, rng)
        x, report = minimize(problem.oracle, trial, config, precond=precond, project=problem.project)
        energies.append(report.energy)
        if report.energy < best.energy:
            best_x, best = x, report
    best.restart_energies = energies
    best.start = start
    best.breakdown = problem.breakdown(best_x).to_dict()
    return best_x, best


@dataclass
class ContinuationStep:
    h: float
    grid: object
    problem: object
    x: np.ndarray | None
    report: OptimizeReport | None
    ansatz_energy: float
    error: str | None = None


def continuation(h_list, delta, model, grid_policy=None, config=None):
    """Minimize along a decreasing sequence of thicknesses.

    ``grid_policy(h)`` returns the grid for each ``h`` (default
    :meth:`PolarGrid.for_thickness`). ``config`` is an :class:`OptimizerConfig`
    or a callable ``h -> OptimizerConfig`` (default
    :meth:`OptimizerConfig.for_thickness`). The first ``h`` starts from the ansatz;
    later ones start from the previous minimizer resampled to the new grid,
    unless the ansatz has lower energy there. Failures are recorded per step
    and the sweep carries on.
    """
    from .energy import make_problem
    from .geometry import Params
    from .grid import PolarGrid

    h_list = [float(h) for h in h_list]
    if any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise ValueError("h_list must be strictly decreasing")
    grid_policy = grid_policy or PolarGrid.for_thickness
    steps, prev = [], None
    for h in h_list:
        params = Params(h, delta, model)
        grid = grid_policy(h)
        problem = make_problem(params, grid)
        x_ansatz = problem.ansatz()
        e_ansatz = problem.breakdown(x_ansatz).total
        x0, start = x_ansatz, "ansatz"
        if prev is not None:
            warm = problem.project(problem.resample(prev.x, prev.grid))
            if problem.breakdown(warm).total < e_ansatz:
                x0, start = warm, "warm"
        if config is None:
            cfg = OptimizerConfig.for_thickness(h)
        else:
            cfg = config(h) if callable(config) else config
        try:
            x, report = solve(problem, x0, cfg, start=start)
        except (OptimizationError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("continuation: h=%g failed: %s", h, exc)
            steps.append(ContinuationStep(h, grid, problem, None, None, e_ansatz, error=f"{type(exc).__name__}: {exc}"))
            continue
        step = ContinuationStep(h, grid, problem, x, report, e_ansatz)
        steps.append(step)
        prev = step
    return steps
