"""Front speed and optimal displacement path.

The admissible macroscopic paths f (f(0) = 0) must keep the running action

    J_t(f) = int_0^t f'(s)^2 / (2 sigma(s)^2) ds

below t for every t in [0, 1]; the front speed is the largest reachable
endpoint f(1).  For decreasing sigma the optimum is explicit,

    fbar(t) = sqrt(2) int_0^t sigma,      v = sqrt(2) int_0^1 sigma,

and the discrete solver below must reproduce it.  For general sigma the
problem is solved numerically on a uniform grid of piecewise-linear paths:
maximize sum_j h s_j subject to the convex cumulative constraints
sum_{j<=k} s_j^2 a_j <= t_k with exact interval coefficients
a_j = int 1/(2 sigma^2).

Solver.  The Lagrange dual in the cumulative multipliers L_j (nonincreasing,
positive) separates as sum_j [h L_j + h^2 / (4 a_j L_j)], a convex isotonic
problem solved exactly by pool-adjacent-violators; the primal slopes are
recovered as s_j = h / (2 a_j L_j).  Weak duality makes the returned bound a
certificate regardless of floating-point details: solver_gap is the distance
between a verified feasible point and that bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .profiles import SigmaProfile

BINDING_TOL = 1e-6


class SolverError(RuntimeError):
    """Raised when no certified solution could be produced; carries the best
    feasible point found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class PathFunction:
    """Piecewise-linear path on [0, 1] with f(0) = 0."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.size < 2 or g[0] != 0.0 or abs(g[-1] - 1.0) > 1e-12:
            raise ValueError("grid must increase from 0 to 1 with >= 2 points")
        if np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing")
        if v.shape != g.shape:
            raise ValueError("values must match grid shape")
        if abs(v[0]) > 1e-12:
            raise ValueError("paths start at the origin: values[0] must be 0")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    @staticmethod
    def uniform(values, n: int | None = None) -> "PathFunction":
        v = np.asarray(values, dtype=float)
        return PathFunction(np.linspace(0.0, 1.0, v.size), v)

    def __call__(self, t):
        return np.interp(t, self.grid, self.values)


@dataclass(frozen=True)
class VariationalSolution:
    speed: float
    path: PathFunction
    binding: np.ndarray          # per grid constraint, |J_t - t| <= BINDING_TOL
    solver_gap: float
    dual_bound: float
    unique: bool                 # False when slack constraints admit ties


def speed_closed_form(profile: SigmaProfile) -> float:
    """sqrt(2) * int_0^1 sigma; equals the true front speed for decreasing sigma."""
    return math.sqrt(2.0) * profile.integral_sigma(1.0)


def optimal_path(profile: SigmaProfile, t):
    """fbar(t) = sqrt(2) * int_0^t sigma. Accepts scalars or arrays in [0, 1]."""
    return math.sqrt(2.0) * profile.integral_sigma(t)


def _interval_action(path: PathFunction, profile: SigmaProfile) -> np.ndarray:
    """Per-interval contributions s_j^2 * a_j of the running action."""
    dt = np.diff(path.grid)
    slopes = np.diff(path.values) / dt
    a = profile.inv_sq_integral(path.grid[:-1], path.grid[1:])
    return slopes * slopes * a


def rate_functional(path: PathFunction, profile: SigmaProfile) -> float:
    """Action I(f) = int_0^1 f'^2/(2 sigma^2) of the piecewise-linear path."""
    return float(np.sum(_interval_action(path, profile)))


def constraint_curve(path: PathFunction, profile: SigmaProfile) -> np.ndarray:
    """Running action J_t at every grid point (J_0 = 0, nondecreasing)."""
    return np.concatenate([[0.0], np.cumsum(_interval_action(path, profile))])


def _pav_nonincreasing(sig_eff2: np.ndarray) -> np.ndarray:
    """Minimize sum_j (L_j + sig_eff2_j / (2 L_j)) over nonincreasing L > 0.

    Pool-adjacent-violators with pooled minimizer sqrt(mean(sig_eff2)/2).
    """
    sums: list[float] = []
    counts: list[int] = []
    for s2 in sig_eff2:
        cur_s, cur_c = float(s2), 1
        while sums and cur_s / cur_c >= sums[-1] / counts[-1]:
            cur_s += sums.pop()
            cur_c += counts.pop()
        sums.append(cur_s)
        counts.append(cur_c)
    lam = np.concatenate(
        [np.full(c, math.sqrt(s / (2.0 * c))) for s, c in zip(sums, counts)]
    )
    return lam


def solve_constrained(profile: SigmaProfile, n_grid: int = 512) -> VariationalSolution:
    """Maximize f(1) over grid paths subject to the running action constraints.

    Returns a feasible path together with a weak-duality upper bound; raises
    SolverError (carrying the best feasible point) if the certified gap
    exceeds 1e-6 of the speed.
    """
    if n_grid < 8:
        raise ValueError("n_grid must be >= 8")
    h = 1.0 / n_grid
    edges = np.linspace(0.0, 1.0, n_grid + 1)
    a = np.asarray(profile.inv_sq_integral(edges[:-1], edges[1:]), dtype=float)
    if np.any(a <= 0):
        raise SolverError("degenerate action coefficients")
    sig_eff2 = h / (2.0 * a)

    lam = _pav_nonincreasing(sig_eff2)
    slopes = sig_eff2 / lam
    dual_bound = float(np.sum(h * lam + sig_eff2 * h / (2.0 * lam)))

    # verify feasibility of the recovered primal point; project by uniform
    # slope scaling if floating point pushed any cumulative constraint over
    t_k = edges[1:]
    J = np.cumsum(slopes * slopes * a)
    over = J > t_k
    if np.any(over):
        gamma = math.sqrt(float(np.min(t_k[over] / J[over])))
        slopes = slopes * gamma
        J = np.cumsum(slopes * slopes * a)

    values = np.concatenate([[0.0], np.cumsum(slopes * h)])
    speed = float(values[-1])
    path = PathFunction(edges, values)
    binding = np.abs(J - t_k) <= BINDING_TOL
    gap = max(dual_bound - speed, 0.0)
    solution = VariationalSolution(
        speed=speed,
        path=path,
        binding=binding,
        solver_gap=gap,
        dual_bound=dual_bound,
        unique=bool(np.all(binding)),
    )
    if gap > 1e-6 * max(speed, 1.0):
        raise SolverError(
            f"certified gap {gap:.3e} exceeds tolerance", best=solution
        )
    return solution
