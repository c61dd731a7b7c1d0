"""Seeded benchmark instances with known or precomputed solutions."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .iteration import StopRule
from .operators import (
    Ball,
    Halfspace,
    MonotoneLinear,
    SetDescriptor,
    least_squares,
    power_iteration,
    prox_l1,
    resolvent_map,
    squared_distance,
)
from .schedules import Constant
from .splitting import (
    Demiregularity,
    FbSchedule,
    InclusionProblem,
    MinimizationProblem,
    forward_backward_run,
)

BASELINE_ITERATIONS = 1_000_000
BASELINE_RESIDUAL = 1e-14


def scalar_l1_problem() -> MinimizationProblem:
    """``minimize |x| + (x - 3)^2 / 2``; the minimizer is 2."""
    g = squared_distance([3.0])
    return MinimizationProblem(
        prox=lambda gamma, y: prox_l1(y, gamma),
        smooth=g,
        dim=1,
        objective=lambda x: float(np.abs(x).sum()) + g.value(x),
        demiregularity=Demiregularity.STRONGLY_MONOTONE,
    )


def box_inclusion_problem() -> InclusionProblem:
    """``0 in N_[0,inf)(x) + x - 2`` on the real line; the zero is 2."""
    return InclusionProblem(
        resolvent=lambda gamma, y: np.maximum(y, 0.0),
        cocoercive=lambda x: x - 2.0,
        beta=1.0,
        dim=1,
        demiregularity=Demiregularity.STRONGLY_MONOTONE,
    )


@dataclass
class LassoFixture:
    """``minimize tau ||x||_1 + ||A x - b||^2 / 2`` for a seeded Gaussian ``A``.

    ``A`` is rescaled to unit spectral norm (by power iteration), so the
    gradient is 1-Lipschitz up to the iteration tolerance and ``beta`` is 1.
    """

    A: np.ndarray
    b: np.ndarray
    tau: float
    beta: float
    seed: int
    x_true: np.ndarray
    problem: MinimizationProblem = field(repr=False)
    params: tuple = ()

    @property
    def dim(self):
        return self.A.shape[1]

    def objective(self, x):
        return self.problem.objective(x)


def lasso_fixture(rows=20, cols=50, seed=0, tau_ratio=0.1, sparsity=5, noise=0.01) -> LassoFixture:
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((rows, cols))
    a /= np.sqrt(power_iteration(a, tol=1e-14))
    x_true = np.zeros(cols)
    support = rng.choice(cols, size=min(sparsity, cols), replace=False)
    x_true[support] = rng.standard_normal(support.size) * 2.0
    b = a @ x_true + noise * rng.standard_normal(rows)
    tau = tau_ratio * float(np.max(np.abs(a.T @ b)))
    lip = power_iteration(a, tol=1e-10)
    g = least_squares(a, b, lipschitz=lip)
    problem = MinimizationProblem(
        prox=lambda gamma, y: prox_l1(y, gamma * tau),
        smooth=g,
        dim=cols,
        objective=lambda x: tau * float(np.abs(x).sum()) + g.value(x),
    )
    return LassoFixture(a, b, tau, g.beta, seed, x_true, problem,
                        (rows, cols, seed, tau_ratio, sparsity, noise))


@lru_cache(maxsize=8)
def _lasso_reference(params):
    fx = lasso_fixture(*params)
    cols = fx.dim
    sched = FbSchedule(eps=min(0.1, fx.beta / 2), gammas=Constant(fx.beta), lambdas=Constant(1.0))
    stop = StopRule(BASELINE_ITERATIONS, residual_tolerance=BASELINE_RESIDUAL)
    trace = forward_backward_run(fx.problem.as_inclusion(), sched, np.zeros(cols), stop,
                                 thinning=BASELINE_ITERATIONS, validate=False)
    return trace.x, trace.iterations, trace.final_residual


def lasso_reference(fx: LassoFixture):
    """Baseline minimizer: unrelaxed steps with ``gamma = beta`` from zero.

    The run is capped at 10^6 iterations and stops early once the fixed-point
    residual reaches 1e-14, where further iterations no longer move the point.
    Returns ``(x, iterations, final_residual)``; cached per fixture shape.
    """
    x, it, res = _lasso_reference(fx.params)
    return x.copy(), it, res


@dataclass
class FeasibilityFixture:
    sets: list
    x0: np.ndarray
    interior_point: np.ndarray
    seed: int


def feasibility_fixture(dim=2, seed=0, margin=0.25) -> FeasibilityFixture:
    """Two halfspaces and a ball whose intersection has nonempty interior.

    All three sets contain the ball of radius ``margin`` around a seeded
    centre; the starting point lies well outside the intersection.
    """
    rng = np.random.default_rng(seed)
    c = rng.uniform(-1.0, 1.0, dim)
    sets: list[SetDescriptor] = []
    for _ in range(2):
        u = rng.standard_normal(dim)
        u /= np.linalg.norm(u)
        sets.append(Halfspace(u, float(u @ c) + margin + rng.uniform(0.0, 0.5)))
    shift = rng.standard_normal(dim)
    # |shift| = 1 - 2*margin keeps the margin-ball around c inside the unit ball
    sets.append(Ball(c + (1.0 - 2.0 * margin) * shift / np.linalg.norm(shift), 1.0))
    x0 = c + rng.standard_normal(dim) * 10.0
    return FeasibilityFixture(sets, x0, c, seed)


@dataclass
class MonotoneLinearFixture:
    """``0 in M x + (x - c)`` with a monotone (non-symmetric) ``M``; ``B = Id - c``."""

    M: MonotoneLinear
    shift: np.ndarray
    problem: InclusionProblem
    solution: np.ndarray


def monotone_linear_fixture(dim=5, seed=0, coefficients=None, shift=None) -> MonotoneLinearFixture:
    rng = np.random.default_rng(seed)
    if coefficients is None:
        g = rng.standard_normal((dim, dim))
        s = rng.standard_normal((dim, dim))
        coefficients = 0.2 * g @ g.T + (s - s.T)
    m = MonotoneLinear(coefficients)
    c = rng.standard_normal(m.dim) if shift is None else np.asarray(shift, dtype=float)
    k = m.coefficients
    cache = {}

    def resolvent(gamma, y):
        if gamma not in cache:
            cache.clear()
            cache[gamma] = resolvent_map(m, gamma)
        return cache[gamma](y)

    problem = InclusionProblem(resolvent, lambda x: x - c, beta=1.0, dim=m.dim,
                               demiregularity=Demiregularity.STRONGLY_MONOTONE)
    solution = np.linalg.solve(k + np.eye(m.dim), c)
    return MonotoneLinearFixture(m, c, problem, solution)
