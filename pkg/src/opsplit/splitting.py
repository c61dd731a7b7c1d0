"""Forward-backward splitting with iteration-dependent steps and over-relaxation.

Finds a zero of ``A + B`` with ``A`` maximally monotone (accessed through its
resolvent) and ``B`` ``beta``-cocoercive via::

    x+ = x + lam_n (J_{gam_n A}(x - gam_n (B x + b_n)) + a_n - x)

with ``gam_n`` in ``[eps, 2 beta/(1+eps)]`` and ``lam_n`` in
``[eps, (1-eps)(2 + eps - gam_n/(2 beta))]``. The upper relaxation bound is
always above 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from . import constants as C
from .exceptions import RangeViolation, ScheduleViolation
from .iteration import IterationTrace, StopRule, _Recorder
from .operators import AveragedMap, SmoothFunction, as_point, compose
from .schedules import CLOSED_BOUND_RTOL, ErrorInjector, Rule, UpperBound, as_rule


class Demiregularity(str, Enum):
    """Documented structure of a fixture; informs nothing at run time."""

    STRONGLY_MONOTONE = "strongly_monotone"
    UNIFORMLY_CONVEX = "uniformly_convex"
    NONE = "none"


@dataclass
class InclusionProblem:
    """``0 in A x + B x``.

    ``resolvent(gamma, y)`` evaluates ``J_{gamma A} y``; ``cocoercive(x)``
    evaluates ``B x``.
    """

    resolvent: Callable
    cocoercive: Callable
    beta: float
    dim: int
    demiregularity: Demiregularity = Demiregularity.NONE

    def __post_init__(self):
        if not float(self.beta) > 0.0:
            raise ValueError("beta must be positive")
        self.beta = float(self.beta)

    def sampled_cocoercivity_gap(self, pairs=1000, seed=0, radius=10.0) -> float:
        """Most negative ``<x-y, Bx-By> - beta ||Bx-By||^2`` over sampled pairs."""
        rng = np.random.default_rng(seed)
        worst = np.inf
        for x, y in rng.uniform(-radius, radius, (pairs, 2, self.dim)):
            db = self.cocoercive(x) - self.cocoercive(y)
            worst = min(worst, float((x - y) @ db - self.beta * (db @ db)))
        return worst


@dataclass
class MinimizationProblem:
    """``minimize f(x) + g(x)`` with ``prox(gamma, y) = prox_{gamma f} y``."""

    prox: Callable
    smooth: SmoothFunction
    dim: int
    objective: Callable | None = None
    demiregularity: Demiregularity = Demiregularity.NONE

    @property
    def beta(self):
        return self.smooth.beta

    def as_inclusion(self) -> InclusionProblem:
        return InclusionProblem(self.prox, self.smooth.gradient, self.smooth.beta, self.dim,
                                self.demiregularity)


@dataclass
class FbSchedule:
    """Step sizes, relaxations and summable errors for forward-backward runs.

    ``lambdas`` may be :class:`~opsplit.schedules.UpperBound`, meaning the
    largest admissible value for the current step size.
    """

    eps: float
    gammas: Rule
    lambdas: Rule
    a_errors: ErrorInjector = field(default_factory=ErrorInjector.none)
    b_errors: ErrorInjector = field(default_factory=ErrorInjector.none)

    def __post_init__(self):
        self.eps = C.Epsilon(self.eps)
        self.gammas = as_rule(self.gammas)
        self.lambdas = as_rule(self.lambdas)

    def lambda_sup(self, beta, gamma):
        return (1.0 - self.eps) * (2.0 + self.eps - gamma / (2.0 * beta))

    def relaxation(self, n, beta, gamma):
        if isinstance(self.lambdas, UpperBound):
            return self.lambdas.fraction * self.lambda_sup(beta, gamma)
        return self.lambdas(n)

    def to_dict(self):
        return {"eps": float(self.eps), "gamma": self.gammas.to_dict(),
                "lambda": self.lambdas.to_dict(), "a_errors": self.a_errors.to_dict(),
                "b_errors": self.b_errors.to_dict()}


@dataclass
class FbScheduleReport:
    valid: bool
    horizon: int
    first_violation: dict | None
    phi: np.ndarray
    lambda_sup: np.ndarray
    max_bound_mismatch: float

    def raise_if_invalid(self):
        if not self.valid:
            v = self.first_violation
            raise ScheduleViolation(
                f"forward-backward schedule violates {v['bound']} at iteration {v['index']}: {v}",
                bound=v["bound"], value=v["value"], lower=v.get("lower"), upper=v.get("upper"),
                index=v["index"],
            )


def validate_fb_schedule(beta, s: FbSchedule, horizon: int) -> FbScheduleReport:
    """Check every ``(gam_n, lam_n)`` pair up to ``horizon`` against the closed ranges.

    Also confirms that ``(1-eps)(2 + eps - gam/(2 beta))`` coincides with
    ``(1-eps)(1 + eps phi)/phi`` for ``phi = 2 beta/(4 beta - gam)``.
    """
    beta = float(beta)
    eps = C.check_fb_eps(beta, s.eps)
    g = s.gammas.values(horizon)
    g_lo, g_hi = C.gamma_range(beta, eps)
    phi = 2.0 * beta / (4.0 * beta - g)
    lam_sup = s.lambda_sup(beta, g)
    if isinstance(s.lambdas, UpperBound):
        lam = s.lambdas.fraction * lam_sup
    else:
        lam = s.lambdas.values(horizon)
    via_phi = (1.0 - eps) * (1.0 + eps * phi) / phi
    mismatch = float(np.max(np.abs(via_phi - lam_sup))) if horizon else 0.0

    checks = [
        ("gamma>=eps", g < g_lo, g, g_lo, g_hi),
        ("gamma<=2beta/(1+eps)", g > g_hi * (1.0 + CLOSED_BOUND_RTOL), g, g_lo, g_hi),
        ("lambda>=eps", lam < eps, lam, float(eps), lam_sup),
        ("lambda<=(1-eps)(2+eps-gamma/(2beta))", lam > lam_sup * (1.0 + CLOSED_BOUND_RTOL), lam, float(eps), lam_sup),
    ]
    first = None
    for name, bad, val, lo, hi in checks:
        if bad.any():
            i = int(np.argmax(bad))
            if first is None or i < first["index"]:
                first = {
                    "bound": name, "index": i, "value": float(val[i]),
                    "gamma": float(g[i]), "gamma_lower": g_lo, "gamma_upper": g_hi,
                    "lambda": float(lam[i]), "lambda_upper": float(lam_sup[i]),
                    "lower": float(lo) if np.isscalar(lo) else float(lo[i]),
                    "upper": float(hi) if np.isscalar(hi) else float(hi[i]),
                }
    return FbScheduleReport(first is None, horizon, first, phi, lam_sup, mismatch)


def forward_backward_operator(p: InclusionProblem, gamma) -> AveragedMap:
    """``J_{gamma A}(Id - gamma B)`` assembled from its two averaged factors."""
    gamma = float(gamma)
    if not 0.0 < gamma < 2.0 * p.beta:
        raise RangeViolation("gamma must lie in ]0, 2 beta[", bound="gamma<2beta",
                             value=gamma, upper=2.0 * p.beta)
    backward = AveragedMap(lambda y: p.resolvent(gamma, y), 0.5, p.dim, name="J_gammaA")
    forward = AveragedMap(lambda x: x - gamma * p.cocoercive(x), gamma / (2.0 * p.beta), p.dim,
                          name="Id-gammaB")
    return compose([backward, forward])


def forward_backward_run(p: InclusionProblem, s: FbSchedule, x0, stop: StopRule, reference=None,
                         thinning=None, validate=True) -> IterationTrace:
    """Run the relaxed, inexact forward-backward iteration.

    Besides the standard trace columns (``alpha`` holds ``phi_n``), ``extras``
    receives the partial sums of ``||J(x_n - gam_n B x_n) - x_n||^2`` and, with a
    reference zero ``x``, of ``||B x_n - B x||^2``.
    """
    x = as_point(x0, p.dim)
    beta = p.beta
    if validate:
        validate_fb_schedule(beta, s, int(stop.max_iterations)).raise_if_invalid()
    meta = {"algorithm": "forward_backward", "beta": beta, **s.to_dict()}
    rec = _Recorder(stop, reference, None, 2, thinning, meta)
    ref = rec.reference
    b_ref = None if ref is None else p.cocoercive(ref)
    exact = s.a_errors.is_zero and s.b_errors.is_zero
    res_sq, b_sum = 0.0, 0.0
    res_hist, b_hist = [], []
    J, B = p.resolvent, p.cocoercive
    for n in range(int(stop.max_iterations) + 1):
        gam = s.gammas(n)
        bx = B(x)
        z0 = J(gam, x - gam * bx)
        residual = float(np.linalg.norm(z0 - x))
        rec.observe(n, x, residual)
        reason = stop.reached(residual, x)
        if reason is None and n == stop.max_iterations:
            reason = "max_iterations"
        if reason is not None:
            t = rec.finish(n, x, reason)
            t.extras.update(residual_sq_sum=res_sq, residual_sq_history=res_hist)
            if ref is not None:
                t.extras.update(cocoercive_sum=b_sum, cocoercive_history=b_hist)
            return t
        phi = 2.0 * beta / (4.0 * beta - gam)
        lam = s.relaxation(n, beta, gam)
        if exact:
            z, err, slots = z0, 0.0, None
        else:
            a = s.a_errors(n, 0, p.dim)
            b = s.b_errors(n, 0, p.dim)
            z = J(gam, x - gam * (bx + b)) + a
            err = float(np.linalg.norm(z - z0))
            slots = [float(np.linalg.norm(a)), gam * float(np.linalg.norm(b))]
        res_sq += residual ** 2
        res_hist.append(res_sq)
        if b_ref is not None:
            db = bx - b_ref
            b_sum += float(db @ db)
            b_hist.append(b_sum)
        rec.step(lam, phi, residual, err, slots, None if slots is None else math.fsum(slots))
        x = x + lam * (z - x)
    raise AssertionError("unreachable")


def proximal_gradient_run(p: MinimizationProblem, s: FbSchedule, x0, stop: StopRule, reference=None,
                          thinning=None, validate=True) -> IterationTrace:
    """Forward-backward with ``A = subdifferential of f`` and ``B = grad g``.

    Objective values ``f + g`` at the stored iterates are added to
    ``extras["objective"]``; they are reported only, never used for control.
    """
    trace = forward_backward_run(p.as_inclusion(), s, x0, stop, reference, thinning, validate)
    trace.metadata["algorithm"] = "proximal_gradient"
    if p.objective is not None:
        trace.extras["objective"] = [(n, float(p.objective(xn))) for n, xn in trace.iterates]
    return trace


@dataclass
class FixedPointReport:
    gamma: float
    residual: float
    tolerance: float

    @property
    def is_fixed_point(self):
        return self.residual <= self.tolerance


def fixed_point_identity_check(p: InclusionProblem, gamma, candidate, tol=1e-12) -> FixedPointReport:
    """Residual ``||J_{gamma A}(x - gamma B x) - x||`` of a candidate zero of ``A + B``."""
    gamma = float(gamma)
    if not 0.0 < gamma < 2.0 * p.beta:
        raise RangeViolation("gamma must lie in ]0, 2 beta[", bound="gamma<2beta",
                             value=gamma, upper=2.0 * p.beta)
    x = as_point(candidate, p.dim)
    r = float(np.linalg.norm(p.resolvent(gamma, x - gamma * p.cocoercive(x)) - x))
    return FixedPointReport(gamma, r, tol)
