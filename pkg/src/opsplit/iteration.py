"""Relaxed fixed-point iterations with inexact operator evaluations.

Three runners share one loop:

* :func:`km_run` -- ``x+ = x + lam (T_n x + e_n - x)``.
* :func:`composed_run` -- the same with ``T_n = T_{1,n} ... T_{m,n}`` and one
  error slot per factor, relaxed up to ``(1-eps)(1+eps phi_n)/phi_n``.
* :func:`string_run` -- a weighted average of compositions, classical range.

Every run returns an :class:`IterationTrace` holding the per-iteration
residuals and the running sums whose boundedness the convergence theory
predicts. When a reference fixed point is supplied the trace also keeps the
Fejer-with-errors ledger.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import constants as C
from .exceptions import NumericalFailure
from .operators import AveragedMap, as_point, combine, compose, distance_to_sets
from .schedules import EXTENDED, ErrorInjector, Schedule, Table, UpperBound

TRACE_COLUMNS = ("index", "residual", "lambda", "alpha", "error_norm", "dist_to_ref", "running_sum")
LEDGER_RTOL = 1e-9


@dataclass(frozen=True)
class StopRule:
    max_iterations: int = 1000
    residual_tolerance: float = 0.0
    target: Sequence[float] | None = None
    target_tolerance: float = 0.0

    def __post_init__(self):
        if int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be a positive integer")
        if self.residual_tolerance < 0 or self.target_tolerance < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.target is not None:
            object.__setattr__(self, "target", as_point(self.target))

    def thinning(self):
        return 1 if self.max_iterations < 10_000 else 10

    def reached(self, residual, x):
        if residual <= self.residual_tolerance:
            return "residual"
        if self.target is not None and np.linalg.norm(x - self.target) <= self.target_tolerance:
            return "target"
        return None

    def to_dict(self):
        d = {"max_iterations": int(self.max_iterations), "residual_tolerance": self.residual_tolerance}
        if self.target is not None:
            d["target"] = list(map(float, self.target))
            d["target_tolerance"] = self.target_tolerance
        return d


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v)) if not isinstance(v, int) else str(v)


@dataclass
class IterationTrace:
    """Append-only record of a run.

    Row ``n`` describes the iterate ``x_n`` and the step taken from it. The
    row of the terminal iterate has no step, so its ``lambda``, ``alpha`` and
    ``error_norm`` are ``None``.
    """

    index: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    error_norm: list = field(default_factory=list)
    dist_to_ref: list = field(default_factory=list)
    running_sum: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    set_distances: list = field(default_factory=list)
    error_bound: list = field(default_factory=list)
    error_sum: float = 0.0
    factor_error_sums: list = field(default_factory=list)
    factor_displacement_sums: list = field(default_factory=list)
    fejer_violations: int = 0
    ledger: dict | None = None
    x: np.ndarray | None = None
    iterations: int = 0
    stop_reason: str = "max_iterations"
    annotations: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.stop_reason in ("residual", "target")

    @property
    def final_residual(self):
        return self.residual[-1]

    def rows(self):
        for row in zip(self.index, self.residual, self.lam, self.alpha, self.error_norm,
                       self.dist_to_ref, self.running_sum):
            yield row

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in self.rows():
            w.writerow([_fmt(v) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_json(self, path=None) -> str:
        def clean(v):
            return None if v is None or (isinstance(v, float) and math.isnan(v)) else v

        cols = {
            "index": self.index, "residual": self.residual, "lambda": self.lam,
            "alpha": self.alpha, "error_norm": self.error_norm,
            "dist_to_ref": self.dist_to_ref, "running_sum": self.running_sum,
        }
        doc = {
            "metadata": self.metadata,
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "annotations": self.annotations,
            "error_sum": self.error_sum,
            "factor_error_sums": self.factor_error_sums,
            "factor_displacement_sums": self.factor_displacement_sums,
            "fejer_violations": self.fejer_violations,
            "final_iterate": None if self.x is None else self.x.tolist(),
            "columns": {k: [clean(v) for v in vs] for k, vs in cols.items()},
        }
        text = json.dumps(doc, indent=1, sort_keys=True, allow_nan=False)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


class _Recorder:
    """Shared bookkeeping for every runner."""

    def __init__(self, stop, reference, sets, n_slots, thinning, metadata):
        self.trace = IterationTrace(metadata=metadata)
        self.reference = None if reference is None else as_point(reference)
        self.sets = sets
        self.thin = thinning if thinning is not None else stop.thinning()
        self.trace.factor_error_sums = [0.0] * n_slots
        self._sum = 0.0
        # full-resolution ledger data (only kept with a reference point)
        self._d = []
        self._dec = []
        self._pert = []

    def observe(self, n, x, residual):
        t = self.trace
        if not math.isfinite(residual):
            raise NumericalFailure(f"non-finite residual at iteration {n}")
        t.index.append(n)
        t.residual.append(residual)
        if self.reference is not None:
            d = float(np.linalg.norm(x - self.reference))
            t.dist_to_ref.append(d)
            self._d.append(d)
        else:
            t.dist_to_ref.append(None)
        if n % self.thin == 0:
            t.iterates.append((n, x.copy()))
            if self.sets:
                t.set_distances.append((n, distance_to_sets(self.sets, x)))

    def step(self, lam, alpha, residual, err_norm, slot_norms=None, err_bound=None):
        t = self.trace
        self._sum += lam * (1.0 / alpha - lam) * residual ** 2
        t.lam.append(lam)
        t.alpha.append(float(alpha))
        t.error_norm.append(err_norm)
        t.running_sum.append(self._sum)
        t.error_sum += lam * err_norm
        if slot_norms is not None:
            for i, s in enumerate(slot_norms):
                t.factor_error_sums[i] += lam * s
        t.error_bound.append(err_bound)
        if self.reference is not None:
            self._dec.append(lam * (1.0 / alpha - lam) * residual ** 2)
            self._pert.append(lam * err_norm)

    def finish(self, n, x, reason):
        t = self.trace
        t.lam.append(None)
        t.alpha.append(None)
        t.error_norm.append(None)
        t.running_sum.append(self._sum)
        t.iterations = n
        t.stop_reason = reason
        t.x = x.copy()
        if t.iterates and t.iterates[-1][0] != n:
            t.iterates.append((n, x.copy()))
            if self.sets:
                t.set_distances.append((n, distance_to_sets(self.sets, x)))
        if self.reference is not None:
            self._close_ledger()
        return t

    def _close_ledger(self):
        """Check both Fejer-type inequalities against the reference point.

        Linear form: ``d_{n+1} <= d_n + lam_n ||e_n||``. Squared form:
        ``d_{n+1}^2 <= d_n^2 - lam_n (1/a_n - lam_n) r_n^2 + nu lam_n ||e_n||`` with
        ``nu`` estimated from the realized run.
        """
        t = self.trace
        d = np.asarray(self._d)
        pert = np.asarray(self._pert)
        if d.size < 2:
            t.ledger = {"nu": 0.0, "linear_violations": 0, "squared": None}
            return
        slack = LEDGER_RTOL * np.maximum(1.0, d[:-1])
        lin = d[1:] - (d[:-1] + pert) > slack
        t.fejer_violations = int(lin.sum())
        nu = float(pert.sum() + 2.0 * d.max())
        rep = quasi_fejer_check(d ** 2, np.asarray(self._dec), nu * pert, slack=LEDGER_RTOL)
        t.ledger = {
            "nu": nu,
            "linear_violations": t.fejer_violations,
            "first_linear_violation": int(np.argmax(lin)) if lin.any() else None,
            "squared": rep,
        }
        t.fejer_violations += rep.violations


def _factor_alpha(factors, cache):
    key = id(factors)
    if key not in cache:
        cache.clear()
        cache[key] = (factors, C.compose_many_closed([f.alpha for f in factors]))
    return cache[key][1]


def _iterate(factors_at, schedule, errors, x0, stop, reference=None, sets=None,
             thinning=None, metadata=None, n_slots=1, displacement=False, alpha_at=None):
    x = as_point(x0)
    errors = errors or ErrorInjector.none()
    rec = _Recorder(stop, reference, sets, n_slots, thinning, metadata or {})
    ref = rec.reference
    cache = {}
    rule = schedule.relaxations
    if isinstance(rule, Table) and len(rule.entries) < stop.max_iterations:
        rec.trace.annotations.append(
            f"relaxation table of length {len(rule.entries)} repeats its final value"
        )
    disp = None
    for n in range(int(stop.max_iterations) + 1):
        factors = factors_at(n)
        if len(factors) != n_slots:
            raise ValueError(f"iteration {n}: {len(factors)} factors for {n_slots} error slots")
        for f in factors:
            if f.dim != x.size:
                raise ValueError(f"dimension mismatch: operator {f.dim}, point {x.size}")
        # exact chain, innermost first; chain[i] = T_{i+1..m} x (chain[m] = x)
        chain = [x]
        for f in reversed(factors):
            chain.append(f(chain[-1]))
        chain.reverse()
        tx = chain[0]
        residual = float(np.linalg.norm(tx - x))
        rec.observe(n, x, residual)
        reason = stop.reached(residual, x)
        if reason is None and n == stop.max_iterations:
            reason = "max_iterations"
        if reason is not None:
            return rec.finish(n, x, reason)
        alpha = alpha_at(n) if alpha_at is not None else _factor_alpha(factors, cache)
        lam = schedule.relaxation(n, alpha)
        if errors.is_zero:
            y, err_norm, slot_norms = tx, 0.0, None
        else:
            y = x
            slot_norms = [0.0] * n_slots
            for i in range(n_slots - 1, -1, -1):
                e = errors(n, i, x.size)
                slot_norms[i] = float(np.linalg.norm(e))
                y = factors[i](y) + e
            err_norm = float(np.linalg.norm(y - tx))
        if displacement and ref is not None:
            if disp is None:
                disp = [0.0] * n_slots
            rchain = [ref]
            for f in reversed(factors):
                rchain.append(f(rchain[-1]))
            rchain.reverse()
            for i, f in enumerate(factors):
                a_i = float(f.alpha)
                dv = (chain[i + 1] - chain[i]) - (rchain[i + 1] - rchain[i])
                disp[i] += lam * (1.0 - a_i) / a_i * float(dv @ dv)
        bound = None if slot_norms is None else math.fsum(slot_norms)
        rec.step(lam, alpha, residual, err_norm, slot_norms, bound)
        x = x + lam * (y - x)
        if disp is not None:
            rec.trace.factor_displacement_sums = list(disp)
    raise AssertionError("unreachable")


def _operator_source(operators):
    if isinstance(operators, AveragedMap):
        single = [operators]
        return lambda n: single
    if callable(operators):
        return lambda n: [operators(n)]
    ops = list(operators)
    if not ops:
        raise ValueError("no operators supplied")
    wrapped = [[t] for t in ops]
    return lambda n: wrapped[min(n, len(wrapped) - 1)]


def km_run(operators, schedule: Schedule, errors: ErrorInjector | None, x0, stop: StopRule,
           reference=None, sets=None, thinning=None) -> IterationTrace:
    """Inexact Krasnosel'skii-Mann iteration ``x+ = x + lam_n (T_n x + e_n - x)``.

    Parameters
    ----------
    operators : AveragedMap, callable or sequence
        The operator ``T_n``: one map for all ``n``, a function of ``n``, or a
        list whose last entry repeats.
    schedule : Schedule
        Relaxations, checked at run time against each ``alpha_n``.
    errors : ErrorInjector or None
        Slot 0 supplies ``e_n``.
    reference : array_like, optional
        A common fixed point; enables ``dist_to_ref`` and the Fejer ledger.
    """
    meta = {"algorithm": "km", **schedule.to_dict()}
    return _iterate(_operator_source(operators), schedule, errors, x0, stop, reference, sets,
                    thinning, meta)


def composed_run(factors_per_iteration, schedule: Schedule, errors: ErrorInjector | None, x0,
                 stop: StopRule, reference=None, sets=None, thinning=None) -> IterationTrace:
    """Relaxed composition ``T_{1,n}(... T_{m,n} x + e_{m,n} ...) + e_{1,n}``.

    ``factors_per_iteration`` is either one list of factors (outermost first)
    or a callable returning that list for iteration ``n``. The schedule must be
    in extended mode; ``phi_n`` is recomputed from the factor constants each
    iteration. With a reference point the per-factor displacement sums are
    accumulated as well.
    """
    if schedule.mode != EXTENDED:
        raise ValueError("composed_run requires an extended-mode schedule")
    if callable(factors_per_iteration) and not isinstance(factors_per_iteration, AveragedMap):
        src = factors_per_iteration
        m = len(src(0))
    else:
        fixed = list(factors_per_iteration)
        src, m = (lambda n: fixed), len(fixed)
    if m < 1:
        raise ValueError("need at least one factor")
    meta = {"algorithm": "composed", "factors": m, **schedule.to_dict()}
    return _iterate(src, schedule, errors, x0, stop, reference, sets, thinning, meta,
                    n_slots=m, displacement=True)


def string_operator(strings: Sequence[Sequence[AveragedMap]], weights) -> AveragedMap:
    """``sum_k w_k T_{k,1} ... T_{k,m_k}`` with the sharp string constant."""
    return combine(weights, [compose(s) for s in strings])


def string_run(strings, weights, schedule: Schedule, x0, stop: StopRule, sets=None,
               reference=None, thinning=None) -> IterationTrace:
    """String-averaging iteration ``x+ = x + lam_n (T x - x)``, classical range."""
    if schedule.mode != "classical":
        raise ValueError("string_run uses a classical-mode schedule")
    op = string_operator(strings, weights)
    const = [[float(t.alpha) for t in s] for s in strings]
    legacy = C.string_averaging_constant_legacy(const, weights)
    rule = schedule.relaxations
    if rule.eventually_constant and not isinstance(rule, UpperBound):
        tail = rule(stop.max_iterations)
        if tail * (1.0 / op.alpha - tail) <= 1e-12:
            warnings.warn("relaxations make sum lam_n (1/alpha - lam_n) finite; convergence not guaranteed")
    meta = {
        "algorithm": "string", "alpha": float(op.alpha), "alpha_legacy": float(legacy),
        "strings": [len(s) for s in strings], "weights": list(map(float, C.as_weights(weights))),
        **schedule.to_dict(),
    }
    single = [op]
    trace = _iterate(lambda n: single, schedule, None, x0, stop, reference, sets, thinning, meta)
    if sets:
        trace.extras["final_set_distances"] = distance_to_sets(sets, trace.x)
    return trace


@dataclass
class QuasiFejerReport:
    holds: bool
    violations: int
    first_violation: int | None
    max_excess: float
    decrement_sum: float
    perturbation_sum: float
    converged: bool
    tail_oscillation: float

    def to_dict(self):
        return dict(self.__dict__)


def quasi_fejer_check(values, decrements, perturbations, slack=1e-12, tail_fraction=0.1,
                      convergence_tol=1e-8) -> QuasiFejerReport:
    """Check ``v_{n+1} <= v_n - b_n + p_n`` index by index.

    ``slack`` is relative to ``max(1, v_n)``. ``values`` has one more entry than
    the other two sequences (or the same length, in which case the last
    decrement and perturbation are unused). Convergence is judged numerically
    by the spread of the final ``tail_fraction`` of the values.
    """
    v = np.asarray(values, dtype=float)
    b = np.asarray(decrements, dtype=float)
    p = np.asarray(perturbations, dtype=float)
    k = min(v.size - 1, b.size, p.size)
    if k < 0:
        raise ValueError("need at least one value")
    excess = v[1:k + 1] - (v[:k] - b[:k] + p[:k])
    tol = slack * np.maximum(1.0, np.abs(v[:k]))
    bad = excess > tol
    tail = v[max(0, v.size - max(2, int(math.ceil(tail_fraction * v.size)))):]
    osc = float(tail.max() - tail.min()) if tail.size else 0.0
    return QuasiFejerReport(
        holds=not bool(bad.any()),
        violations=int(bad.sum()),
        first_violation=int(np.argmax(bad)) if bad.any() else None,
        max_excess=float(excess.max()) if k > 0 else 0.0,
        decrement_sum=float(math.fsum(b[:k])),
        perturbation_sum=float(math.fsum(p[:k])),
        converged=osc <= convergence_tol * max(1.0, abs(float(v[-1]))),
        tail_oscillation=osc,
    )
