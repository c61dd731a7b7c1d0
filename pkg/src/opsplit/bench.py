"""Problem-spec files, run orchestration and relaxation comparisons.

A spec file is a JSON object::

    {
      "name": "lasso-extended",
      "kind": "lasso" | "feasibility" | "monotone_linear" | "scalar_fixture",
      "seed": 0,
      "data": {...},                    # kind-specific
      "schedule": {"mode": "extended", "eps": 0.1,
                   "gamma": {"rule": "constant", "value": 1.0},   # units of beta
                   "lambda": {"rule": "max"},
                   "errors": {"a": {"rule": "none"}, "b": {"rule": "none"}}},
      "stop": {"max_iterations": 5000, "residual_tolerance": 1e-10},
      "expect": {"max_reference_distance": 1e-6},
      "output": {"thinning": 1},
      "x0": [...]                       # optional
    }

Everything is validated when the spec is parsed, before any run starts.
"""

from __future__ import annotations

import copy
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import constants as C
from .exceptions import RangeViolation
from .fixtures import (
    box_inclusion_problem,
    feasibility_fixture,
    lasso_fixture,
    lasso_reference,
    monotone_linear_fixture,
    scalar_l1_problem,
)
from .iteration import StopRule, string_run
from .operators import distance_to_sets, projector, set_from_dict
from .schedules import CLASSICAL, EXTENDED, Constant, Rule, Schedule, UpperBound, errors_from_dict, rule_from_dict
from .splitting import FbSchedule, forward_backward_run, proximal_gradient_run, validate_fb_schedule

KINDS = ("lasso", "feasibility", "monotone_linear", "scalar_fixture")
FB_KINDS = ("lasso", "monotone_linear", "scalar_fixture")
TRACE_DIR_ENV = "OPSPLIT_TRACE_DIR"

EXIT_OK, EXIT_VALIDATION, EXIT_TARGET_MISS, EXIT_NUMERICAL = 0, 2, 3, 4


class SpecError(ValueError):
    """A spec file is malformed or references an out-of-range parameter."""

    def __init__(self, message, detail=None):
        super().__init__(message)
        self.detail = detail or {}

    def to_dict(self):
        return {"error": "validation", "message": str(self), **self.detail}


@dataclass
class ProblemSpec:
    kind: str
    name: str = "run"
    seed: int = 0
    data: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)
    stop: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    x0: list | None = None

    def to_dict(self):
        d = asdict(self)
        if d["x0"] is None:
            del d["x0"]
        return d

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _norm_rule(d, default, where):
    try:
        return rule_from_dict(d if d is not None else default).to_dict()
    except (ValueError, TypeError, KeyError, AttributeError) as exc:
        raise SpecError(f"{where}: {exc}", {"bound": where}) from exc


def parse_spec(doc) -> ProblemSpec:
    """Build a :class:`ProblemSpec` from a dict, JSON text or a path, and validate it."""
    if isinstance(doc, (str, Path)) and not str(doc).lstrip().startswith("{"):
        doc = Path(doc).read_text()
    if isinstance(doc, str):
        doc = json.loads(doc)
    doc = copy.deepcopy(doc)
    kind = doc.get("kind")
    if kind not in KINDS:
        raise SpecError(f"unknown kind {kind!r}; expected one of {KINDS}", {"bound": "kind"})
    sched = dict(doc.get("schedule", {}))
    mode = sched.get("mode", CLASSICAL if kind == "feasibility" else EXTENDED)
    sched["mode"] = mode
    sched["eps"] = float(sched.get("eps", 0.1))
    sched["lambda"] = _norm_rule(sched.get("lambda"), {"rule": "constant", "value": 1.0},
                                  "schedule.lambda")
    if kind in FB_KINDS:
        sched["gamma"] = _norm_rule(sched.get("gamma"), {"rule": "constant", "value": 1.0},
                                     "schedule.gamma")
        errs = dict(sched.get("errors") or {})
        sched["errors"] = {k: errs.get(k) or {"rule": "none"} for k in ("a", "b")}
    stop = {"max_iterations": int(doc.get("stop", {}).get("max_iterations", 1000)),
            "residual_tolerance": float(doc.get("stop", {}).get("residual_tolerance", 0.0))}
    spec = ProblemSpec(
        kind=kind,
        name=str(doc.get("name", kind)),
        seed=int(doc.get("seed", 0)),
        data=dict(doc.get("data", {})),
        schedule=sched,
        stop=stop,
        expect=dict(doc.get("expect", {})),
        output=dict(doc.get("output", {})),
        x0=None if doc.get("x0") is None else [float(v) for v in doc["x0"]],
    )
    build(spec)  # validates every range before anything runs
    return spec


@dataclass
class Instance:
    """A spec resolved into runnable objects."""

    spec: ProblemSpec
    kind: str
    x0: np.ndarray
    stop: StopRule
    reference: np.ndarray | None = None
    problem: object = None
    fb_schedule: FbSchedule | None = None
    strings: list | None = None
    weights: np.ndarray | None = None
    schedule: Schedule | None = None
    sets: list | None = None
    alpha: float | None = None
    alpha_legacy: float | None = None


def _wrap(exc, where):
    if isinstance(exc, RangeViolation):
        detail = {k: v for k, v in exc.to_dict().items() if k not in ("error", "message")}
        return SpecError(f"{where}: {exc}", detail)
    return SpecError(f"{where}: {exc}", {"bound": where})


def build(spec: ProblemSpec) -> Instance:
    try:
        stop = StopRule(spec.stop["max_iterations"], spec.stop["residual_tolerance"])
    except (ValueError, TypeError) as exc:
        raise _wrap(exc, "stop") from exc
    s, data = spec.schedule, spec.data
    try:
        if spec.kind == "feasibility":
            return _build_feasibility(spec, stop)
        if spec.kind == "lasso":
            fx = lasso_fixture(int(data.get("rows", 20)), int(data.get("cols", 50)), spec.seed,
                               float(data.get("tau_ratio", 0.1)), int(data.get("sparsity", 5)),
                               float(data.get("noise", 0.01)))
            problem, dim = fx.problem, fx.dim
            reference = lasso_reference(fx)[0] if data.get("reference", True) else None
        elif spec.kind == "scalar_fixture":
            which = data.get("problem", "l1")
            if which == "l1":
                problem = scalar_l1_problem()
            elif which == "box":
                problem = box_inclusion_problem()
            else:
                raise SpecError(f"unknown scalar problem {which!r}", {"bound": "data.problem"})
            dim, reference = 1, np.array([2.0])
        else:
            fx = monotone_linear_fixture(int(data.get("dim", 5)), spec.seed,
                                         data.get("coefficients"), data.get("shift"))
            problem, dim, reference = fx.problem, fx.M.dim, fx.solution
        beta = problem.beta
        gam_rule = rule_from_dict(s["gamma"])
        # spec-file step sizes are in units of beta
        gam = _scaled(gam_rule, beta)
        lam = rule_from_dict(s["lambda"])
        errs = s["errors"]
        fb = FbSchedule(s["eps"], gam, lam, errors_from_dict(errs["a"], dim, spec.seed),
                        errors_from_dict(errs["b"], dim, spec.seed + 1))
        validate_fb_schedule(beta, fb, stop.max_iterations).raise_if_invalid()
        x0 = np.zeros(dim) if spec.x0 is None else np.asarray(spec.x0, dtype=float)
        if x0.shape != (dim,):
            raise SpecError(f"x0 has {x0.size} entries, problem dimension is {dim}", {"bound": "x0"})
        return Instance(spec, spec.kind, x0, stop, reference, problem, fb)
    except SpecError:
        raise
    except (RangeViolation, ValueError, KeyError, TypeError) as exc:
        raise _wrap(exc, "schedule") from exc


def _scaled(rule, beta):
    if isinstance(rule, Constant):
        return Constant(rule.value * beta)
    return _Scaled(rule, beta)


class _Scaled(Rule):
    def __init__(self, inner, factor):
        self.inner, self.factor = inner, factor
        self.eventually_constant = inner.eventually_constant

    def __call__(self, n):
        return self.inner(n) * self.factor

    def values(self, horizon):
        return self.inner.values(horizon) * self.factor

    def to_dict(self):
        return self.inner.to_dict()


def _build_feasibility(spec, stop):
    data, s = spec.data, spec.schedule
    if "sets" in data:
        sets = [set_from_dict(d) for d in data["sets"]]
        fx = None
    else:
        fx = feasibility_fixture(int(data.get("dim", 2)), spec.seed)
        sets = fx.sets
    strings_idx = data.get("strings") or [[i] for i in range(len(sets))]
    weights = data.get("weights") or [1.0 / len(strings_idx)] * len(strings_idx)
    for st in strings_idx:
        for i in st:
            if not 0 <= i < len(sets):
                raise SpecError(f"string references set {i}, only {len(sets)} sets", {"bound": "data.strings"})
    ops = [projector(st) for st in sets]
    strings = [[ops[i] for i in st] for st in strings_idx]
    w = C.as_weights(weights)
    const = [[0.5] * len(st) for st in strings_idx]
    alpha = C.string_averaging_constant(const, w)
    legacy = C.string_averaging_constant_legacy(const, w)
    if s["mode"] != CLASSICAL:
        raise SpecError("feasibility runs use a classical-mode schedule", {"bound": "schedule.mode"})
    try:
        sched = Schedule(rule_from_dict(s["lambda"]), CLASSICAL, s["eps"])
    except ValueError as exc:
        raise _wrap(exc, "schedule") from exc
    horizon = stop.max_iterations
    if not isinstance(sched.relaxations, UpperBound):
        vals = sched.relaxations.values(horizon)
        bad = (vals <= 0.0) | (vals >= 1.0 / alpha)
        if bad.any():
            i = int(np.argmax(bad))
            raise SpecError(
                f"relaxation {float(vals[i])!r} at iteration {i} outside ]0, 1/alpha[ = ]0, {1.0 / alpha!r}[",
                {"bound": "lambda<1/alpha", "index": i, "value": float(vals[i]), "lower": 0.0,
                 "upper": 1.0 / alpha},
            )
    dim = sets[0].dim
    if spec.x0 is not None:
        x0 = np.asarray(spec.x0, dtype=float)
    elif fx is not None:
        x0 = fx.x0
    else:
        x0 = np.zeros(dim)
    if x0.shape != (dim,):
        raise SpecError(f"x0 has {x0.size} entries, set dimension is {dim}", {"bound": "x0"})
    return Instance(spec, "feasibility", x0, stop, None, None, None, strings, w, sched, sets,
                    float(alpha), float(legacy))


@dataclass
class RunReport:
    name: str
    kind: str
    seed: int
    iterations: int
    final_residual: float
    converged: bool
    stop_reason: str
    wall_time: float
    running_sum: float
    error_sum: float
    residual_sq_sum: float
    cocoercive_sum: float
    fejer_violations: int
    reference_distance: float
    max_set_distance: float
    final_iterate: list
    expectations_met: bool
    failed_expectations: list

    def to_dict(self, include_time=True):
        d = asdict(self)
        if not include_time:
            d.pop("wall_time")
        return d

    def summary(self):
        flag = "ok" if self.expectations_met else "MISS"
        return (f"[{flag}] {self.name} ({self.kind}) iterations={self.iterations} "
                f"residual={self.final_residual:.3e} "
                + (f"set_dist={self.max_set_distance:.3e} " if self.kind == "feasibility"
                   else f"ref_dist={self.reference_distance:.3e} ")
                + f"fejer_violations={self.fejer_violations} time={self.wall_time:.3f}s")


def execute(inst: Instance, schedule_override=None):
    """Run a built instance; returns the trace."""
    if inst.kind == "feasibility":
        sched = schedule_override or inst.schedule
        return string_run(inst.strings, inst.weights, sched, inst.x0, inst.stop, sets=inst.sets,
                          thinning=inst.spec.output.get("thinning"))
    fb = schedule_override or inst.fb_schedule
    thin = inst.spec.output.get("thinning")
    if inst.kind in ("lasso",) or (inst.kind == "scalar_fixture" and inst.spec.data.get("problem", "l1") == "l1"):
        return proximal_gradient_run(inst.problem, fb, inst.x0, inst.stop, inst.reference, thin)
    return forward_backward_run(inst.problem, fb, inst.x0, inst.stop, inst.reference, thin)


def _finite(v, default=0.0):
    return float(v) if v is not None and math.isfinite(v) else default


def run_spec(spec: ProblemSpec, trace_dir=None, write=True):
    """Run a spec; returns ``(RunReport, IterationTrace)`` and writes trace files.

    The trace directory is ``$OPSPLIT_TRACE_DIR`` when set, else ``trace_dir``,
    else ``spec.output["dir"]``; with none of them, nothing is written.
    """
    inst = build(spec)
    t0 = time.perf_counter()
    trace = execute(inst)
    wall = time.perf_counter() - t0
    ref_d = float(np.linalg.norm(trace.x - inst.reference)) if inst.reference is not None else 0.0
    set_d = max(distance_to_sets(inst.sets, trace.x)) if inst.sets else 0.0
    failed = []
    exp = spec.expect
    if "max_reference_distance" in exp and not ref_d <= exp["max_reference_distance"]:
        failed.append("max_reference_distance")
    if "max_set_distance" in exp and not set_d <= exp["max_set_distance"]:
        failed.append("max_set_distance")
    if "max_residual" in exp and not trace.final_residual <= exp["max_residual"]:
        failed.append("max_residual")
    if "max_iterations" in exp and not trace.iterations <= exp["max_iterations"]:
        failed.append("max_iterations")
    if spec.stop["residual_tolerance"] > 0 and not trace.converged:
        failed.append("residual_tolerance")
    report = RunReport(
        name=spec.name, kind=spec.kind, seed=spec.seed, iterations=trace.iterations,
        final_residual=_finite(trace.final_residual), converged=trace.converged,
        stop_reason=trace.stop_reason, wall_time=wall,
        running_sum=_finite(trace.running_sum[-1]), error_sum=_finite(trace.error_sum),
        residual_sq_sum=_finite(trace.extras.get("residual_sq_sum")),
        cocoercive_sum=_finite(trace.extras.get("cocoercive_sum")),
        fejer_violations=int(trace.fejer_violations), reference_distance=ref_d,
        max_set_distance=float(set_d), final_iterate=trace.x.tolist(),
        expectations_met=not failed, failed_expectations=failed,
    )
    out = os.environ.get(TRACE_DIR_ENV) or trace_dir or spec.output.get("dir")
    if write and out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        trace.metadata.update(name=spec.name, kind=spec.kind, seed=spec.seed)
        trace.to_csv(out / f"{spec.name}.csv")
        trace.to_json(out / f"{spec.name}.json")
        (out / f"{spec.name}.report.json").write_text(
            json.dumps(report.to_dict(include_time=False), indent=1, sort_keys=True))
    return report, trace


def compare_relaxation(spec: ProblemSpec, target=None) -> dict:
    """Iteration counts to a common residual target under two relaxation regimes.

    Forward-backward kinds: ``lambda = 1`` against the largest admissible
    extended relaxation. Feasibility: the largest relaxation allowed by the
    older string constant against the one allowed by the sharp constant (both
    scaled by ``1 - eps`` since the classical endpoint is open). Speed-up is
    measured, never asserted.
    """
    inst = build(spec)
    target = target if target is not None else (spec.stop["residual_tolerance"] or 1e-8)
    stop = StopRule(inst.stop.max_iterations, target)
    inst.stop = stop
    eps = spec.schedule["eps"]
    if inst.kind == "feasibility":
        lam_a = (1.0 - eps) / inst.alpha_legacy
        lam_b = (1.0 - eps) / inst.alpha
        labels = ("legacy", "sharp")
        runs = [execute(inst, Schedule(lam, CLASSICAL)) for lam in (lam_a, lam_b)]
        extra = {"alpha": inst.alpha, "alpha_legacy": inst.alpha_legacy}
    else:
        fb = inst.fb_schedule
        classical = FbSchedule(fb.eps, fb.gammas, Constant(1.0), fb.a_errors, fb.b_errors)
        extended = FbSchedule(fb.eps, fb.gammas, UpperBound(1.0), fb.a_errors, fb.b_errors)
        labels = ("classical", "extended")
        runs = [execute(inst, s) for s in (classical, extended)]
        lam_a, lam_b = 1.0, extended.relaxation(0, inst.problem.beta, fb.gammas(0))
        extra = {}
    a, b = runs
    return {
        "name": spec.name, "kind": spec.kind, "target": target,
        f"{labels[0]}_lambda": lam_a, f"{labels[1]}_lambda": lam_b,
        f"{labels[0]}_iterations": a.iterations, f"{labels[1]}_iterations": b.iterations,
        f"{labels[0]}_converged": a.converged, f"{labels[1]}_converged": b.converged,
        "ratio": (a.iterations / b.iterations) if b.iterations else None,
        **extra,
    }


def shipped_specs() -> dict:
    """Name -> path of the spec files bundled with the package."""
    root = resources.files("opsplit") / "specs"
    return {p.name[:-5]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")}


def resolve_spec_path(arg) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    lib = shipped_specs()
    if arg in lib:
        return lib[arg]
    raise FileNotFoundError(f"no spec file {arg!r} (shipped specs: {sorted(lib)})")
