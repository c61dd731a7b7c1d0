"""Averaged nonexpansive operators, relaxed fixed-point iterations and
forward-backward splitting with an extended relaxation range."""

from .constants import (
    Alpha,
    Epsilon,
    compose2,
    compose_many_closed,
    compose_many_recursive,
    compose_many_series,
    compose_many_symmetric,
    convex_combination_constant,
    elementary_symmetric,
    fb_parameters,
    phi_hat,
    phi_tilde,
    relaxation_ranges,
    string_averaging_constant,
    string_averaging_constant_legacy,
)
from .exceptions import NumericalFailure, RangeViolation, ScheduleViolation
from .iteration import StopRule, composed_run, km_run, quasi_fejer_check, string_run
from .operators import (
    AveragedMap,
    Affine,
    Ball,
    Box,
    Halfspace,
    MonotoneLinear,
    SmoothFunction,
    combine,
    compose,
    distance_to_sets,
    gradient_step,
    project,
    prox_l1,
    relax,
    resolvent_linear,
    verify_averaged,
)
from .schedules import ErrorInjector, Schedule
from .splitting import (
    FbSchedule,
    InclusionProblem,
    MinimizationProblem,
    fixed_point_identity_check,
    forward_backward_run,
    proximal_gradient_run,
    validate_fb_schedule,
)
from .estimators import ExtendedForwardBackwardLasso, FeasibilityProjector

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
