import numpy as np
import pytest

from opsplit.exceptions import RangeViolation, ScheduleViolation
from opsplit.fixtures import (
    box_inclusion_problem,
    lasso_fixture,
    lasso_reference,
    monotone_linear_fixture,
    scalar_l1_problem,
)
from opsplit.iteration import StopRule
from opsplit.operators import squared_distance
from opsplit.schedules import Cyclic, ErrorInjector, Table, UpperBound
from opsplit.splitting import (
    FbSchedule,
    InclusionProblem,
    MinimizationProblem,
    fixed_point_identity_check,
    forward_backward_operator,
    forward_backward_run,
    proximal_gradient_run,
    validate_fb_schedule,
)


def quad_problem(c):
    g = squared_distance(c)
    return MinimizationProblem(prox=lambda gamma, y: y.copy(), smooth=g, dim=len(c))


# ---- schedule validation ---------------------------------------------------

def test_validate_boundary_inclusive():
    rep = validate_fb_schedule(1.0, FbSchedule(0.1, 1.0, 1.44), 100)
    assert rep.valid
    assert rep.phi[0] == pytest.approx(2 / 3)
    assert rep.lambda_sup[0] == pytest.approx(1.44)
    assert rep.max_bound_mismatch < 1e-12


def test_validate_gamma_too_large():
    rep = validate_fb_schedule(1.0, FbSchedule(0.1, 1.9, 1.0), 10)
    assert not rep.valid
    v = rep.first_violation
    assert v["bound"] == "gamma<=2beta/(1+eps)" and v["index"] == 0
    assert v["gamma_upper"] == pytest.approx(20 / 11)
    with pytest.raises(ScheduleViolation):
        rep.raise_if_invalid()


def test_validate_lambda_eps_always_ok():
    for g in (0.1, 0.7, 1.3, 2 / 1.1):
        assert validate_fb_schedule(1.0, FbSchedule(0.1, g, 0.1), 5).valid


def test_validate_reports_first_index():
    s = FbSchedule(0.1, Table([1.0, 1.0, 1.0, 0.05]), Table([1.0, 1.0, 1.5]))
    rep = validate_fb_schedule(1.0, s, 10)
    assert rep.first_violation["index"] == 2
    assert rep.first_violation["bound"].startswith("lambda<=")


def test_eps_must_be_below_beta():
    with pytest.raises(RangeViolation):
        validate_fb_schedule(0.05, FbSchedule(0.1, 0.1, 1.0), 3)


def test_run_rejects_invalid_schedule():
    with pytest.raises(ScheduleViolation):
        forward_backward_run(box_inclusion_problem(), FbSchedule(0.1, 1.0, 1.5), [0.0], StopRule(5))


# ---- hand examples -----------------------------------------------------------

def test_zero_resolvent_one_step():
    p = quad_problem([0.0]).as_inclusion()
    t = forward_backward_run(p, FbSchedule(0.1, 1.0, 1.0), [5.0], StopRule(5))
    assert t.iterates[1][1][0] == 0.0 and t.iterations == 1


def test_box_inclusion():
    t = forward_backward_run(box_inclusion_problem(), FbSchedule(0.1, 1.0, 1.0), [-7.0], StopRule(10),
                             reference=[2.0])
    assert t.iterates[1][1][0] == 2.0
    assert t.x[0] == 2.0


def test_prox_quadratic_one_step():
    c = np.array([1.0, -2.0, 3.0])
    t = proximal_gradient_run(quad_problem(c), FbSchedule(0.1, 1.0, 1.0), np.zeros(3), StopRule(3))
    assert np.array_equal(t.iterates[1][1], c)


def test_scalar_l1_first_step_and_limit():
    t = proximal_gradient_run(scalar_l1_problem(), FbSchedule(0.1, 1.0, 1.0), [0.0], StopRule(10))
    assert t.iterates[1][1][0] == 2.0
    assert [v for _, v in t.extras["objective"]][1] == pytest.approx(2.5)


@pytest.mark.parametrize("lam", [1.0, 1.2, UpperBound()])
def test_scalar_fixtures_extended(lam):
    s = FbSchedule(0.1, 0.8, lam)
    stop = StopRule(200, residual_tolerance=1e-13)
    for prob, run in ((box_inclusion_problem(), forward_backward_run),
                      (scalar_l1_problem(), proximal_gradient_run)):
        t = run(prob, s, [-4.0], stop, reference=[2.0])
        assert abs(t.x[0] - 2.0) < 1e-10
        assert t.fejer_violations == 0


def test_error_injection_scalar():
    stop = StopRule(5000, residual_tolerance=1e-13)
    clean = proximal_gradient_run(scalar_l1_problem(), FbSchedule(0.1, 1.0, 1.2), [0.0], stop)
    errs = ErrorInjector.decaying(1, scale=1.0, power=2.0, seed=0)
    noisy = proximal_gradient_run(scalar_l1_problem(), FbSchedule(0.1, 1.0, 1.2, b_errors=errs), [0.0],
                                  stop, reference=[2.0])
    assert abs(noisy.x[0] - clean.x[0]) < 1e-4
    assert noisy.fejer_violations == 0
    assert noisy.factor_error_sums[1] <= 1.2 * np.pi ** 2 / 6


def test_a_errors_recorded():
    errs = ErrorInjector.decaying(1, scale=0.5, seed=1)
    t = forward_backward_run(box_inclusion_problem(), FbSchedule(0.1, 1.0, 1.0, a_errors=errs), [0.0],
                             StopRule(50), reference=[2.0])
    assert t.factor_error_sums[0] > 0 and t.factor_error_sums[1] == 0
    assert t.fejer_violations == 0


# ---- fixed-point identity ---------------------------------------------------

@pytest.mark.parametrize("gamma", [1.0, 0.5])
def test_fixed_point_identity_box(gamma):
    rep = fixed_point_identity_check(box_inclusion_problem(), gamma, [2.0])
    assert rep.is_fixed_point and rep.residual < 1e-12


def test_fixed_point_identity_negative():
    assert fixed_point_identity_check(box_inclusion_problem(), 1.0, [0.5]).residual > 0


def test_fixed_point_identity_zero_resolvent():
    c = np.array([1.0, 2.0])
    p = quad_problem(c).as_inclusion()
    x = np.array([3.0, 0.0])
    rep = fixed_point_identity_check(p, 0.7, x)
    assert rep.residual == pytest.approx(0.7 * np.linalg.norm(x - c))


def test_fixed_point_identity_gamma_range():
    with pytest.raises(RangeViolation):
        fixed_point_identity_check(box_inclusion_problem(), 2.5, [2.0])


# ---- monotone linear and LASSO ---------------------------------------------

def test_monotone_linear_fixture():
    fx = monotone_linear_fixture(5, seed=0)
    assert fx.problem.sampled_cocoercivity_gap() >= -1e-9
    t = forward_backward_run(fx.problem, FbSchedule(0.1, 1.0, UpperBound()), np.zeros(5),
                             StopRule(2000, 1e-12), reference=fx.solution)
    assert np.linalg.norm(t.x - fx.solution) < 1e-9
    assert t.fejer_violations == 0
    assert t.extras["cocoercive_sum"] > 0
    assert np.all(np.diff(t.extras["cocoercive_history"]) >= 0)


def test_forward_backward_operator_constant():
    fx = monotone_linear_fixture(3, seed=1)
    op = forward_backward_operator(fx.problem, 1.0)
    assert float(op.alpha) == pytest.approx(2 / 3)


@pytest.fixture(scope="module")
def lasso():
    fx = lasso_fixture()
    return fx, lasso_reference(fx)[0]


def test_lasso_fixture_shape(lasso):
    fx, _ = lasso
    assert fx.A.shape == (20, 50)
    assert fx.beta == pytest.approx(1.0, abs=1e-8)
    assert lasso_fixture().A.tobytes() == fx.A.tobytes()


@pytest.mark.parametrize("lam", [1.0, 1.44])
def test_lasso_limits_match_baseline(lasso, lam):
    fx, ref = lasso
    t = proximal_gradient_run(fx.problem, FbSchedule(0.1, fx.beta, lam), np.zeros(fx.dim),
                              StopRule(20000, 1e-10), reference=ref)
    assert np.linalg.norm(t.x - ref) < 1e-6
    assert t.fejer_violations == 0
    assert np.isfinite(t.extras["residual_sq_sum"])


def test_lasso_alternating_steps(lasso):
    fx, ref = lasso
    b, eps = fx.beta, 0.1
    s = FbSchedule(eps, Cyclic([0.5 * b, 1.5 * b / (1 + eps)]), UpperBound())
    t = proximal_gradient_run(fx.problem, s, np.zeros(fx.dim), StopRule(20000, 1e-11), reference=ref)
    assert t.converged
    assert np.linalg.norm(t.x - ref) < 1e-6
    assert t.fejer_violations == 0


def test_lasso_boundary_pair_informational(lasso):
    # both gamma and lambda at their maxima; recorded, only convergence asserted
    fx, ref = lasso
    eps = 0.1
    s = FbSchedule(eps, 2 * fx.beta / (1 + eps), UpperBound())
    t = proximal_gradient_run(fx.problem, s, np.zeros(fx.dim), StopRule(50000, 1e-10), reference=ref)
    assert t.converged and np.linalg.norm(t.x - ref) < 1e-6


def test_specialization_bit_identical(lasso):
    fx, _ = lasso
    s = FbSchedule(0.1, fx.beta, 1.44)
    a = proximal_gradient_run(fx.problem, s, np.zeros(fx.dim), StopRule(200))
    b = forward_backward_run(fx.problem.as_inclusion(), s, np.zeros(fx.dim), StopRule(200))
    assert all(np.array_equal(x, y) for (_, x), (_, y) in zip(a.iterates, b.iterates))


def _lasso_residual_sums(seeds):
    out = []
    for seed in seeds:
        fx = lasso_fixture(seed=seed)
        ref = lasso_reference(fx)[0]
        t = proximal_gradient_run(fx.problem, FbSchedule(0.1, fx.beta, 1.0), np.zeros(fx.dim),
                                  StopRule(20000, 1e-12))
        out.append((t.extras["residual_sq_sum"], float(ref @ ref)))
    return np.array(out)


def test_residual_sum_bounded_by_initial_distance():
    # lam (1/phi - lam) = 1/2 at gamma = beta, lam = 1
    for total, d0 in _lasso_residual_sums(range(4)):
        assert 0.5 * total <= d0 * (1 + 1e-9)


@pytest.mark.xfail(strict=True, reason="sums scale with the instance; spread across seeds is about 2x")
def test_residual_sum_stable_across_seeds():
    sums = _lasso_residual_sums(range(4))[:, 0]
    assert (sums.max() - sums.min()) <= 0.2 * sums.mean()


def test_inclusion_problem_validation():
    with pytest.raises(ValueError):
        InclusionProblem(lambda g, y: y, lambda x: x, beta=0.0, dim=1)
