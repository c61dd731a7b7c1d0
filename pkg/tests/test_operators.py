import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from opsplit.exceptions import NumericalFailure, RangeViolation
from opsplit.operators import (
    Affine,
    Ball,
    Box,
    Halfspace,
    MonotoneLinear,
    combine,
    compose,
    distance_to_sets,
    gradient_step,
    identity,
    least_squares,
    power_iteration,
    project,
    projector,
    prox_l1,
    relax,
    resolvent_linear,
    resolvent_map,
    set_from_dict,
    verify_averaged,
)
from zoo import axis_and_diagonal, nested_composites, operator_zoo, orthogonal_axes

finite = st.floats(-50, 50, allow_nan=False)
vec3 = arrays(np.float64, 3, elements=finite)


def test_projection_examples():
    assert np.allclose(project(Ball([0, 0], 1), [3, 4]), [0.6, 0.8])
    assert np.allclose(project(Box([0, 0], [1, 1]), [2, -1]), [1, 0])
    assert np.allclose(project(Halfspace([1, 0], 1), [3, 5]), [1, 5])
    assert np.allclose(project(Affine([[1], [0]], [0, 2]), [4, 7]), [4, 2])


@settings(max_examples=100, deadline=None)
@given(vec3)
def test_projections_idempotent_and_in_set(x):
    for s in (Box([-1, -1, -1], [1, 2, 3]), Ball([1, 0, 0], 2.0), Halfspace([1, 2, -1], 0.5),
              Affine([[1, 0], [0, 1], [1, 1]], [0, 0, 1])):
        p = s.project(x)
        assert np.allclose(s.project(p), p, atol=1e-12)
        assert distance_to_sets([s], p)[0] <= 1e-9


def test_set_round_trip():
    for s in (Box([0, 1], [2, 3]), Ball([1, 1], 0.5), Halfspace([1, -1], 2), Affine([[1], [2]], [0, 1])):
        t = set_from_dict(s.to_dict())
        x = np.array([5.0, -3.0])
        assert np.array_equal(s.project(x), t.project(x))


@pytest.mark.parametrize("bad", [
    lambda: Box([1, 0], [0, 1]),
    lambda: Ball([0, 0], 0.0),
    lambda: Halfspace([0, 0], 1.0),
    lambda: Affine([[1, 2], [2, 4]], [0, 0]),
    lambda: set_from_dict({"type": "torus"}),
])
def test_invalid_sets_rejected(bad):
    with pytest.raises(ValueError):
        bad()


def test_prox_l1():
    assert np.allclose(prox_l1([3.0, -0.5, -2.0], 1.0), [2.0, 0.0, -1.0])
    with pytest.raises(ValueError):
        prox_l1([1.0], -1.0)


def test_monotone_linear_and_resolvent():
    m = MonotoneLinear([[1.0, 2.0], [-2.0, 0.5]])
    y = np.array([1.0, -1.0])
    x = resolvent_linear(m, 0.7, y)
    assert np.allclose(x + 0.7 * m(x), y)
    assert np.allclose(resolvent_map(m, 0.7)(y), x)
    with pytest.raises(ValueError):
        MonotoneLinear([[-1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        MonotoneLinear([[1.0, 0.0, 0.0]])


def test_resolvent_ill_conditioned():
    # cond(I + M) is about 1e14, past the solver's limit
    m = MonotoneLinear(np.diag([0.0, 1e14]))
    with pytest.raises(NumericalFailure):
        resolvent_linear(m, 1.0, [1.0, 1.0])


def test_power_iteration_matches_eigvalsh():
    a = np.random.default_rng(3).standard_normal((7, 4))
    assert power_iteration(a, tol=1e-14) == pytest.approx(np.linalg.eigvalsh(a.T @ a).max(), rel=1e-10)


def test_gradient_step_constant_and_range():
    g = least_squares(np.eye(2), [1.0, 2.0])
    assert g.beta == pytest.approx(1.0)
    assert float(gradient_step(g, 1.0, 2).alpha) == pytest.approx(0.5)
    with pytest.raises(RangeViolation):
        gradient_step(g, 2.0, 2)


def test_relax_rules():
    p = projector(Ball([0, 0], 1))
    assert relax(p, 1.0) is p
    r = relax(p, 1.5)
    assert float(r.alpha) == pytest.approx(0.75)
    assert np.allclose(r(np.array([3.0, 4.0])), [3.0, 4.0] + 1.5 * (np.array([0.6, 0.8]) - [3.0, 4.0]))
    with pytest.raises(RangeViolation):
        relax(p, 2.0)


def test_compose_order_and_constant():
    shift = type(identity(1))(lambda x: x + 1.0, 0.5, 1, name="shift")
    halve = type(identity(1))(lambda x: 0.5 * x, 0.5, 1, name="halve")
    c = compose([shift, halve])  # shift(halve(x))
    assert c(np.array([4.0]))[0] == 3.0
    assert float(c.alpha) == pytest.approx(2 / 3)
    assert compose([shift]) is shift
    with pytest.raises(ValueError):
        compose([])
    with pytest.raises(ValueError):
        compose([shift, identity(2)])


def test_combine():
    p = projector(Box([0.0], [1.0]))
    c = combine([0.25, 0.75], [p, identity(1)])
    assert c(np.array([3.0]))[0] == pytest.approx(0.25 + 2.25)
    with pytest.raises(ValueError):
        combine([0.5, 0.6], [p, identity(1)])


@pytest.mark.parametrize("name,op", list(operator_zoo().items()))
def test_zoo_passes_at_stored_constant(name, op):
    rep = verify_averaged(op, pair_count=2000)
    assert rep.ok, (name, rep.max_violation)


@pytest.mark.parametrize("name,op", list(nested_composites().items()))
def test_nested_composites_pass(name, op):
    assert verify_averaged(op, pair_count=2000).ok


def test_nonexpansive_part_is_nonexpansive():
    op = operator_zoo()["compose"]
    r = op.nonexpansive_part()
    rng = np.random.default_rng(1)
    for x, y in rng.uniform(-5, 5, (500, 2, 3)):
        assert np.linalg.norm(r(x) - r(y)) <= np.linalg.norm(x - y) * (1 + 1e-12)


def test_negative_fixture_detected():
    rep = verify_averaged(axis_and_diagonal(), alpha=0.6)
    assert rep.violations > 0 and rep.worst_pair is not None
    assert verify_averaged(axis_and_diagonal()).ok  # fine at its stored 2/3


def test_orthogonal_axes_cannot_violate_0_6():
    # composite is the zero map, which is 1/2-averaged
    assert verify_averaged(orthogonal_axes(), alpha=0.6).ok
    assert verify_averaged(orthogonal_axes(), alpha=0.5).ok


def test_verify_detects_expansive_map():
    bad = type(identity(1))(lambda x: -1.5 * x, 0.5, 1)
    rep = verify_averaged(bad, pair_count=100)
    assert rep.violations == 100
    assert rep.max_violation_norm_form > 0 and rep.max_violation_inner_form > 0


def test_verify_is_deterministic():
    op = operator_zoo()["combine"]
    a = verify_averaged(op, alpha=0.3, pair_count=500, seed=4)
    b = verify_averaged(op, alpha=0.3, pair_count=500, seed=4)
    assert a.violations == b.violations and a.max_violation == b.max_violation
