"""Every shipped operator constructor and combinator, instantiated on seeded data."""

import numpy as np

from opsplit.fixtures import monotone_linear_fixture
from opsplit.iteration import string_operator
from opsplit.operators import (
    AveragedMap,
    Affine,
    Ball,
    Box,
    Halfspace,
    MonotoneLinear,
    combine,
    compose,
    gradient_step,
    identity,
    least_squares,
    projector,
    prox_l1_map,
    relax,
    resolvent_map,
)
from opsplit.splitting import forward_backward_operator

DIM = 3


def operator_zoo():
    rng = np.random.default_rng(0)
    box = projector(Box([-1.0, -2.0, 0.0], [1.0, 0.5, 3.0]))
    ball = projector(Ball(rng.standard_normal(DIM), 2.0))
    half = projector(Halfspace(rng.standard_normal(DIM), 0.3))
    affine = projector(Affine(rng.standard_normal((DIM, 2)), rng.standard_normal(DIM)))
    prox = prox_l1_map(0.7, DIM)
    s = rng.standard_normal((DIM, DIM))
    lin = MonotoneLinear(s @ s.T * 0.3 + (s - s.T))
    resolvent = resolvent_map(lin, 0.8)
    g = least_squares(rng.standard_normal((6, DIM)), rng.standard_normal(6))
    grad = gradient_step(g, 1.5 * g.beta, DIM)
    ops = {
        "projector_box": box,
        "projector_ball": ball,
        "projector_halfspace": half,
        "projector_affine": affine,
        "prox_l1": prox,
        "resolvent_linear": resolvent,
        "gradient_step": grad,
        "identity": identity(DIM),
        "relax": relax(ball, 1.5),
        "compose": compose([box, half, ball, grad]),
        "combine": combine([0.3, 0.7], [ball, prox]),
        "string_average": string_operator([[box, half, ball], [affine]], [0.6, 0.4]),
        "forward_backward": forward_backward_operator(monotone_linear_fixture(DIM, 0).problem, 1.3),
    }
    return ops


def nested_composites():
    """Deeper combinator nests, checked with fewer pairs in the unit tests."""
    z = operator_zoo()
    box, half, ball = z["projector_box"], z["projector_halfspace"], z["projector_ball"]
    affine, prox, grad = z["projector_affine"], z["prox_l1"], z["gradient_step"]
    return {
        "relax_under": relax(grad, 0.6),
        "compose_2": compose([box, half]),
        "compose_nested": compose([compose([affine, prox]), relax(half, 1.8)]),
        "combine_of_compose": combine([0.5, 0.25, 0.25], [compose([box, ball]), half, grad]),
        "relax_of_combine": relax(combine([0.5, 0.5], [box, grad]), 1.4),
    }


def axis_and_diagonal():
    """Projections onto the x1-axis and the 45-degree line, composed.

    The composite is exactly 2/3-averaged in the limit of small angles only;
    at 45 degrees its sharp constant is about 0.63, so testing it at 0.6 must
    fail.
    """
    e1 = projector(Affine([[1.0], [0.0]], [0.0, 0.0]))
    diag = projector(Affine([[1.0], [1.0]], [0.0, 0.0]))
    return compose([e1, diag])


def orthogonal_axes():
    """Composite of the two coordinate-axis projections: the zero map."""
    e1 = projector(Affine([[1.0], [0.0]], [0.0, 0.0]))
    e2 = projector(Affine([[0.0], [1.0]], [0.0, 0.0]))
    return compose([e1, e2])


__all__ = ["operator_zoo", "nested_composites", "axis_and_diagonal", "orthogonal_axes", "AveragedMap"]
