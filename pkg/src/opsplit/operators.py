"""Averaged operators on R^n: constructors, combinators and a falsification probe.

An :class:`AveragedMap` carries a *declared* averagedness constant. The
combinators propagate constants through :mod:`opsplit.constants` so there is
exactly one formula per rule. :func:`verify_averaged` samples point pairs
and looks for counterexamples; it can refute a declared constant but never
certify one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import constants as C
from .exceptions import NumericalFailure, RangeViolation

ATOMIC, COMPOSED, COMBINED, RELAXED = "atomic", "composed", "combined", "relaxed"
VERIFY_TOL = 1e-9
ORTHO_TOL = 1e-12
MONOTONE_TOL = 1e-10


def as_point(x, dim=None) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise ValueError(f"a point must be a 1-d vector, got shape {x.shape}")
    if dim is not None and x.shape[0] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point has non-finite coordinates")
    return x


class AveragedMap:
    """An operator ``R^dim -> R^dim`` with a declared averagedness constant.

    Parameters
    ----------
    evaluate : callable
        Maps a 1-d array of length ``dim`` to another one.
    alpha : float
        Declared constant in ]0,1[.
    dim : int
        Ambient dimension.
    tag : str
        Provenance: ``atomic``, ``composed``, ``combined`` or ``relaxed``.
    factors : sequence of AveragedMap, optional
        Retained for composed maps, outermost first (``T1`` of ``T1 T2 ...``).
    """

    def __init__(self, evaluate, alpha, dim, tag=ATOMIC, factors=(), weights=None, name=None):
        self.evaluate = evaluate
        self.alpha = C.Alpha(alpha)
        self.dim = int(dim)
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        self.tag = tag
        self.factors = tuple(factors)
        self.weights = weights
        self.name = name or tag

    def __call__(self, x):
        return self.evaluate(x)

    def __repr__(self):
        return f"AveragedMap({self.name!r}, alpha={float(self.alpha):.6g}, dim={self.dim}, tag={self.tag!r})"

    def nonexpansive_part(self) -> Callable:
        """``R = (1 - 1/alpha) Id + (1/alpha) T``, nonexpansive iff the constant holds."""
        a = float(self.alpha)
        return lambda x: (1.0 - 1.0 / a) * x + self.evaluate(x) / a


# -- convex sets ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = as_point(self.lower)
        hi = as_point(self.upper, lo.size)
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.size

    def project(self, x):
        return np.minimum(np.maximum(x, self.lower), self.upper)

    def to_dict(self):
        return {"type": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not float(self.radius) > 0.0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.center.size

    def project(self, x):
        d = x - self.center
        nd = math.sqrt(d @ d)
        if nd <= self.radius:
            return x.copy()
        return self.center + (self.radius / nd) * d

    def to_dict(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Halfspace:
    """``{x : <normal, x> <= offset}``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        a = as_point(self.normal)
        if not np.any(a):
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "normal", a)
        object.__setattr__(self, "offset", float(self.offset))
        object.__setattr__(self, "_sq", float(a @ a))

    @property
    def dim(self):
        return self.normal.size

    def project(self, x):
        excess = self.normal @ x - self.offset
        if excess <= 0.0:
            return x.copy()
        return x - (excess / self._sq) * self.normal

    def to_dict(self):
        return {"type": "halfspace", "normal": self.normal.tolist(), "offset": self.offset}


@dataclass(frozen=True, eq=False)
class Affine:
    """``point + span(columns of basis)``; the basis is orthonormalized once."""

    basis: np.ndarray
    point: np.ndarray
    _q: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p = as_point(self.point)
        b = np.asarray(self.basis, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        if b.shape[0] != p.size:
            raise ValueError("basis rows must match the point dimension")
        q, r = np.linalg.qr(b)
        if b.shape[1] > b.shape[0] or np.any(np.abs(np.diag(r)) <= ORTHO_TOL * max(1.0, np.abs(r).max())):
            raise ValueError("affine basis columns must be linearly independent")
        object.__setattr__(self, "basis", b)
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "_q", q)

    @property
    def dim(self):
        return self.point.size

    def project(self, x):
        d = x - self.point
        return self.point + self._q @ (self._q.T @ d)

    def to_dict(self):
        return {"type": "affine", "basis": self.basis.tolist(), "point": self.point.tolist()}


SetDescriptor = Box | Ball | Halfspace | Affine


def set_from_dict(d) -> SetDescriptor:
    kind = d["type"]
    if kind == "box":
        return Box(d["lower"], d["upper"])
    if kind == "ball":
        return Ball(d["center"], d["radius"])
    if kind == "halfspace":
        return Halfspace(d["normal"], d["offset"])
    if kind == "affine":
        return Affine(d["basis"], d["point"])
    raise ValueError(f"unknown set type {kind!r}")


def project(s: SetDescriptor, x) -> np.ndarray:
    """Nearest point of ``s`` to ``x``."""
    return s.project(as_point(x, s.dim))


def projector(s: SetDescriptor) -> AveragedMap:
    """Projector onto ``s`` as a firmly nonexpansive (1/2-averaged) map."""
    return AveragedMap(s.project, 0.5, s.dim, name=f"P_{type(s).__name__.lower()}")


def distance_to_sets(sets: Sequence[SetDescriptor], x) -> list[float]:
    x = as_point(x)
    out = []
    for s in sets:
        if s.dim != x.size:
            raise ValueError(f"dimension mismatch: set has {s.dim}, point has {x.size}")
        out.append(float(np.linalg.norm(s.project(x) - x)))
    return out


# -- proximal maps and resolvents -----------------------------------------------

def prox_l1(x, threshold) -> np.ndarray:
    """Soft thresholding: the prox of ``threshold * ||.||_1``."""
    threshold = float(threshold)
    if threshold < 0.0:
        raise ValueError("threshold must be nonnegative")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.0)


def prox_l1_map(threshold, dim) -> AveragedMap:
    return AveragedMap(lambda x: prox_l1(x, threshold), 0.5, dim, name="prox_l1")


class MonotoneLinear:
    """A linear operator ``x -> M x`` whose symmetric part is positive semidefinite."""

    def __init__(self, coefficients):
        m = np.atleast_2d(np.asarray(coefficients, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise ValueError("coefficient array must be square")
        lam_min = np.linalg.eigvalsh(0.5 * (m + m.T)).min()
        if lam_min < -MONOTONE_TOL:
            raise ValueError(f"not monotone: symmetric part has eigenvalue {lam_min:.3g}")
        self.coefficients = m
        self.dim = m.shape[0]

    def __call__(self, x):
        return self.coefficients @ x


def resolvent_linear(m: MonotoneLinear, gamma, y) -> np.ndarray:
    """Solve ``(I + gamma M) x = y``."""
    gamma = float(gamma)
    if not gamma > 0.0:
        raise ValueError("gamma must be positive")
    y = as_point(y, m.dim)
    k = np.eye(m.dim) + gamma * m.coefficients
    if np.linalg.cond(k) > 1e12:
        raise NumericalFailure("resolvent system is numerically singular")
    return np.linalg.solve(k, y)


def resolvent_map(m: MonotoneLinear, gamma) -> AveragedMap:
    """Resolvent of ``gamma M`` as a 1/2-averaged map (factorized once)."""
    gamma = float(gamma)
    k = np.eye(m.dim) + gamma * m.coefficients
    if np.linalg.cond(k) > 1e12:
        raise NumericalFailure("resolvent system is numerically singular")
    kinv = np.linalg.inv(k)
    return AveragedMap(lambda y: kinv @ y, 0.5, m.dim, name="J_linear")


# -- smooth functions -------------------------------------------------------------

def power_iteration(a, tol=1e-10, max_iter=100_000, seed=0) -> float:
    """Largest eigenvalue of ``a.T @ a`` (squared spectral norm of ``a``)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    v = np.random.default_rng(seed).standard_normal(a.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = a.T @ (a @ v)
        lam_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= tol * max(lam_new, 1.0):
            return lam_new
        lam = lam_new
    return lam


@dataclass
class SmoothFunction:
    """A convex differentiable function with ``lipschitz``-Lipschitz gradient."""

    gradient: Callable
    lipschitz: float
    value: Callable | None = None

    def __post_init__(self):
        if not float(self.lipschitz) > 0.0:
            raise ValueError("Lipschitz constant must be positive")
        self.lipschitz = float(self.lipschitz)

    @property
    def beta(self):
        return 1.0 / self.lipschitz

    def sampled_lipschitz(self, dim, pairs=1000, seed=0, radius=10.0) -> float:
        rng = np.random.default_rng(seed)
        best = 0.0
        for _ in range(pairs):
            x, y = rng.uniform(-radius, radius, (2, dim))
            d = np.linalg.norm(x - y)
            if d > 0:
                best = max(best, np.linalg.norm(self.gradient(x) - self.gradient(y)) / d)
        return best


def least_squares(a, b, lipschitz=None) -> SmoothFunction:
    """``g(x) = 1/2 ||a x - b||^2``; the Lipschitz constant defaults to power iteration."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float)
    if lipschitz is None:
        lipschitz = power_iteration(a)
    return SmoothFunction(
        gradient=lambda x: a.T @ (a @ x - b),
        lipschitz=lipschitz,
        value=lambda x: 0.5 * float(np.sum((a @ x - b) ** 2)),
    )


def squared_distance(c) -> SmoothFunction:
    """``g(x) = 1/2 ||x - c||^2``."""
    c = as_point(c)
    return SmoothFunction(
        gradient=lambda x: x - c,
        lipschitz=1.0,
        value=lambda x: 0.5 * float(np.sum((x - c) ** 2)),
    )


def gradient_step(g: SmoothFunction, gamma, dim) -> AveragedMap:
    """``x -> x - gamma grad g(x)``, which is ``gamma/(2 beta)``-averaged."""
    gamma = float(gamma)
    two_beta = 2.0 * g.beta
    if not 0.0 < gamma < two_beta:
        raise RangeViolation(
            f"gamma must lie in ]0, 2*beta[ = ]0, {two_beta!r}[, got {gamma!r}",
            bound="gamma<2beta", value=gamma, lower=0.0, upper=two_beta,
        )
    grad = g.gradient
    return AveragedMap(lambda x: x - gamma * grad(x), gamma / two_beta, dim, name="grad_step")


def identity(dim) -> AveragedMap:
    # Id is alpha-averaged for every alpha; 1/2 is the conventional choice
    return AveragedMap(lambda x: x.copy(), 0.5, dim, name="Id")


# -- combinators --------------------------------------------------------------------

def relax(t: AveragedMap, lam) -> AveragedMap:
    """``x -> x + lam (T x - x)``, averaged with constant ``lam * alpha``."""
    lam = float(lam)
    bound = 1.0 / t.alpha
    if not 0.0 < lam < bound:
        raise RangeViolation(
            f"relaxation must lie in ]0, 1/alpha[ = ]0, {bound!r}[, got {lam!r}",
            bound="lambda<1/alpha", value=lam, lower=0.0, upper=bound,
        )
    if lam == 1.0:
        return t
    ev = t.evaluate
    return AveragedMap(
        lambda x: x + lam * (ev(x) - x), lam * t.alpha, t.dim, tag=RELAXED,
        factors=(t,), name=f"relax({t.name})",
    )


def _same_dim(ts):
    dims = {t.dim for t in ts}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch among operators: {sorted(dims)}")
    return dims.pop()


def compose(ts: Sequence[AveragedMap]) -> AveragedMap:
    """``T1 T2 ... Tm`` (``Tm`` applied first); constant from the closed form."""
    ts = list(ts)
    if not ts:
        raise ValueError("compose needs at least one operator")
    if len(ts) == 1:
        return ts[0]
    dim = _same_dim(ts)
    evals = [t.evaluate for t in reversed(ts)]

    def evaluate(x):
        for ev in evals:
            x = ev(x)
        return x

    alpha = C.compose_many_closed([t.alpha for t in ts])
    return AveragedMap(evaluate, alpha, dim, tag=COMPOSED, factors=ts,
                       name="(" + " o ".join(t.name for t in ts) + ")")


def combine(weights, ts: Sequence[AveragedMap]) -> AveragedMap:
    """Pointwise convex combination ``sum w_i T_i``."""
    ts = list(ts)
    w = C.as_weights(weights)
    if len(ts) != w.size:
        raise ValueError(f"{w.size} weights for {len(ts)} operators")
    if len(ts) == 1:
        return ts[0]
    dim = _same_dim(ts)
    evals = [t.evaluate for t in ts]

    def evaluate(x):
        out = w[0] * evals[0](x)
        for wi, ev in zip(w[1:], evals[1:]):
            out = out + wi * ev(x)
        return out

    alpha = C.convex_combination_constant(w, [t.alpha for t in ts])
    return AveragedMap(evaluate, alpha, dim, tag=COMBINED, factors=ts, weights=w,
                       name="avg[" + ", ".join(t.name for t in ts) + "]")


# -- verification ---------------------------------------------------------------------

@dataclass
class AveragednessReport:
    alpha: float
    pair_count: int
    seed: int
    box_radius: float
    violations: int
    max_violation: float
    worst_pair: tuple | None
    max_violation_norm_form: float
    max_violation_inner_form: float

    @property
    def ok(self):
        return self.violations == 0


def verify_averaged(t: AveragedMap, alpha=None, pair_count=10_000, seed=0,
                    box_radius=10.0, tol=VERIFY_TOL) -> AveragednessReport:
    """Search for pairs violating the ``alpha``-averagedness inequalities.

    Two equivalent characterizations are evaluated on every sampled pair::

        ||Tx-Ty||^2 <= ||x-y||^2 - (1-a)/a ||(x-Tx)-(y-Ty)||^2
        ||Tx-Ty||^2 + (1-2a)||x-y||^2 <= 2(1-a) <x-y, Tx-Ty>

    A pair counts as a violation when either left side exceeds its right
    side by more than ``tol``.
    """
    a = float(C.Alpha(t.alpha if alpha is None else alpha))
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-box_radius, box_radius, size=(pair_count, 2, t.dim))
    ev = t.evaluate
    tp = np.array([[ev(x), ev(y)] for x, y in pts]).reshape(pts.shape)
    d = pts[:, 0] - pts[:, 1]
    dt = tp[:, 0] - tp[:, 1]
    r = d - dt
    dd = np.einsum("ij,ij->i", d, d)
    dtdt = np.einsum("ij,ij->i", dt, dt)
    v_norm = dtdt - (dd - (1.0 - a) / a * np.einsum("ij,ij->i", r, r))
    v_inner = dtdt + (1.0 - 2.0 * a) * dd - 2.0 * (1.0 - a) * np.einsum("ij,ij->i", d, dt)
    v = np.maximum(v_norm, v_inner)
    k = int(np.argmax(v))
    return AveragednessReport(a, pair_count, seed, box_radius, int(np.count_nonzero(v > tol)),
                              float(v[k]), (pts[k, 0].copy(), pts[k, 1].copy()),
                              float(v_norm.max()), float(v_inner.max()))
