"""Averagedness constants of compositions and convex combinations.

All arithmetic is in double precision. Every function validates its inputs
through :class:`Alpha`, :func:`as_weights` or :class:`Epsilon`, so an
out-of-range value fails at the call boundary rather than deep inside an
iteration.
"""

from __future__ import annotations

import math
from functools import reduce
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import RangeViolation

WEIGHT_SUM_TOL = 1e-12


class Alpha(float):
    """An averagedness constant, a float in the open interval ]0, 1[."""

    def __new__(cls, value):
        value = float(value)
        if not 0.0 < value < 1.0:
            raise RangeViolation(
                f"averagedness constant must lie in ]0,1[, got {value!r}",
                bound="alpha", value=value, lower=0.0, upper=1.0,
            )
        return super().__new__(cls, value)


class Epsilon(float):
    """Safety margin for the extended relaxation ranges, in ]0, 1/2[."""

    def __new__(cls, value):
        value = float(value)
        if not 0.0 < value < 0.5:
            raise RangeViolation(
                f"epsilon must lie in ]0,1/2[, got {value!r}",
                bound="eps", value=value, lower=0.0, upper=0.5,
            )
        return super().__new__(cls, value)


def as_weights(weights) -> np.ndarray:
    """Validate convex-combination weights: entries in ]0,1], summing to 1."""
    w = np.asarray(weights, dtype=float).ravel()
    if w.size == 0:
        raise ValueError("weights must be nonempty")
    if np.any(~np.isfinite(w)) or np.any(w <= 0.0) or np.any(w > 1.0):
        raise RangeViolation("every weight must lie in ]0,1]", bound="weights")
    if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise RangeViolation(
            f"weights must sum to 1 (got {w.sum()!r})", bound="weights_sum",
            value=float(w.sum()), lower=1.0, upper=1.0,
        )
    return w


def _alphas(alphas, min_length=1) -> list[Alpha]:
    out = [Alpha(a) for a in alphas]
    if len(out) < min_length:
        raise ValueError(f"need at least {min_length} constant(s), got {len(out)}")
    return out


def compose2(a1: float, a2: float) -> Alpha:
    """Constant of ``T1 T2`` for an ``a1``-averaged T1 and ``a2``-averaged T2."""
    a1, a2 = Alpha(a1), Alpha(a2)
    return Alpha((a1 + a2 - 2.0 * a1 * a2) / (1.0 - a1 * a2))


def compose_many_closed(alphas: Sequence[float]) -> Alpha:
    """Closed-form constant of the composition ``T1 ... Tm``.

    Computed as ``1 / (1 + 1/S)`` with ``S = sum a_i / (1 - a_i)``. A single
    constant is returned unchanged.
    """
    alphas = _alphas(alphas)
    if len(alphas) == 1:
        return alphas[0]
    s = math.fsum(a / (1.0 - a) for a in alphas)
    return Alpha(1.0 / (1.0 + 1.0 / s))


def compose_many_recursive(alphas: Sequence[float]) -> Alpha:
    """Fold :func:`compose2` left to right over the constants."""
    alphas = _alphas(alphas)
    return Alpha(reduce(lambda beta, a: compose2(a, beta), alphas[1:], alphas[0]))


_SPLIT = 134217729.0  # 2**27 + 1


def _two_sum(a: float, b: float) -> tuple[float, float]:
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _two_prod(a: float, b: float) -> tuple[float, float]:
    p = a * b
    ta = _SPLIT * a
    ah = ta - (ta - a)
    al = a - ah
    tb = _SPLIT * b
    bh = tb - (tb - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _elementary_symmetric_dd(alphas: list[float]) -> list[tuple[float, float]]:
    """Elementary symmetric polynomials as unevaluated ``hi + lo`` pairs."""
    m = len(alphas)
    s = [(1.0, 0.0)] + [(0.0, 0.0)] * m
    for k, a in enumerate(alphas, start=1):
        # descending j so that s[j-1] still holds the level-(k-1) value
        for j in range(k, 0, -1):
            ph, pl = _two_prod(a, s[j - 1][0])
            pl += a * s[j - 1][1]
            hi, lo = _two_sum(s[j][0], ph)
            lo += s[j][1] + pl
            s[j] = _two_sum(hi, lo)
    return s[1:]


def elementary_symmetric(alphas: Sequence[float]) -> list[float]:
    """Elementary symmetric polynomials ``sigma_1 .. sigma_m`` of the constants.

    Built one variable at a time with ``s_{j+1}(k+1) = s_{j+1}(k) + a_{k+1} s_j(k)``.
    """
    return [hi + lo for hi, lo in _elementary_symmetric_dd(_alphas(alphas))]


def compose_many_symmetric(alphas: Sequence[float]) -> Alpha:
    """Composition constant written with elementary symmetric polynomials.

    The alternating sums cancel heavily when the constants are close to 1,
    so the polynomials are kept in double-double form and summed exactly.
    """
    alphas = _alphas(alphas, min_length=2)
    sigma = _elementary_symmetric_dd(alphas)
    num, den = [], [1.0]
    for j, (hi, lo) in enumerate(sigma, start=1):
        sign = 1.0 if j % 2 else -1.0
        num += [sign * hi, sign * lo] * j
        den += [sign * hi, sign * lo] * (j - 1)
    return Alpha(math.fsum(num) / math.fsum(den))


class SeriesValue(NamedTuple):
    value: float
    tail_bound: float


def compose_many_series(alphas: Sequence[float], depth: int) -> SeriesValue:
    """Truncated power-series evaluation of the composition constant.

    Uses ``S_d = sum_{l<=d} sum_i a_i**l`` and returns ``S_d / (1 + S_d)``
    together with a bound on the distance to the exact constant. The map
    ``s -> s/(1+s)`` is 1-Lipschitz on ``s >= 0``, so the bound on the
    discarded tail of ``S`` carries over unchanged.
    """
    alphas = _alphas(alphas)
    depth = int(depth)
    if depth < 1:
        raise ValueError("depth must be a positive integer")
    a = np.asarray(alphas, dtype=float)
    powers = a[None, :] ** np.arange(1, depth + 1)[:, None]
    s = math.fsum(powers.ravel())
    amax = float(a.max())
    tail = len(alphas) * amax ** (depth + 1) / (1.0 - amax)
    return SeriesValue(s / (1.0 + s), tail)


def convex_combination_constant(weights, alphas: Sequence[float]) -> Alpha:
    """Constant of ``sum w_i T_i``: the weighted mean of the constants."""
    w = as_weights(weights)
    alphas = _alphas(alphas)
    if len(alphas) != w.size:
        raise ValueError(f"{w.size} weights for {len(alphas)} constants")
    return Alpha(math.fsum(wi * a for wi, a in zip(w, alphas)))


def phi_tilde(alphas: Sequence[float]) -> Alpha:
    """Older composition constant that only looks at the largest factor."""
    alphas = _alphas(alphas)
    m, amax = len(alphas), max(alphas)
    return Alpha(m * amax / ((m - 1) * amax + 1.0))


def phi_hat(a1: float, a2: float) -> Alpha:
    """Older two-factor composition constant ``a1 + a2 - a1 a2``."""
    a1, a2 = Alpha(a1), Alpha(a2)
    return Alpha(a1 + a2 - a1 * a2)


def phi_hat_gap(a1: float, a2: float) -> float:
    """Exact value of ``phi_hat(a1, a2) - compose2(a1, a2)``."""
    a1, a2 = Alpha(a1), Alpha(a2)
    return a1 * a2 * (1.0 - a1) * (1.0 - a2) / (1.0 - a1 * a2)


def _check_strings(strings, weights):
    w = as_weights(weights)
    strings = [list(s) for s in strings]
    if len(strings) != w.size:
        raise ValueError(f"{w.size} weights for {len(strings)} strings")
    if any(len(s) == 0 for s in strings):
        raise ValueError("every string must contain at least one constant")
    return strings, w


def string_averaging_constant(strings, weights) -> Alpha:
    """Constant of a weighted average of compositions ("strings")."""
    strings, w = _check_strings(strings, weights)
    return Alpha(math.fsum(wk * compose_many_closed(s) for wk, s in zip(w, strings)))


def string_averaging_constant_legacy(strings, weights) -> Alpha:
    """Older, larger string-averaging constant ``max_k m_k/(m_k - 1 + 1/max a)``."""
    strings, _ = _check_strings(strings, weights)
    rhos = []
    for s in strings:
        amax = max(_alphas(s))
        rhos.append(len(s) / (len(s) - 1 + 1.0 / amax))
    return Alpha(max(rhos))


class Bound(NamedTuple):
    """An upper endpoint of a relaxation interval."""

    value: float
    inclusive: bool

    def admits(self, x: float, rtol: float = 0.0) -> bool:
        limit = self.value * (1.0 + rtol)
        return x <= limit if self.inclusive else x < limit


class RelaxationRanges(NamedTuple):
    km_sup: Bound
    extended_sup: Bound


def extended_sup(alpha: float, eps: float) -> float:
    """``(1 - eps)(1 + eps alpha)/alpha``, the closed relaxation bound."""
    alpha, eps = Alpha(alpha), Epsilon(eps)
    return (1.0 - eps) * (1.0 + eps * alpha) / alpha


def relaxation_ranges(alpha: float, eps: float) -> RelaxationRanges:
    """Upper relaxation bounds for an ``alpha``-averaged operator.

    ``km_sup = 1/alpha`` is an open endpoint; the extended bound is closed and
    always strictly smaller.
    """
    alpha = Alpha(alpha)
    return RelaxationRanges(
        Bound(1.0 / alpha, inclusive=False),
        Bound(extended_sup(alpha, eps), inclusive=True),
    )


class FbParameters(NamedTuple):
    phi: Alpha
    lambda_sup: float


def gamma_range(beta: float, eps: float) -> tuple[float, float]:
    """Closed interval of admissible forward-backward step sizes."""
    eps = Epsilon(eps)
    return eps, 2.0 * beta / (1.0 + eps)


def check_fb_eps(beta: float, eps: float) -> Epsilon:
    beta = float(beta)
    if not beta > 0.0:
        raise RangeViolation(f"beta must be positive, got {beta!r}", bound="beta", value=beta)
    eps = Epsilon(eps)
    if not eps < beta:
        raise RangeViolation(
            f"epsilon must be below min(1/2, beta) = {min(0.5, beta)!r}",
            bound="eps<beta", value=float(eps), upper=beta,
        )
    return eps


def fb_parameters(beta: float, gamma: float, eps: float) -> FbParameters:
    """Composite constant and relaxation bound of one forward-backward step.

    ``phi = 2 beta / (4 beta - gamma)`` is the constant of
    ``J_{gamma A} (Id - gamma B)``; ``lambda_sup = (1-eps)(2 + eps - gamma/(2 beta))``.
    """
    eps = check_fb_eps(beta, eps)
    gamma = float(gamma)
    lo, hi = gamma_range(beta, eps)
    if gamma < lo:
        raise RangeViolation(
            f"gamma={gamma!r} below lower bound eps={lo!r}",
            bound="gamma>=eps", value=gamma, lower=lo, upper=hi,
        )
    if gamma > hi:
        raise RangeViolation(
            f"gamma={gamma!r} above upper bound 2*beta/(1+eps)={hi!r}",
            bound="gamma<=2beta/(1+eps)", value=gamma, lower=lo, upper=hi,
        )
    phi = Alpha(2.0 * beta / (4.0 * beta - gamma))
    return FbParameters(phi, (1.0 - eps) * (2.0 + eps - gamma / (2.0 * beta)))
