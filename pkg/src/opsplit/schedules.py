"""Per-iteration parameter rules (relaxations, step sizes) and error injectors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import constants as C
from .exceptions import ScheduleViolation

# closed upper endpoints are compared with this relative slack so that a value
# typed as e.g. 1.44 is not rejected by the last ulp of (1-eps)(1+eps a)/a
CLOSED_BOUND_RTOL = 1e-12


class Rule:
    """A real sequence indexed by iteration number."""

    eventually_constant = False

    def __call__(self, n: int) -> float:
        raise NotImplementedError

    def values(self, horizon: int) -> np.ndarray:
        return np.array([self(n) for n in range(horizon)], dtype=float)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(Rule):
    value: float
    eventually_constant = True

    def __call__(self, n):
        return self.value

    def values(self, horizon):
        return np.full(horizon, self.value, dtype=float)

    def to_dict(self):
        return {"rule": "constant", "value": self.value}


@dataclass(frozen=True)
class Table(Rule):
    """Explicit values; indices past the end repeat the final value."""

    entries: tuple
    eventually_constant = True

    def __post_init__(self):
        if len(self.entries) == 0:
            raise ValueError("table rule needs at least one value")
        object.__setattr__(self, "entries", tuple(float(v) for v in self.entries))

    def __call__(self, n):
        return self.entries[min(n, len(self.entries) - 1)]

    def values(self, horizon):
        out = np.empty(horizon)
        k = min(horizon, len(self.entries))
        out[:k] = self.entries[:k]
        out[k:] = self.entries[-1]
        return out

    def to_dict(self):
        return {"rule": "table", "values": list(self.entries)}


@dataclass(frozen=True)
class Cyclic(Rule):
    """Values repeated periodically."""

    entries: tuple

    def __post_init__(self):
        if len(self.entries) == 0:
            raise ValueError("cyclic rule needs at least one value")
        object.__setattr__(self, "entries", tuple(float(v) for v in self.entries))

    def __call__(self, n):
        return self.entries[n % len(self.entries)]

    def to_dict(self):
        return {"rule": "cyclic", "values": list(self.entries)}


@dataclass(frozen=True)
class Harmonic(Rule):
    """``scale / (n + 1)``."""

    scale: float

    def __call__(self, n):
        return self.scale / (n + 1)

    def values(self, horizon):
        return self.scale / np.arange(1, horizon + 1, dtype=float)

    def to_dict(self):
        return {"rule": "harmonic", "scale": self.scale}


@dataclass(frozen=True)
class UpperBound(Rule):
    """The largest admissible relaxation for the operator at hand, times ``fraction``.

    The value depends on the averagedness constant of the current iteration, so
    it is resolved by :meth:`Schedule.relaxation`, not by calling the rule.
    """

    fraction: float = 1.0
    eventually_constant = True

    def __call__(self, n):
        raise TypeError("UpperBound is resolved against an averagedness constant")

    def to_dict(self):
        return {"rule": "max", "fraction": self.fraction}


def as_rule(spec) -> Rule:
    if isinstance(spec, Rule):
        return spec
    if isinstance(spec, (int, float)):
        return Constant(float(spec))
    if callable(spec):
        return _Callable(spec)
    return rule_from_dict(spec)


@dataclass(frozen=True)
class _Callable(Rule):
    fn: Callable

    def __call__(self, n):
        return float(self.fn(n))

    def to_dict(self):
        raise TypeError("callable rules cannot be serialized")


def rule_from_dict(d) -> Rule:
    kind = d.get("rule")
    if kind == "constant":
        return Constant(float(d["value"]))
    if kind == "table":
        return Table(tuple(d["values"]))
    if kind == "cyclic":
        return Cyclic(tuple(d["values"]))
    if kind == "harmonic":
        return Harmonic(float(d["scale"]))
    if kind == "max":
        return UpperBound(float(d.get("fraction", 1.0)))
    raise ValueError(f"unknown rule {kind!r}")


CLASSICAL, EXTENDED = "classical", "extended"


class Schedule:
    """Relaxation parameters with their admissibility regime.

    In ``classical`` mode each ``lambda_n`` must lie in ``]0, 1/alpha_n[``; in
    ``extended`` mode in ``[eps, (1-eps)(1+eps alpha_n)/alpha_n]``.
    """

    def __init__(self, relaxations=1.0, mode=CLASSICAL, eps=None):
        if mode not in (CLASSICAL, EXTENDED):
            raise ValueError(f"unknown schedule mode {mode!r}")
        self.relaxations = as_rule(relaxations)
        self.mode = mode
        self.eps = None if eps is None else C.Epsilon(eps)
        if mode == EXTENDED and self.eps is None:
            raise ValueError("extended mode requires eps")
        if isinstance(self.relaxations, UpperBound) and mode == CLASSICAL and not self.relaxations.fraction < 1.0:
            raise ValueError("classical upper bound is open; use a fraction below 1")

    def __repr__(self):
        return f"Schedule({self.relaxations!r}, mode={self.mode!r}, eps={self.eps!r})"

    def interval(self, alpha):
        """``(lower, lower_inclusive, upper, upper_inclusive)`` for constant ``alpha``."""
        if self.mode == CLASSICAL:
            return 0.0, False, 1.0 / alpha, False
        return float(self.eps), True, C.extended_sup(alpha, self.eps), True

    def relaxation(self, n: int, alpha: float) -> float:
        """Return ``lambda_n`` after checking it against ``alpha_n``."""
        lo, lo_in, hi, hi_in = self.interval(alpha)
        rule = self.relaxations
        if isinstance(rule, UpperBound):
            return rule.fraction * hi
        lam = rule(n)
        ok_lo = lam >= lo if lo_in else lam > lo
        ok_hi = lam <= hi * (1.0 + CLOSED_BOUND_RTOL) if hi_in else lam < hi
        if not (ok_lo and ok_hi):
            raise ScheduleViolation(
                f"relaxation {lam!r} at iteration {n} outside "
                f"{'[' if lo_in else ']'}{lo!r}, {hi!r}{']' if hi_in else '['} "
                f"({self.mode} mode, alpha={float(alpha)!r})",
                bound="lambda_lower" if not ok_lo else "lambda_upper",
                value=lam, lower=lo, upper=hi, index=n,
            )
        return lam

    def to_dict(self):
        d = {"mode": self.mode, "lambda": self.relaxations.to_dict()}
        if self.eps is not None:
            d["eps"] = float(self.eps)
        return d


@dataclass
class ErrorInjector:
    """Deterministic error vectors ``e_{slot, n}`` with declared norm bounds.

    ``generator(n, slot)`` returns the error added after factor ``slot``
    (0 is the outermost factor) at iteration ``n``; ``bound(n)`` is the
    declared norm bound, checked on every injection.
    """

    generator: Callable | None = None
    bound: Callable = field(default=lambda n: 0.0)
    description: dict = field(default_factory=lambda: {"rule": "none"})

    @property
    def is_zero(self):
        return self.generator is None

    def __call__(self, n: int, slot: int, dim: int) -> np.ndarray:
        if self.generator is None:
            return np.zeros(dim)
        e = np.asarray(self.generator(n, slot), dtype=float)
        if e.shape != (dim,):
            raise ValueError(f"error vector has shape {e.shape}, expected ({dim},)")
        b = self.bound(n)
        if np.linalg.norm(e) > b * (1.0 + 1e-12) + 1e-300:
            raise ScheduleViolation(
                f"error norm {np.linalg.norm(e)!r} exceeds declared bound {b!r} at iteration {n}",
                bound="error_norm", value=float(np.linalg.norm(e)), upper=b, index=n,
            )
        return e

    @classmethod
    def none(cls):
        return cls()

    @classmethod
    def decaying(cls, dim, scale=1.0, power=2.0, seed=0, slots=None):
        """Random directions with norm exactly ``scale * (n+1)**-power``.

        ``slots`` restricts injection to the given factor slots; others get 0.
        """
        scale, power = float(scale), float(power)

        def bound(n):
            return scale * (n + 1.0) ** -power

        def gen(n, slot):
            if slots is not None and slot not in slots:
                return np.zeros(dim)
            v = np.random.default_rng([seed, n, slot]).standard_normal(dim)
            return bound(n) * v / np.linalg.norm(v)

        desc = {"rule": "decaying", "scale": scale, "power": power, "seed": seed}
        if slots is not None:
            desc["slots"] = sorted(slots)
        return cls(gen, bound, desc)

    def to_dict(self):
        return dict(self.description)


def errors_from_dict(d, dim, seed=0) -> ErrorInjector:
    if d is None or d.get("rule", "none") == "none":
        return ErrorInjector.none()
    if d["rule"] == "decaying":
        slots = d.get("slots")
        return ErrorInjector.decaying(
            dim, d.get("scale", 1.0), d.get("power", 2.0), d.get("seed", seed),
            None if slots is None else set(slots),
        )
    raise ValueError(f"unknown error rule {d['rule']!r}")


def zeta(power: float, terms: int | None = None) -> float:
    """``sum_{n>=0} (n+1)^-power``; exact for power 2, otherwise by partial sum."""
    if power == 2.0 and terms is None:
        return math.pi ** 2 / 6.0
    terms = terms or 1_000_000
    return math.fsum((n + 1.0) ** -power for n in range(terms))
