"""scikit-learn style wrappers around the splitting and feasibility runners."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import constants as C
from .iteration import StopRule, string_run
from .operators import least_squares, power_iteration, projector, prox_l1, set_from_dict
from .schedules import CLASSICAL, Schedule, UpperBound
from .splitting import FbSchedule, MinimizationProblem, proximal_gradient_run


class ExtendedForwardBackwardLasso(RegressorMixin, BaseEstimator):
    """L1-regularized least squares solved by over-relaxed proximal gradient.

    Minimizes ``tau ||w||_1 + ||X w - y||^2 / 2``.

    Parameters
    ----------
    tau : float
        Weight of the l1 term.
    relaxation : float or "max"
        Relaxation parameter; ``"max"`` uses ``(1-eps)(2 + eps - step/2)``,
        the largest value admissible for the chosen step.
    eps : float or None
        Margin parameter in ]0, 1/2[, also below ``beta``; ``None`` picks
        ``min(0.1, beta/2)``.
    step : float
        Step size in units of ``beta = 1/L`` with ``L = ||X||^2``.
    max_iter : int
    tol : float
        Stop once the fixed-point residual falls below this value.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    n_iter_ : int
    beta_ : float
    trace_ : IterationTrace
    """

    def __init__(self, tau=0.1, relaxation="max", eps=None, step=1.0, max_iter=10_000, tol=1e-10):
        self.tau = tau
        self.relaxation = relaxation
        self.eps = eps
        self.step = step
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if not self.tau >= 0:
            raise ValueError(f"tau must be nonnegative, got {self.tau!r}")
        lip = power_iteration(X, tol=1e-10)
        if lip <= 0.0:
            raise ValueError("X has zero spectral norm")
        g = least_squares(X, y, lipschitz=lip)
        tau = float(self.tau)
        problem = MinimizationProblem(prox=lambda gamma, v: prox_l1(v, gamma * tau), smooth=g,
                                      dim=X.shape[1])
        lam = UpperBound() if self.relaxation == "max" else float(self.relaxation)
        eps = min(0.1, 0.5 * g.beta) if self.eps is None else self.eps
        sched = FbSchedule(eps, float(self.step) * g.beta, lam)
        stop = StopRule(int(self.max_iter), float(self.tol))
        self.trace_ = proximal_gradient_run(problem, sched, np.zeros(X.shape[1]), stop,
                                            thinning=max(1, int(self.max_iter)))
        self.coef_ = self.trace_.x
        self.n_iter_ = self.trace_.iterations
        self.beta_ = g.beta
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_


class FeasibilityProjector(TransformerMixin, BaseEstimator):
    """Maps each row to a point of the intersection of convex sets.

    Every row seeds a string-averaging iteration over projectors; the
    iteration's limit replaces the row.

    Parameters
    ----------
    sets : list of set descriptors or their dict form
    strings : list of lists of int, optional
        Set indices per string, applied right to left; defaults to one
        singleton string per set.
    weights : sequence of float, optional
        String weights; uniform by default.
    relaxation : float
        Must lie in ]0, 1/alpha_[.
    max_iter : int
    tol : float

    Attributes
    ----------
    alpha_ : float
        Averagedness constant of the string-averaging operator.
    alpha_legacy_ : float
        The older, larger constant for the same strings.
    n_iter_ : ndarray of int, set by ``transform``
    """

    def __init__(self, sets, strings=None, weights=None, relaxation=1.0, max_iter=5000, tol=1e-12):
        self.sets = sets
        self.strings = strings
        self.weights = weights
        self.relaxation = relaxation
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X=None, y=None):
        sets = [s if not isinstance(s, dict) else set_from_dict(s) for s in self.sets]
        if not sets:
            raise ValueError("need at least one set")
        dims = {s.dim for s in sets}
        if len(dims) != 1:
            raise ValueError(f"sets have mixed dimensions {sorted(dims)}")
        strings = self.strings or [[i] for i in range(len(sets))]
        for st in strings:
            if not st or any(not 0 <= i < len(sets) for i in st):
                raise ValueError(f"invalid string {st!r} for {len(sets)} sets")
        w = C.as_weights(self.weights or [1.0 / len(strings)] * len(strings))
        const = [[0.5] * len(st) for st in strings]
        self.alpha_ = float(C.string_averaging_constant(const, w))
        self.alpha_legacy_ = float(C.string_averaging_constant_legacy(const, w))
        self.schedule_ = Schedule(float(self.relaxation), CLASSICAL)
        self.schedule_.relaxation(0, self.alpha_)  # raises when outside ]0, 1/alpha[
        ops = [projector(s) for s in sets]
        self.sets_ = sets
        self.strings_ = [[ops[i] for i in st] for st in strings]
        self.weights_ = w
        self.n_features_in_ = dims.pop()
        if X is not None:
            X = check_array(X, dtype=float)
            if X.shape[1] != self.n_features_in_:
                raise ValueError(f"X has {X.shape[1]} features, sets live in dimension {self.n_features_in_}")
        return self

    def transform(self, X):
        check_is_fitted(self, "strings_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        stop = StopRule(int(self.max_iter), float(self.tol))
        out = np.empty_like(X)
        n_iter = np.empty(X.shape[0], dtype=int)
        for i, row in enumerate(X):
            t = string_run(self.strings_, self.weights_, self.schedule_, row, stop,
                           thinning=max(1, int(self.max_iter)))
            out[i], n_iter[i] = t.x, t.iterations
        self.n_iter_ = n_iter
        return out
