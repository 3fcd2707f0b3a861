"""Scikit-learn style wrappers around the filters and the batch smoother.

Each estimator takes the problem matrices in ``__init__``, validates and
precomputes in ``fit`` (the gains and the QP quadratic term are built once
there), and maps a measurement sequence to a state-estimate sequence in
``transform``. ``transform`` is stateless across calls: every call starts
from the configured initial estimate, so the same input always produces
the same output. ``get_params``/``set_params`` work as usual, so the
estimators compose with sklearn model selection tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .filters import FilterEngine, FilterState, initial_state
from .losses import LossParams
from .model import LinearConstraintSet, StateSpaceModel, WeightConfig
from .smoother import BatchProblem, BatchSolution, smooth
from .validation import check_measurement_block


class _FilterTransformer(TransformerMixin, BaseEstimator):
    """Shared fit/transform mechanics; subclasses define _make_engine."""

    def _make_engine(self) -> FilterEngine:
        raise NotImplementedError

    def fit(self, X=None, y=None):
        """Validate the problem data and precompute the step operator."""
        self.engine_ = self._make_engine()
        self.n_features_in_ = self.engine_.model.m
        return self

    def _initial(self) -> FilterState:
        x0 = getattr(self, "x0", None)
        if x0 is None:
            x0 = np.zeros(self.engine_.model.n)
        return initial_state(x0)

    def run_states(self, X) -> list[FilterState]:
        """Full per-step diagnostics for a measurement sequence."""
        check_is_fitted(self, "engine_")
        X = check_array(X, ensure_2d=True, dtype=float)
        X = check_measurement_block(X, self.engine_.model.m, "X")
        state = self._initial()
        trajectory = []
        for row in X:
            state = self.engine_.step(state, row)
            trajectory.append(state)
        return trajectory

    def transform(self, X) -> np.ndarray:
        """Map measurements (N, m) to one-step-ahead state estimates (N, n)."""
        return np.vstack([state.x_hat for state in self.run_states(X)])

    def predict(self, X) -> np.ndarray:
        """Alias of transform, for pipelines that call predict."""
        return self.transform(X)


def _constraints_from(U, V, a) -> LinearConstraintSet | None:
    if U is None and V is None and a is None:
        return None
    if U is None or V is None or a is None:
        raise ValueError("U, V, and a must be given together")
    return LinearConstraintSet(U=U, V=V, a=a)


class EpsilonInsensitiveFilter(_FilterTransformer):
    """Recursive filter with the dead-zone quadratic loss.

    Residuals inside the per-channel tube |d_j| <= epsilon_j leave the
    prediction untouched; outside they are penalized quadratically with
    weight R. Passing U, V, a switches to the constrained update that
    keeps U x+ + V w <= a feasible at every step.
    """

    def __init__(self, A, B, C, P, Q, R, epsilon, U=None, V=None, a=None,
                 x0=None, tol=1e-10, max_iter=10_000):
        self.A = A
        self.B = B
        self.C = C
        self.P = P
        self.Q = Q
        self.R = R
        self.epsilon = epsilon
        self.U = U
        self.V = V
        self.a = a
        self.x0 = x0
        self.tol = tol
        self.max_iter = max_iter

    def _make_engine(self) -> FilterEngine:
        model = StateSpaceModel(A=self.A, B=self.B, C=self.C)
        weights = WeightConfig(P=self.P, Q=self.Q, R=self.R)
        loss = LossParams(epsilon=self.epsilon)
        constraints = _constraints_from(self.U, self.V, self.a)
        kind = "constrained_eps" if constraints is not None else "eps_quadratic"
        return FilterEngine(kind, model, weights, loss, constraints,
                            tol=self.tol, max_iter=self.max_iter)


class EpsilonHuberFilter(_FilterTransformer):
    """Recursive filter with the dead-zone Huber loss.

    Like EpsilonInsensitiveFilter but with per-channel weights r and a
    linear tail of slope kappa_j once a residual's excess passes
    kappa_j / r_j, which caps the influence of any single measurement.
    kappa omitted means no tail (pure dead-zone quadratic with diag(r)).
    """

    def __init__(self, A, B, C, P, Q, r, epsilon, kappa=None, U=None, V=None, a=None,
                 x0=None, tol=1e-10, max_iter=10_000):
        self.A = A
        self.B = B
        self.C = C
        self.P = P
        self.Q = Q
        self.r = r
        self.epsilon = epsilon
        self.kappa = kappa
        self.U = U
        self.V = V
        self.a = a
        self.x0 = x0
        self.tol = tol
        self.max_iter = max_iter

    def _make_engine(self) -> FilterEngine:
        model = StateSpaceModel(A=self.A, B=self.B, C=self.C)
        weights = WeightConfig(P=self.P, Q=self.Q, r=self.r)
        loss = LossParams(epsilon=self.epsilon, kappa=self.kappa)
        constraints = _constraints_from(self.U, self.V, self.a)
        kind = "constrained_huber" if constraints is not None else "eps_huber"
        return FilterEngine(kind, model, weights, loss, constraints,
                            tol=self.tol, max_iter=self.max_iter)


class SteadyKalmanFilter(_FilterTransformer):
    """Kalman baseline with fixed weights (no covariance update)."""

    def __init__(self, A, B, C, P, Q, R, x0=None):
        self.A = A
        self.B = B
        self.C = C
        self.P = P
        self.Q = Q
        self.R = R
        self.x0 = x0

    def _make_engine(self) -> FilterEngine:
        model = StateSpaceModel(A=self.A, B=self.B, C=self.C)
        weights = WeightConfig(P=self.P, Q=self.Q, R=self.R)
        return FilterEngine("kalman", model, weights)


class FixedIntervalSmoother(TransformerMixin, BaseEstimator):
    """Batch smoother over a whole measurement sequence.

    variant selects the loss: "eps_quadratic", "eps_huber",
    "constrained_eps", or "constrained_huber". transform returns the
    smoothed states x_1..x_N aligned with the input rows; the full
    solution (including the smoothed initial state and multipliers) is
    available from smooth_solution.
    """

    def __init__(self, variant, A, B, C, P, Q, R=None, r=None, epsilon=None, kappa=None,
                 U=None, V=None, a=None, x0=None, tol=1e-10, max_iter=10_000, cap=None):
        self.variant = variant
        self.A = A
        self.B = B
        self.C = C
        self.P = P
        self.Q = Q
        self.R = R
        self.r = r
        self.epsilon = epsilon
        self.kappa = kappa
        self.U = U
        self.V = V
        self.a = a
        self.x0 = x0
        self.tol = tol
        self.max_iter = max_iter
        self.cap = cap

    def fit(self, X=None, y=None):
        self.model_ = StateSpaceModel(A=self.A, B=self.B, C=self.C)
        self.weights_ = WeightConfig(P=self.P, Q=self.Q, R=self.R, r=self.r)
        if self.epsilon is None:
            raise ValueError("epsilon is required")
        self.loss_ = LossParams(epsilon=self.epsilon, kappa=self.kappa)
        self.constraints_ = _constraints_from(self.U, self.V, self.a)
        self.n_features_in_ = self.model_.m
        return self

    def smooth_solution(self, X) -> BatchSolution:
        check_is_fitted(self, "model_")
        X = check_array(X, ensure_2d=True, dtype=float)
        problem = BatchProblem(
            model=self.model_,
            weights=self.weights_,
            loss=self.loss_,
            measurements=X,
            x0=np.zeros(self.model_.n) if self.x0 is None else self.x0,
            constraints=self.constraints_,
        )
        return smooth(problem, self.variant, tol=self.tol, max_iter=self.max_iter, cap=self.cap)

    def transform(self, X) -> np.ndarray:
        return self.smooth_solution(X).x_hat[1:]
