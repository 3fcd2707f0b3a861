"""Problem data types: system matrices, weights, and inequality constraints."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ParameterDomainError
from .validation import as_matrix, as_vector, check_spd


@dataclass
class StateSpaceModel:
    """Constant-coefficient linear system x+ = A x + B w, y = C x + v.

    A : (n, n) state transition
    B : (n, l) process noise injection
    C : (m, n) measurement map
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        self.A = as_matrix(self.A, None, None, "A")
        n = self.A.shape[0]
        if self.A.shape[1] != n:
            raise ParameterDomainError(f"A must be square, got {self.A.shape}")
        self.B = as_matrix(self.B, n, None, "B")
        self.C = as_matrix(self.C, None, n, "C")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def l(self) -> int:
        return self.B.shape[1]

    @property
    def m(self) -> int:
        return self.C.shape[0]


@dataclass
class WeightConfig:
    """Positive definite weights of the estimation objective.

    P : (n, n) weight on the initial-state deviation (fixed for a run)
    Q : (l, l) weight on process noise
    R : (m, m) weight on measurement residuals, used by the quadratic
        variants and the Kalman baseline
    r : (m,) per-channel residual weights, used by the Huber variants
        (their residual weight matrix is diag(r) by construction)

    R and r are each optional; a variant that needs the missing one
    raises at construction of the filter or batch problem.
    """

    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray | None = None
    r: np.ndarray | None = None

    def __post_init__(self):
        self.P = as_matrix(self.P, None, None, "P")
        check_spd(self.P, "P")
        self.Q = as_matrix(self.Q, None, None, "Q")
        check_spd(self.Q, "Q")
        if self.R is not None:
            self.R = as_matrix(self.R, None, None, "R")
            check_spd(self.R, "R")
        if self.r is not None:
            self.r = as_vector(self.r, None, "r")
            if np.any(self.r <= 0):
                raise ParameterDomainError("per-channel weights r must be positive")

    def require_R(self, m: int) -> np.ndarray:
        if self.R is None:
            raise ParameterDomainError("this variant needs the full residual weight R")
        if self.R.shape != (m, m):
            raise ParameterDomainError(f"R must have shape ({m}, {m}), got {self.R.shape}")
        return self.R

    def require_r(self, m: int) -> np.ndarray:
        if self.r is None:
            raise ParameterDomainError("this variant needs the per-channel weights r")
        if self.r.shape != (m,):
            raise ParameterDomainError(f"r must have length {m}, got {self.r.shape[0]}")
        return self.r


@dataclass
class LinearConstraintSet:
    """One step's inequality constraint U x+ + V w <= a.

    U : (p, n), V : (p, l), a : (p,). p = 0 is a valid empty set.

    schedule, when given, is called with the 1-based index of the state
    being produced and may return a replacement (U, V, a) triple for that
    step, or None to keep the base matrices. This is the hook for
    time-varying constraints; the default is constant.
    """

    U: np.ndarray
    V: np.ndarray
    a: np.ndarray
    schedule: Callable[[int], tuple | None] | None = None

    def __post_init__(self):
        self.U = as_matrix(np.atleast_2d(np.asarray(self.U, dtype=float)), None, None, "U")
        p = self.U.shape[0]
        self.V = as_matrix(np.atleast_2d(np.asarray(self.V, dtype=float)), p, None, "V")
        self.a = as_vector(self.a, p, "a")

    @property
    def p(self) -> int:
        return self.U.shape[0]

    @classmethod
    def empty(cls, n: int, l: int) -> "LinearConstraintSet":
        return cls(U=np.zeros((0, n)), V=np.zeros((0, l)), a=np.zeros(0))

    def at(self, step_index: int) -> "LinearConstraintSet":
        """Constraint matrices effective for the step producing x_hat[step_index]."""
        if self.schedule is None:
            return self
        override = self.schedule(step_index)
        if override is None:
            return self
        U, V, a = override
        return LinearConstraintSet(U=U, V=V, a=a)


def steady_state_weight(
    model: StateSpaceModel,
    weights: WeightConfig,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Suggest a prior weight P by iterating the filtered-covariance map.

    Reads Q and R as inverse noise covariances (the Kalman reading of the
    weights), iterates the posterior-covariance Riccati map to its fixed
    point, and returns the inverse of that covariance. Purely a
    convenience for picking a sensible constant P; the filters themselves
    never update P during a run.
    """
    A, B, C = model.A, model.B, model.C
    process_cov = B @ np.linalg.inv(weights.Q) @ B.T
    meas_cov = np.linalg.inv(weights.require_R(model.m))
    eye = np.eye(model.n)
    sigma = eye.copy()
    for _ in range(max_iter):
        predicted = A @ sigma @ A.T + process_cov
        innov_cov = C @ predicted @ C.T + meas_cov
        gain = predicted @ C.T @ np.linalg.inv(innov_cov)
        closed = eye - gain @ C
        updated = closed @ predicted @ closed.T + gain @ meas_cov @ gain.T
        if np.max(np.abs(updated - sigma)) <= tol * max(1.0, float(np.max(np.abs(sigma)))):
            sigma = updated
            break
        sigma = updated
    else:
        raise ParameterDomainError(
            "covariance iteration did not settle; is A stable and (A, C) detectable?"
        )
    return np.linalg.inv(sigma)
