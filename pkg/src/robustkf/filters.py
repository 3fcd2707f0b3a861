"""Recursive robust filters built on the per-step innovation QP.

Five step operations share one engine:

* ``eps_quadratic``      dead-zone quadratic loss
* ``eps_huber``          dead-zone Huber loss (per-channel weights r)
* ``constrained_eps``    dead-zone quadratic + linear inequality constraints
* ``constrained_huber``  dead-zone Huber + linear inequality constraints
* ``kalman``             plain Kalman baseline (fixed P, direct solve)

Each step forms the innovation y - C A x_hat, solves the small dual QP of
:mod:`robustkf.qp` over (theta, xi), and applies a Kalman-like update

    x+ = A x_hat + (A P^-1 A' + B Q^-1 B') (C' theta - U' xi) - B Q^-1 V' xi

together with the a-posteriori refresh of the current state and the
implied process-noise estimate. The quadratic term and the gains depend
only on the problem data, so they are assembled once per run, not per
step. A step whose QP does not converge is rejected: the engine raises
:class:`SolverFailure` with the solver diagnostics attached and the
caller's state is left untouched; there is no fallback update.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from . import qp
from .errors import ParameterDomainError, SolverFailure
from .losses import LossParams
from .model import LinearConstraintSet, StateSpaceModel, WeightConfig
from .validation import as_vector, check_measurement_block

FILTER_KINDS = (
    "eps_quadratic",
    "eps_huber",
    "constrained_eps",
    "constrained_huber",
    "kalman",
)

_HUBER_KINDS = ("eps_huber", "constrained_huber")
_CONSTRAINED_KINDS = ("constrained_eps", "constrained_huber")


@dataclass
class FilterState:
    """Filter state after ``step_index`` measurement updates.

    x_hat is the one-step-ahead estimate produced by the update. The
    last_* fields are diagnostics of the step that produced this state:
    the innovation multiplier, constraint multiplier, a-posteriori
    refresh of the previous state, implied process-noise estimate, dual
    objective, and solver status. They are None on the initial state.
    """

    x_hat: np.ndarray
    step_index: int = 0
    last_theta: np.ndarray | None = None
    last_xi: np.ndarray | None = None
    last_posterior: np.ndarray | None = None
    last_w: np.ndarray | None = None
    last_objective: float | None = None
    last_status: str | None = None


def initial_state(x0) -> FilterState:
    """Wrap a prior state estimate as the step-0 FilterState."""
    return FilterState(x_hat=as_vector(x0, None, "x0"))


class FilterEngine:
    """Precomputed step operator for one filter kind on fixed problem data.

    Assembles the QP quadratic term and the update gains once; ``step``
    then only forms the two linear terms and solves. With a constraint
    schedule the constraint-dependent parts are reassembled per step.
    """

    def __init__(
        self,
        kind: str,
        model: StateSpaceModel,
        weights: WeightConfig,
        loss: LossParams | None = None,
        constraints: LinearConstraintSet | None = None,
        tol: float = 1e-10,
        max_iter: int = 10_000,
    ):
        if kind not in FILTER_KINDS:
            raise ParameterDomainError(f"unknown filter kind {kind!r}; use one of {FILTER_KINDS}")
        self.kind = kind
        self.model = model
        self.weights = weights
        self.loss = loss
        self.tol = tol
        self.max_iter = max_iter

        m = model.m
        if kind == "kalman":
            self.epsilon = np.zeros(m)
            self.kappa = np.full(m, np.inf)
        else:
            if loss is None:
                raise ParameterDomainError(f"filter kind {kind!r} needs loss parameters")
            if loss.m != m:
                raise ParameterDomainError(
                    f"loss parameters are sized for {loss.m} channels, model has {m}"
                )
            self.epsilon = loss.epsilon
            if kind in _HUBER_KINDS:
                self.kappa = loss.kappa
            else:
                if not loss.all_kappa_infinite():
                    raise ParameterDomainError(
                        "finite kappa passed to a quadratic step; use the huber step "
                        "to cap measurement influence"
                    )
                self.kappa = np.full(m, np.inf)

        if kind in _HUBER_KINDS:
            r = weights.require_r(m)
            self._r_inv = np.diag(1.0 / r)
        else:
            R = weights.require_R(m)
            self._r_inv = np.linalg.inv(R)

        if constraints is None:
            constraints = LinearConstraintSet.empty(model.n, model.l)
        if kind not in _CONSTRAINED_KINDS and constraints.p > 0:
            raise ParameterDomainError(
                f"filter kind {kind!r} takes no inequality constraints; "
                "use the constrained variant"
            )
        if constraints.U.shape[1] != model.n or constraints.V.shape[1] != model.l:
            raise ParameterDomainError(
                f"constraint matrices must be (p, {model.n}) and (p, {model.l}); "
                f"got {constraints.U.shape} and {constraints.V.shape}"
            )
        self._base = constraints

        A, B, C = model.A, model.B, model.C
        self._p_inv = np.linalg.inv(weights.P)
        self._q_inv = np.linalg.inv(weights.Q)
        self._ca = C @ A
        self._cb = C @ B
        self._gain_core = A @ self._p_inv @ A.T + B @ self._q_inv @ B.T
        self._post_core = self._p_inv @ A.T
        self._w_core = self._q_inv @ B.T
        self._parts = self._assemble(constraints)

    def _assemble(self, cs: LinearConstraintSet) -> SimpleNamespace:
        A, B = self.model.A, self.model.B
        m, p = self.model.m, cs.p
        ub_v = cs.U @ B + cs.V
        ua = cs.U @ A
        stacked_in = np.vstack([self._cb, -ub_v])
        stacked_state = np.vstack([self._ca, -ua])
        residual_block = np.zeros((m + p, m + p))
        residual_block[:m, :m] = self._r_inv
        quad = (
            stacked_in @ self._q_inv @ stacked_in.T
            + residual_block
            + stacked_state @ self._p_inv @ stacked_state.T
        )
        quad = 0.5 * (quad + quad.T)
        return SimpleNamespace(
            p=p,
            ua=ua,
            a=cs.a,
            quad=quad,
            gain_theta=self._gain_core @ self.model.C.T,
            gain_xi=self._gain_core @ cs.U.T + B @ self._q_inv @ cs.V.T,
            post_theta=self._post_core @ self.model.C.T,
            post_xi=self._post_core @ cs.U.T,
            w_theta=self._w_core @ self.model.C.T,
            w_xi=self._w_core @ cs.U.T + self._q_inv @ cs.V.T,
        )

    def innovation_quad(self) -> np.ndarray:
        """The assembled quadratic term of the per-step dual QP."""
        return self._parts.quad.copy()

    def step(self, state: FilterState, y_next) -> FilterState:
        """One measurement update; returns the new state, never mutates the old.

        Raises SolverFailure (with status, iterations, residual, and the
        attempted solution attached) if the step QP does not converge.
        """
        y = as_vector(y_next, self.model.m, "y_next")
        x = as_vector(state.x_hat, self.model.n, "state.x_hat")
        index = state.step_index + 1

        cs = self._base.at(index)
        parts = self._parts if cs is self._base else self._assemble(cs)

        innovation = y - self._ca @ x

        if self.kind == "kalman":
            theta = np.linalg.solve(parts.quad, innovation)
            xi = np.zeros(0)
            objective = 0.5 * float(innovation @ theta)
            status = qp.STATUS_CONVERGED
        else:
            lin_xi = parts.a - parts.ua @ x
            problem = qp.InnovationProblem(
                quad=parts.quad,
                lin_theta=innovation,
                lin_xi=lin_xi,
                epsilon=self.epsilon,
                kappa=self.kappa,
            )
            sol = qp.solve(problem, tol=self.tol, max_iter=self.max_iter)
            if sol.status != qp.STATUS_CONVERGED:
                residual = qp.kkt_residual(problem, sol.theta, sol.xi)
                failure = SolverFailure(
                    f"step {index} rejected: QP status {sol.status!r} after "
                    f"{sol.iterations} sweeps, KKT residual {residual:.3e}",
                    status=sol.status,
                    step_index=index,
                )
                failure.solution = sol
                failure.residual = residual
                raise failure
            theta, xi = sol.theta, sol.xi
            objective = sol.objective
            status = sol.status

        x_next = self.model.A @ x + parts.gain_theta @ theta - parts.gain_xi @ xi
        posterior = x + parts.post_theta @ theta - parts.post_xi @ xi
        w_hat = parts.w_theta @ theta - parts.w_xi @ xi
        return FilterState(
            x_hat=x_next,
            step_index=index,
            last_theta=theta,
            last_xi=xi,
            last_posterior=posterior,
            last_w=w_hat,
            last_objective=objective,
            last_status=status,
        )


def step_eps_quadratic(state, y_next, model, weights, loss, *, tol=1e-10, max_iter=10_000):
    """One dead-zone quadratic update (loss.kappa must be all infinite)."""
    engine = FilterEngine("eps_quadratic", model, weights, loss, tol=tol, max_iter=max_iter)
    return engine.step(state, y_next)


def step_eps_huber(state, y_next, model, weights, loss, *, tol=1e-10, max_iter=10_000):
    """One dead-zone Huber update; uses diag(weights.r) as the residual weight."""
    engine = FilterEngine("eps_huber", model, weights, loss, tol=tol, max_iter=max_iter)
    return engine.step(state, y_next)


def step_constrained_eps(
    state, y_next, model, weights, loss, constraints, *, tol=1e-10, max_iter=10_000
):
    """Dead-zone quadratic update with linear inequality constraints."""
    engine = FilterEngine(
        "constrained_eps", model, weights, loss, constraints, tol=tol, max_iter=max_iter
    )
    return engine.step(state, y_next)


def step_constrained_huber(
    state, y_next, model, weights, loss, constraints, *, tol=1e-10, max_iter=10_000
):
    """Dead-zone Huber update with linear inequality constraints."""
    engine = FilterEngine(
        "constrained_huber", model, weights, loss, constraints, tol=tol, max_iter=max_iter
    )
    return engine.step(state, y_next)


def step_kalman(state, y_next, model, weights, *, tol=1e-10, max_iter=10_000):
    """One Kalman baseline update with the fixed weights (no Riccati update)."""
    engine = FilterEngine("kalman", model, weights, tol=tol, max_iter=max_iter)
    return engine.step(state, y_next)


def run(
    kind: str,
    model: StateSpaceModel,
    weights: WeightConfig,
    measurements,
    loss: LossParams | None = None,
    constraints: LinearConstraintSet | None = None,
    x0=None,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> list[FilterState]:
    """Apply the selected step over a measurement sequence.

    measurements is (N, m); returns the FilterState trajectory, one entry
    per step. Step errors propagate with the 1-based step index and the
    trajectory completed so far attached (``exc.partial``).
    """
    engine = FilterEngine(kind, model, weights, loss, constraints, tol=tol, max_iter=max_iter)
    ys = check_measurement_block(measurements, model.m)
    state = initial_state(np.zeros(model.n) if x0 is None else x0)
    trajectory: list[FilterState] = []
    for row in ys:
        try:
            state = engine.step(state, row)
        except SolverFailure as failure:
            failure.partial = trajectory
            raise
        trajectory.append(state)
    return trajectory
