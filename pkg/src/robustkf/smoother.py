"""Batch fixed-interval smoothers; the verification oracle for the filters.

The whole-horizon estimation problem is assembled into one dense dual QP
of the same family the filters solve per step, then the trajectory is
reconstructed from the multipliers by the adjoint recursion

    lam[N] = 0,   lam[k-1] = A' lam[k] + C' theta_k - U_k' xi
    x[0] = x0 + P^-1 A' lam[0]
    w[k] = Q^-1 (B' lam[k] - V_k' xi),   x[k+1] = A x[k] + B w[k]

so the reconstructed trajectory satisfies the dynamics exactly by
construction. At horizon 1 the assembled matrices coincide with the
per-step quantities of :mod:`robustkf.filters`, which is what makes this
module a useful independent check on the recursive updates.

Assembly is dense and meant for verification-scale horizons; anything
beyond the cap (default 50, ROBUST_FILTER_BATCH_CAP env override) is
rejected outright.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.optimize import lsq_linear

from . import qp
from .errors import ParameterDomainError, SolverFailure
from .losses import LossParams, eval_eps_huber, eval_eps_quadratic
from .model import LinearConstraintSet, StateSpaceModel, WeightConfig
from .validation import as_matrix, as_vector, check_measurement_block

VARIANTS = ("eps_quadratic", "eps_huber", "constrained_eps", "constrained_huber")

_HUBER_VARIANTS = ("eps_huber", "constrained_huber")
_CONSTRAINED_VARIANTS = ("constrained_eps", "constrained_huber")

DEFAULT_BATCH_CAP = 50
BATCH_CAP_ENV = "ROBUST_FILTER_BATCH_CAP"


def resolve_batch_cap(explicit: int | None = None) -> int:
    """Current horizon cap: env override, then explicit value, then default."""
    env = os.environ.get(BATCH_CAP_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ParameterDomainError(
                f"{BATCH_CAP_ENV} must be an integer, got {env!r}"
            ) from None
    if explicit is not None:
        return int(explicit)
    return DEFAULT_BATCH_CAP


@dataclass
class BatchConstraintSet:
    """Pooled inequality over a horizon: sum_k U_k x_k + sum_k V_k w_k <= a.

    U : list of N matrices (p, n); U[k-1] multiplies x_k, k = 1..N
    V : list of N matrices (p, l); V[k] multiplies w_k, k = 0..N-1
    a : (p,)
    """

    U: list
    V: list
    a: np.ndarray

    def __post_init__(self):
        if len(self.U) != len(self.V):
            raise ParameterDomainError(
                f"need as many U blocks as V blocks, got {len(self.U)} and {len(self.V)}"
            )
        self.a = as_vector(self.a, None, "constraints.a")
        p = self.a.shape[0]
        self.U = [as_matrix(np.atleast_2d(u), p, None, f"constraints.U[{i}]") for i, u in enumerate(self.U)]
        self.V = [as_matrix(np.atleast_2d(v), p, None, f"constraints.V[{i}]") for i, v in enumerate(self.V)]

    @property
    def p(self) -> int:
        return self.a.shape[0]

    @property
    def horizon(self) -> int:
        return len(self.U)

    @classmethod
    def per_step(cls, constraints: LinearConstraintSet, horizon: int) -> "BatchConstraintSet":
        """Expand a one-step constraint so it binds at every step.

        Each step k gets its own block of rows: U in the x_k slot, V in
        the w_{k-1} slot, and the bound repeated, reproducing what the
        constrained filter enforces step by step.
        """
        p, n = constraints.U.shape
        l = constraints.V.shape[1]
        total = p * horizon
        u_blocks, v_blocks = [], []
        for k in range(horizon):
            u_k = np.zeros((total, n))
            u_k[k * p:(k + 1) * p] = constraints.U
            v_k = np.zeros((total, l))
            v_k[k * p:(k + 1) * p] = constraints.V
            u_blocks.append(u_k)
            v_blocks.append(v_k)
        return cls(U=u_blocks, V=v_blocks, a=np.tile(constraints.a, horizon))


@dataclass
class BatchProblem:
    """One fixed-interval smoothing problem.

    measurements : (N, m) rows y_1..y_N
    x0           : (n,) prior estimate of the initial state
    constraints  : BatchConstraintSet, or a LinearConstraintSet (expanded
                   with :meth:`BatchConstraintSet.per_step`), or None
    horizon      : optional; must match len(measurements) when given
    """

    model: StateSpaceModel
    weights: WeightConfig
    loss: LossParams
    measurements: np.ndarray
    x0: np.ndarray
    constraints: BatchConstraintSet | LinearConstraintSet | None = None
    horizon: int | None = None

    def __post_init__(self):
        self.measurements = check_measurement_block(self.measurements, self.model.m)
        n_rows = self.measurements.shape[0]
        if self.horizon is None:
            self.horizon = n_rows
        elif self.horizon != n_rows:
            raise ParameterDomainError(
                f"horizon {self.horizon} does not match {n_rows} measurement rows"
            )
        if self.horizon < 1:
            raise ParameterDomainError("need at least one measurement")
        self.x0 = as_vector(self.x0, self.model.n, "x0")
        if self.loss.m != self.model.m:
            raise ParameterDomainError(
                f"loss parameters are sized for {self.loss.m} channels, model has {self.model.m}"
            )
        if isinstance(self.constraints, LinearConstraintSet):
            self.constraints = BatchConstraintSet.per_step(self.constraints, self.horizon)
        if self.constraints is not None:
            if self.constraints.horizon != self.horizon:
                raise ParameterDomainError(
                    f"constraint blocks cover {self.constraints.horizon} steps, horizon is {self.horizon}"
                )
            for i, (u, v) in enumerate(zip(self.constraints.U, self.constraints.V)):
                if u.shape[1] != self.model.n:
                    raise ParameterDomainError(f"constraints.U[{i}] must have {self.model.n} columns")
                if v.shape[1] != self.model.l:
                    raise ParameterDomainError(f"constraints.V[{i}] must have {self.model.l} columns")


@dataclass
class BatchSolution:
    """Smoothed trajectory and multipliers.

    x_hat : (N+1, n) with row 0 the smoothed initial state
    w_hat : (N, l)
    theta_hat : (N, m)
    xi_hat : (p,)
    lam : (N+1, n) adjoint trajectory, lam[N] = 0 exactly
    objective : dual objective value (equals the primal cost at the optimum)
    """

    x_hat: np.ndarray
    w_hat: np.ndarray
    theta_hat: np.ndarray
    xi_hat: np.ndarray
    lam: np.ndarray
    objective: float
    iterations: int = 0
    status: str = qp.STATUS_CONVERGED


def _check_variant(problem: BatchProblem, variant: str) -> None:
    if variant not in VARIANTS:
        raise ParameterDomainError(f"unknown variant {variant!r}; use one of {VARIANTS}")
    if variant in _HUBER_VARIANTS:
        problem.weights.require_r(problem.model.m)
    else:
        problem.weights.require_R(problem.model.m)
        if not problem.loss.all_kappa_infinite():
            raise ParameterDomainError(
                "finite kappa passed to a quadratic variant; use the huber variant"
            )
    if variant not in _CONSTRAINED_VARIANTS:
        if problem.constraints is not None and problem.constraints.p > 0:
            raise ParameterDomainError(
                f"variant {variant!r} takes no inequality constraints; use the constrained variant"
            )


def assemble(problem: BatchProblem, variant: str, cap: int | None = None) -> qp.InnovationProblem:
    """Stack the whole horizon into one dual QP.

    The quadratic term couples all N innovation multipliers (and the
    constraint multiplier when present) through the process noise, the
    residual weight, and the prior weight; the linear terms are the
    predicted-measurement innovations and the constraint slack at the
    prior trajectory.
    """
    _check_variant(problem, variant)
    model, weights = problem.model, problem.weights
    N = problem.horizon
    n, l, m = model.n, model.l, model.m

    limit = resolve_batch_cap(cap)
    if N > limit:
        raise ParameterDomainError(
            f"horizon exceeds batch cap (N={N} > {limit}); raise {BATCH_CAP_ENV} "
            "or use the recursive filter"
        )

    A, B, C = model.A, model.B, model.C
    p_inv = np.linalg.inv(weights.P)
    q_inv = np.linalg.inv(weights.Q)
    if variant in _HUBER_VARIANTS:
        r_inv = np.diag(1.0 / weights.require_r(m))
    else:
        r_inv = np.linalg.inv(weights.require_R(m))

    # A^k for k=0..N and A^d B for d=0..N-1; index 1 and 0 are set directly
    # so horizon-1 assembly reproduces the per-step products bit for bit.
    pow_a = [np.eye(n), A]
    for _ in range(2, N + 1):
        pow_a.append(pow_a[-1] @ A)
    pow_ab = [B]
    for d in range(1, N):
        pow_ab.append(pow_a[d] @ B)

    obs_rows = [C @ pow_a[k] for k in range(1, N + 1)]

    F = np.zeros((N * m, N * l))
    for k in range(1, N + 1):
        for j in range(k):
            F[(k - 1) * m:k * m, j * l:(j + 1) * l] = C @ pow_ab[k - 1 - j]

    q_big = np.zeros((N * l, N * l))
    r_big = np.zeros((N * m, N * m))
    for k in range(N):
        q_big[k * l:(k + 1) * l, k * l:(k + 1) * l] = q_inv
        r_big[k * m:(k + 1) * m, k * m:(k + 1) * m] = r_inv

    obs_stack = np.vstack(obs_rows)
    lin_theta = (problem.measurements - np.vstack([row @ problem.x0 for row in obs_rows]).reshape(N, m)).reshape(-1)

    cs = problem.constraints if variant in _CONSTRAINED_VARIANTS else None
    if cs is None or cs.p == 0:
        p = 0
        gain_blocks = np.zeros((0, N * l))
        state_bottom = np.zeros((0, n))
        lin_xi = np.zeros(0)
    else:
        p = cs.p
        gain_blocks = np.zeros((p, N * l))
        for i in range(N):
            block = cs.V[i].copy()
            for j in range(i + 1, N + 1):
                block += cs.U[j - 1] @ pow_ab[j - 1 - i]
            gain_blocks[:, i * l:(i + 1) * l] = block
        state_sum = cs.U[0] @ pow_a[1]
        for j in range(2, N + 1):
            state_sum = state_sum + cs.U[j - 1] @ pow_a[j]
        state_bottom = -state_sum
        lin_xi = cs.a - state_sum @ problem.x0

    stacked_in = np.vstack([F, -gain_blocks])
    stacked_state = np.vstack([obs_stack, state_bottom])
    residual_block = np.zeros((N * m + p, N * m + p))
    residual_block[:N * m, :N * m] = r_big
    quad = (
        stacked_in @ q_big @ stacked_in.T
        + residual_block
        + stacked_state @ p_inv @ stacked_state.T
    )

    if variant in _HUBER_VARIANTS:
        kappa = np.tile(problem.loss.kappa, N)
    else:
        kappa = np.full(N * m, np.inf)
    return qp.InnovationProblem(
        quad=quad,
        lin_theta=lin_theta,
        lin_xi=lin_xi,
        epsilon=np.tile(problem.loss.epsilon, N),
        kappa=kappa,
    )


def smooth(
    problem: BatchProblem,
    variant: str,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    cap: int | None = None,
) -> BatchSolution:
    """Solve the batch problem and reconstruct the smoothed trajectory."""
    model = problem.model
    N, n, l, m = problem.horizon, model.n, model.l, model.m
    dual = assemble(problem, variant, cap=cap)
    sol = qp.solve(dual, tol=tol, max_iter=max_iter)
    if sol.status != qp.STATUS_CONVERGED:
        residual = qp.kkt_residual(dual, sol.theta, sol.xi)
        failure = SolverFailure(
            f"batch solve failed: QP status {sol.status!r} after {sol.iterations} sweeps, "
            f"KKT residual {residual:.3e}",
            status=sol.status,
        )
        failure.solution = sol
        raise failure

    theta_hat = sol.theta.reshape(N, m)
    xi_hat = sol.xi
    cs = problem.constraints if variant in _CONSTRAINED_VARIANTS else None
    use_constraints = cs is not None and cs.p > 0

    A, B, C = model.A, model.B, model.C
    p_inv = np.linalg.inv(problem.weights.P)
    q_inv = np.linalg.inv(problem.weights.Q)

    lam = np.zeros((N + 1, n))
    for k in range(N, 0, -1):
        step = A.T @ lam[k] + C.T @ theta_hat[k - 1]
        if use_constraints:
            step = step - cs.U[k - 1].T @ xi_hat
        lam[k - 1] = step

    x_hat = np.zeros((N + 1, n))
    w_hat = np.zeros((N, l))
    x_hat[0] = problem.x0 + p_inv @ (A.T @ lam[0])
    for k in range(N):
        impulse = B.T @ lam[k]
        if use_constraints:
            impulse = impulse - cs.V[k].T @ xi_hat
        w_hat[k] = q_inv @ impulse
        x_hat[k + 1] = A @ x_hat[k] + B @ w_hat[k]

    return BatchSolution(
        x_hat=x_hat,
        w_hat=w_hat,
        theta_hat=theta_hat,
        xi_hat=xi_hat,
        lam=lam,
        objective=sol.objective,
        iterations=sol.iterations,
        status=sol.status,
    )


def _tube_residual_cost(d: np.ndarray, R: np.ndarray, epsilon: np.ndarray) -> float:
    """min over |eta| <= epsilon of 0.5 (d - eta)' R (d - eta).

    Per-channel closed form when R is diagonal; otherwise a bounded least
    squares on the Cholesky-whitened residual (an independent route from
    the dual QP solver, so duality-gap audits do not test the solver
    against itself).
    """
    m = d.shape[0]
    free = epsilon > 0
    if not np.any(free):
        return 0.5 * float(d @ R @ d)
    off_diag = R - np.diag(np.diag(R))
    if not np.any(off_diag):
        return float(np.sum(eval_eps_quadratic(d, np.diag(R), epsilon)))
    chol = np.linalg.cholesky(R)
    design = chol.T[:, free]
    target = chol.T @ d
    fit = lsq_linear(
        design, target, bounds=(-epsilon[free], epsilon[free]), method="bvls", tol=1e-14
    )
    eta = np.zeros(m)
    eta[free] = fit.x
    slack = d - eta
    return 0.5 * float(slack @ R @ slack)


def primal_objective(problem: BatchProblem, solution: BatchSolution, variant: str) -> float:
    """Primal estimation cost of a smoothed trajectory.

    Prior deviation and process-noise terms plus the per-step residual
    loss: dead-zone Huber per channel for the huber variants, the exact
    tube-projected quadratic for the quadratic variants.
    """
    _check_variant(problem, variant)
    model, weights = problem.model, problem.weights
    dev = solution.x_hat[0] - problem.x0
    cost = 0.5 * float(dev @ weights.P @ dev)
    for w in solution.w_hat:
        cost += 0.5 * float(w @ weights.Q @ w)
    for k in range(problem.horizon):
        residual = problem.measurements[k] - model.C @ solution.x_hat[k + 1]
        if variant in _HUBER_VARIANTS:
            cost += float(
                np.sum(
                    eval_eps_huber(
                        residual,
                        weights.require_r(model.m),
                        problem.loss.epsilon,
                        problem.loss.kappa,
                    )
                )
            )
        else:
            cost += _tube_residual_cost(
                residual, weights.require_R(model.m), problem.loss.epsilon
            )
    return cost


def duality_gap(problem: BatchProblem, solution: BatchSolution, variant: str) -> float:
    """|primal cost - dual objective| of a batch solution."""
    return abs(primal_objective(problem, solution, variant) - solution.objective)
