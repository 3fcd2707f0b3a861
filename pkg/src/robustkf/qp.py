"""Dual quadratic program solved at every filter step.

Each measurement update maximizes a concave dual over an innovation
multiplier ``theta`` (one entry per measurement channel) and, when linear
inequality constraints are active, a nonnegative multiplier ``xi``:

    maximize   -0.5 z' quad z - epsilon'|theta| + lin_theta'theta - lin_xi'xi
    subject to |theta_j| <= kappa_j,   xi >= 0,      z = (theta, xi)

The |theta| term comes from eliminating the tube slack: at the optimum the
slack equals |theta| exactly, so it never appears as a separate variable
(it is still recoverable, see :attr:`InnovationSolution.zeta`).

The solver is cyclic coordinate descent on the equivalent minimization.
Every coordinate update is an exact one-dimensional minimization with a
closed form (soft-threshold then clip for theta, clamp at zero for xi), so
the iterate objective never increases and the box and sign constraints
hold exactly at every iterate. Convergence is declared when the
subgradient KKT residual of :func:`kkt_residual` drops to ``tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterDomainError
from .validation import as_vector

ZERO_CURVATURE = 1e-14

STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max_iter"
STATUS_UNBOUNDED = "unbounded"


@dataclass
class InnovationProblem:
    """Data of one dual innovation QP.

    quad      : (m+p, m+p) quadratic term; theta block must be positive
                definite. Replaced by its symmetric part on construction;
                inputs asymmetric beyond 1e-10 relative are rejected.
    lin_theta : (m,) linear coefficient of theta (the innovation term)
    lin_xi    : (p,) linear coefficient of xi (constraint slack at the
                prior prediction); p = 0 means no inequality constraints
    epsilon   : (m,) dead-zone half-widths, nonnegative
    kappa     : (m,) box radii for theta, positive or +inf
    """

    quad: np.ndarray
    lin_theta: np.ndarray
    lin_xi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    epsilon: np.ndarray | None = None
    kappa: np.ndarray | None = None

    def __post_init__(self):
        self.lin_theta = as_vector(self.lin_theta, None, "lin_theta")
        m = self.lin_theta.shape[0]
        self.lin_xi = as_vector(self.lin_xi, None, "lin_xi")
        p = self.lin_xi.shape[0]
        quad = np.asarray(self.quad, dtype=float)
        if quad.shape != (m + p, m + p):
            raise ParameterDomainError(
                f"quad must have shape ({m + p}, {m + p}) for m={m}, p={p}; got {quad.shape}"
            )
        if not np.all(np.isfinite(quad)):
            raise ParameterDomainError("quad contains non-finite entries")
        scale = max(float(np.max(np.abs(quad))), 1.0)
        asym = float(np.max(np.abs(quad - quad.T)))
        if asym > 1e-10 * scale:
            raise ParameterDomainError(
                f"quad asymmetry {asym:.3e} exceeds 1e-10 relative; symmetrize the input"
            )
        self.quad = 0.5 * (quad + quad.T)
        try:
            np.linalg.cholesky(self.quad[:m, :m])
        except np.linalg.LinAlgError:
            raise ParameterDomainError("theta block of quad must be positive definite") from None
        if self.epsilon is None:
            self.epsilon = np.zeros(m)
        self.epsilon = as_vector(self.epsilon, m, "epsilon")
        if np.any(self.epsilon < 0):
            raise ParameterDomainError("epsilon must be nonnegative")
        if self.kappa is None:
            self.kappa = np.full(m, np.inf)
        self.kappa = as_vector(self.kappa, m, "kappa", allow_inf=True)
        if np.any(self.kappa <= 0):
            raise ParameterDomainError("kappa must be positive (inf allowed)")

    @property
    def m(self) -> int:
        return self.lin_theta.shape[0]

    @property
    def p(self) -> int:
        return self.lin_xi.shape[0]

    def objective(self, theta, xi=None) -> float:
        """Dual (maximization) objective at a candidate point."""
        theta = as_vector(theta, self.m, "theta")
        xi = np.zeros(0) if xi is None else as_vector(xi, self.p, "xi")
        z = np.concatenate([theta, xi])
        value = -0.5 * float(z @ self.quad @ z)
        value -= float(self.epsilon @ np.abs(theta))
        value += float(self.lin_theta @ theta)
        value -= float(self.lin_xi @ xi)
        return value


@dataclass
class InnovationSolution:
    """Result of :func:`solve`.

    objective is the maximization-form dual value at (theta, xi); it is
    +inf when the status is "unbounded". objective_trace records the value
    after every sweep (nondecreasing, by exact coordinate maximization).
    """

    theta: np.ndarray
    xi: np.ndarray
    objective: float
    iterations: int
    status: str
    objective_trace: list[float] = field(default_factory=list)

    @property
    def zeta(self) -> np.ndarray:
        """Optimal tube slack, recovered as |theta|."""
        return np.abs(self.theta)


def kkt_residual(problem: InnovationProblem, theta, xi=None) -> float:
    """Max-norm KKT residual of a candidate point, in the subgradient sense.

    Stationarity is measured per coordinate against the position of the
    point (interior / at a bound / at zero); primal violations |theta|-kappa
    and -xi enter the same max. Zero only at the exact optimum.
    """
    m, p = problem.m, problem.p
    theta = as_vector(theta, m, "theta")
    xi = np.zeros(0) if xi is None else as_vector(xi, p, "xi")
    z = np.concatenate([theta, xi])
    grad = problem.quad @ z
    worst = 0.0
    for j in range(m):
        g = grad[j] - problem.lin_theta[j]
        eps_j, kap_j = problem.epsilon[j], problem.kappa[j]
        worst = max(worst, abs(theta[j]) - kap_j)
        # classify against the clipped position so infeasible points still
        # get a sensible stationarity term on top of the violation above
        t = min(max(theta[j], -kap_j), kap_j)
        if t >= kap_j and math.isfinite(kap_j):
            worst = max(worst, g + eps_j, 0.0)
        elif t <= -kap_j and math.isfinite(kap_j):
            worst = max(worst, -(g - eps_j), 0.0)
        elif t == 0.0:
            worst = max(worst, abs(g) - eps_j, 0.0)
        elif t > 0.0:
            worst = max(worst, abs(g + eps_j))
        else:
            worst = max(worst, abs(g - eps_j))
    for i in range(p):
        g = grad[m + i] + problem.lin_xi[i]
        worst = max(worst, -xi[i])
        if xi[i] > 0.0:
            worst = max(worst, abs(g))
        else:
            worst = max(worst, -g, 0.0)
    return float(worst)


def _soft_threshold(u: float, width: float) -> float:
    if u > width:
        return u - width
    if u < -width:
        return u + width
    return 0.0


def solve(
    problem: InnovationProblem,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    z0: np.ndarray | None = None,
) -> InnovationSolution:
    """Solve the dual innovation QP by cyclic coordinate descent.

    Parameters
    ----------
    problem : InnovationProblem
    tol : KKT residual (max-norm, subgradient sense) declaring convergence.
    max_iter : sweep budget; one sweep updates every coordinate once.
    z0 : optional initial point (theta, xi) stacked; clipped into the
        feasible set. Default is the origin, which keeps the dead-zone
        case exact: if every |lin_theta_j| <= epsilon_j and lin_xi >= 0
        the origin is already optimal and theta = 0 is returned as is.

    Returns
    -------
    InnovationSolution with status "converged", "max_iter", or
    "unbounded". Unboundedness is only detected on zero-curvature xi
    coordinates (diagonal <= 1e-14) with a negative linear coefficient;
    theta and xi then hold the last iterate and objective is +inf.
    """
    m, p = problem.m, problem.p
    size = m + p
    quad = problem.quad
    diag = np.diag(quad).copy()
    eps = problem.epsilon
    kap = problem.kappa

    if z0 is None:
        z = np.zeros(size)
    else:
        z = as_vector(z0, size, "z0", allow_inf=False).copy()
        z[:m] = np.clip(z[:m], -kap, kap)
        if p:
            z[m:] = np.maximum(z[m:], 0.0)

    trace: list[float] = []
    if kkt_residual(problem, z[:m], z[m:]) <= tol:
        return InnovationSolution(
            theta=z[:m].copy(),
            xi=z[m:].copy(),
            objective=problem.objective(z[:m], z[m:]),
            iterations=0,
            status=STATUS_CONVERGED,
            objective_trace=trace,
        )

    status = STATUS_MAX_ITER
    sweeps = 0
    for sweep in range(1, max_iter + 1):
        sweeps = sweep
        for j in range(m):
            g = float(quad[j] @ z) - diag[j] * z[j] - problem.lin_theta[j]
            t = _soft_threshold(-g, eps[j]) / diag[j]
            z[j] = min(max(t, -kap[j]), kap[j])
        unbounded = False
        for i in range(p):
            row = m + i
            g = float(quad[row] @ z) - diag[row] * z[row] + problem.lin_xi[i]
            if diag[row] <= ZERO_CURVATURE:
                # flat direction: either pinned at zero or the dual grows
                # without bound along it
                if g >= 0.0:
                    z[row] = 0.0
                else:
                    unbounded = True
                    break
            else:
                z[row] = max(0.0, -g / diag[row])
        if unbounded:
            status = STATUS_UNBOUNDED
            break
        trace.append(problem.objective(z[:m], z[m:]))
        if kkt_residual(problem, z[:m], z[m:]) <= tol:
            status = STATUS_CONVERGED
            break

    objective = math.inf if status == STATUS_UNBOUNDED else problem.objective(z[:m], z[m:])
    return InnovationSolution(
        theta=z[:m].copy(),
        xi=z[m:].copy(),
        objective=objective,
        iterations=sweeps,
        status=status,
        objective_trace=trace,
    )
