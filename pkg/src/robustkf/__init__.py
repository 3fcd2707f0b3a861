"""Robust recursive state estimation for linear systems.

Filters with dead-zone quadratic and dead-zone Huber measurement losses,
optional linear inequality constraints on states and disturbances, a
Kalman baseline, batch fixed-interval smoothers that double as
verification oracles, simulation utilities, and a CLI.
"""

from .errors import (
    ConfigError,
    DimensionError,
    IngestionError,
    ParameterDomainError,
    RobustKFError,
    SimulationError,
    SolverFailure,
)
from .estimators import (
    EpsilonHuberFilter,
    EpsilonInsensitiveFilter,
    FixedIntervalSmoother,
    SteadyKalmanFilter,
)
from .filters import (
    FILTER_KINDS,
    FilterEngine,
    FilterState,
    initial_state,
    run,
    step_constrained_eps,
    step_constrained_huber,
    step_eps_huber,
    step_eps_quadratic,
    step_kalman,
)
from .losses import LossParams, eval_eps_huber, eval_eps_quadratic, eval_stacked_loss
from .model import LinearConstraintSet, StateSpaceModel, WeightConfig, steady_state_weight
from .qp import InnovationProblem, InnovationSolution, kkt_residual, solve
from .sim import NoiseSpec, RunReport, SimulationTrace, score, simulate, simulate_trace
from .smoother import (
    BatchConstraintSet,
    BatchProblem,
    BatchSolution,
    assemble,
    duality_gap,
    primal_objective,
    smooth,
)

__version__ = "0.1.0"

__all__ = [
    "BatchConstraintSet",
    "BatchProblem",
    "BatchSolution",
    "ConfigError",
    "DimensionError",
    "EpsilonHuberFilter",
    "EpsilonInsensitiveFilter",
    "FILTER_KINDS",
    "FilterEngine",
    "FilterState",
    "FixedIntervalSmoother",
    "IngestionError",
    "InnovationProblem",
    "InnovationSolution",
    "LinearConstraintSet",
    "LossParams",
    "NoiseSpec",
    "ParameterDomainError",
    "RobustKFError",
    "RunReport",
    "SimulationError",
    "SimulationTrace",
    "SolverFailure",
    "StateSpaceModel",
    "SteadyKalmanFilter",
    "WeightConfig",
    "assemble",
    "duality_gap",
    "eval_eps_huber",
    "eval_eps_quadratic",
    "eval_stacked_loss",
    "initial_state",
    "kkt_residual",
    "primal_objective",
    "run",
    "score",
    "simulate",
    "simulate_trace",
    "smooth",
    "solve",
    "steady_state_weight",
    "step_constrained_eps",
    "step_constrained_huber",
    "step_eps_huber",
    "step_eps_quadratic",
    "step_kalman",
]
