"""Synthetic data generation and scoring.

Randomness comes from numpy's Generator (PCG64) seeded from
``NoiseSpec.seed``; all draws happen up front in a fixed order (process
noise, measurement noise, outlier occurrence uniforms, outlier signs), so
two runs with the same spec produce byte-identical trajectories no matter
how the loop below evolves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterDomainError, SimulationError
from .model import StateSpaceModel
from .validation import as_vector

BLOWUP_LIMIT = 1e12


@dataclass
class NoiseSpec:
    """Noise and corruption description for one simulated run.

    process_std     : (l,) standard deviations of the process noise
    measurement_std : (m,) standard deviations of the measurement noise
    measurement_bias: (m,) constant offset added to every measurement
    outlier_probability : per-step chance of an impulse hitting y
    outlier_magnitude   : impulse size; each channel gets its own random sign
    seed            : PRNG seed (numpy PCG64)
    """

    process_std: np.ndarray
    measurement_std: np.ndarray
    measurement_bias: np.ndarray | None = None
    outlier_probability: float = 0.0
    outlier_magnitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.process_std = as_vector(self.process_std, None, "process_std")
        self.measurement_std = as_vector(self.measurement_std, None, "measurement_std")
        if self.measurement_bias is None:
            self.measurement_bias = np.zeros(self.measurement_std.shape[0])
        self.measurement_bias = as_vector(
            self.measurement_bias, self.measurement_std.shape[0], "measurement_bias"
        )
        if np.any(self.process_std < 0) or np.any(self.measurement_std < 0):
            raise ParameterDomainError("noise standard deviations must be nonnegative")
        if not 0.0 <= self.outlier_probability <= 1.0:
            raise ParameterDomainError("outlier_probability must be in [0, 1]")
        if self.outlier_magnitude < 0:
            raise ParameterDomainError("outlier_magnitude must be nonnegative")


@dataclass
class SimulationTrace:
    """Full output of one simulation."""

    states: np.ndarray        # (N, n), rows x_1..x_N
    measurements: np.ndarray  # (N, m), rows y_1..y_N
    outlier_steps: list[int]  # 1-based steps that received an impulse


def simulate_trace(
    model: StateSpaceModel, x0, horizon: int, noise: NoiseSpec
) -> SimulationTrace:
    """Roll the system forward and corrupt the measurements.

    x_k evolves from x0 under Gaussian process noise; y_k = C x_k + bias
    + Gaussian noise, plus a two-sided impulse on outlier steps. Raises
    SimulationError if the state leaves the trusted range (unstable A).
    """
    if horizon < 1:
        raise ParameterDomainError("horizon must be at least 1")
    x = as_vector(x0, model.n, "x0")
    if noise.process_std.shape[0] != model.l:
        raise ParameterDomainError(f"process_std must have length {model.l}")
    if noise.measurement_std.shape[0] != model.m:
        raise ParameterDomainError(f"measurement_std must have length {model.m}")

    rng = np.random.default_rng(noise.seed)
    w = rng.standard_normal((horizon, model.l)) * noise.process_std
    v = rng.standard_normal((horizon, model.m)) * noise.measurement_std
    occur = rng.random(horizon) < noise.outlier_probability
    signs = np.where(rng.random((horizon, model.m)) < 0.5, -1.0, 1.0)

    states = np.zeros((horizon, model.n))
    measurements = np.zeros((horizon, model.m))
    outlier_steps: list[int] = []
    for k in range(horizon):
        x = model.A @ x + model.B @ w[k]
        if np.max(np.abs(x)) > BLOWUP_LIMIT:
            raise SimulationError(
                f"state norm exceeded {BLOWUP_LIMIT:.0e} at step {k + 1}; "
                "use a stable A (spectral radius below 1) or a shorter horizon"
            )
        states[k] = x
        y = model.C @ x + noise.measurement_bias + v[k]
        if occur[k] and noise.outlier_magnitude > 0:
            y = y + signs[k] * noise.outlier_magnitude
            outlier_steps.append(k + 1)
        measurements[k] = y
    return SimulationTrace(states=states, measurements=measurements, outlier_steps=outlier_steps)


def simulate(model: StateSpaceModel, x0, horizon: int, noise: NoiseSpec):
    """Deterministic-given-seed rollout; returns (states, measurements)."""
    trace = simulate_trace(model, x0, horizon, noise)
    return trace.states, trace.measurements


@dataclass
class RunReport:
    """Estimation quality of one filter run against the truth."""

    rmse_per_state: np.ndarray
    outlier_steps: list[int] = field(default_factory=list)
    estimates: np.ndarray | None = None
    objective_trace: np.ndarray | None = None


def score(true_states, estimates, outlier_steps=(), objective_trace=None) -> RunReport:
    """Per-state RMSE of an estimate trajectory against the true one."""
    truth = np.asarray(true_states, dtype=float)
    est = np.asarray(estimates, dtype=float)
    if truth.shape != est.shape:
        raise ParameterDomainError(
            f"true states and estimates must have the same shape, got {truth.shape} and {est.shape}"
        )
    err = est - truth
    rmse = np.sqrt(np.mean(err * err, axis=0))
    return RunReport(
        rmse_per_state=rmse,
        outlier_steps=list(outlier_steps),
        estimates=est,
        objective_trace=None if objective_trace is None else np.asarray(objective_trace, dtype=float),
    )
