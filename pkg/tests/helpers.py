"""Random instance generators shared by the test modules.

Everything is seeded through numpy Generators passed in by the caller, so
each test controls its own stream and reruns are exact.
"""

from __future__ import annotations

import numpy as np

from robustkf.losses import LossParams
from robustkf.model import LinearConstraintSet, StateSpaceModel, WeightConfig


def random_spd(rng: np.random.Generator, size: int, lo: float = 0.4, hi: float = 4.0) -> np.ndarray:
    """SPD matrix with eigenvalues drawn uniformly in [lo, hi]."""
    basis, _ = np.linalg.qr(rng.standard_normal((size, size)))
    eigs = rng.uniform(lo, hi, size)
    mat = basis @ np.diag(eigs) @ basis.T
    return 0.5 * (mat + mat.T)


def random_stable(rng: np.random.Generator, n: int, radius: float = 0.95) -> np.ndarray:
    """Square matrix rescaled to a spectral radius below ``radius``."""
    mat = rng.standard_normal((n, n))
    rho = max(np.abs(np.linalg.eigvals(mat)))
    target = radius * rng.uniform(0.3, 1.0)
    return mat * (target / rho)


def random_model(rng: np.random.Generator, n: int, l: int, m: int) -> StateSpaceModel:
    return StateSpaceModel(
        A=random_stable(rng, n),
        B=rng.standard_normal((n, l)),
        C=rng.standard_normal((m, n)),
    )


def random_weights(
    rng: np.random.Generator,
    model: StateSpaceModel,
    with_R: bool = True,
    with_r: bool = False,
) -> WeightConfig:
    return WeightConfig(
        P=random_spd(rng, model.n),
        Q=random_spd(rng, model.l),
        R=random_spd(rng, model.m) if with_R else None,
        r=rng.uniform(0.5, 3.0, model.m) if with_r else None,
    )


def random_loss(
    rng: np.random.Generator,
    m: int,
    finite_kappa: bool = False,
    eps_scale: float = 1.0,
) -> LossParams:
    epsilon = rng.uniform(0.05, 1.0, m) * eps_scale
    kappa = rng.uniform(0.5, 4.0, m) if finite_kappa else None
    return LossParams(epsilon=epsilon, kappa=kappa)


def random_constraints(
    rng: np.random.Generator,
    model: StateSpaceModel,
    p: int,
    margin: float = 1.0,
) -> LinearConstraintSet:
    """Constraint set whose bound sits ``margin`` above the origin row sums.

    With a positive margin the zero trajectory is strictly feasible, so
    the constrained problems stay bounded while still binding for large
    enough measurements.
    """
    U = rng.standard_normal((p, model.n))
    V = rng.standard_normal((p, model.l))
    a = np.abs(rng.standard_normal(p)) + margin
    return LinearConstraintSet(U=U, V=V, a=a)


def scalar_setup():
    """The hand-checkable scalar instance: A = B = C = P = Q = R = 1."""
    model = StateSpaceModel(A=[[1.0]], B=[[1.0]], C=[[1.0]])
    weights = WeightConfig(P=[[1.0]], Q=[[1.0]], R=[[1.0]], r=[1.0])
    return model, weights
