"""Dead-zone penalty functions used by the robust filters.

Two scalar losses are provided, both flat inside a half-width ``epsilon``
tube around zero:

* dead-zone quadratic: zero inside the tube, then a quadratic with weight
  ``r`` on the excess ``|z| - epsilon``;
* dead-zone Huber: same quadratic start, switching to a linear tail with
  slope ``kappa`` once the excess reaches ``kappa / r``.

``kappa = inf`` is the sentinel for "no linear tail"; with it the Huber
loss equals the quadratic loss exactly (the switch is never reached), so
reductions between the two are exact rather than approximate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterDomainError
from .validation import as_vector


def _check_channel_params(r, epsilon, kappa) -> None:
    if np.any(np.asarray(r) <= 0):
        raise ParameterDomainError("loss weight r must be positive")
    if np.any(np.asarray(epsilon) < 0):
        raise ParameterDomainError("dead-zone half-width epsilon must be nonnegative")
    if kappa is not None:
        karr = np.asarray(kappa)
        if np.any(np.isnan(karr)) or np.any(karr <= 0):
            raise ParameterDomainError("huber slope kappa must be positive (inf allowed)")


def _broadcast_flat(*values):
    shape = np.broadcast_shapes(*(np.shape(v) for v in values))
    flats = [
        np.broadcast_to(np.asarray(v, dtype=float), shape).reshape(-1).copy()
        for v in values
    ]
    return shape, flats


def eval_eps_quadratic(z, r, epsilon):
    """Dead-zone quadratic loss: 0 inside the tube, 0.5*r*(|z|-epsilon)^2 outside.

    Accepts scalars or arrays (broadcast elementwise). Exactly zero for
    |z| <= epsilon, boundary included.
    """
    _check_channel_params(r, epsilon, None)
    shape, (z_b, r_b, e_b) = _broadcast_flat(z, r, epsilon)
    excess = np.maximum(np.abs(z_b) - e_b, 0.0)
    out = (0.5 * r_b * excess * excess).reshape(shape)
    return float(out) if shape == () else out


def eval_eps_huber(z, r, epsilon, kappa):
    """Dead-zone Huber loss.

    Zero for |z| <= epsilon, quadratic 0.5*r*(|z|-epsilon)^2 while the
    excess stays below kappa/r, then linear with slope kappa. Continuous
    at both switch points. kappa = inf gives the quadratic loss exactly.
    """
    _check_channel_params(r, epsilon, kappa)
    shape, (z_b, r_b, e_b, k_b) = _broadcast_flat(z, r, epsilon, kappa)
    excess = np.maximum(np.abs(z_b) - e_b, 0.0)
    knee = k_b / r_b
    # same multiplication order as the quadratic loss so the two agree
    # bit for bit below the knee
    capped = np.minimum(excess, knee)
    out = 0.5 * r_b * capped * capped
    # Linear tail only where the knee is actually passed; at equality the
    # quadratic branch already holds the common value, and an infinite
    # kappa never enters here, so no inf*0 arithmetic occurs.
    tail = excess > knee
    out[tail] += k_b[tail] * (excess[tail] - knee[tail])
    out = out.reshape(shape)
    return float(out) if shape == () else out


@dataclass
class LossParams:
    """Per-channel dead-zone loss parameters.

    epsilon : (m,) nonnegative tube half-widths (0 collapses the dead zone)
    r       : (m,) positive quadratic weights; optional because the
              filters carry their residual weights separately, but
              required by eval_stacked_loss
    kappa   : (m,) positive Huber slopes; +inf means no linear tail
              (the default, giving pure dead-zone quadratic behavior)
    """

    epsilon: np.ndarray
    r: np.ndarray | None = field(default=None)
    kappa: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.epsilon = as_vector(self.epsilon, None, "epsilon")
        m = self.epsilon.shape[0]
        if self.r is not None:
            self.r = as_vector(self.r, m, "r")
        if self.kappa is None:
            self.kappa = np.full(m, np.inf)
        self.kappa = as_vector(self.kappa, m, "kappa", allow_inf=True)
        _check_channel_params(self.r if self.r is not None else 1.0, self.epsilon, self.kappa)

    @property
    def m(self) -> int:
        return self.epsilon.shape[0]

    def all_kappa_infinite(self) -> bool:
        return bool(np.all(np.isinf(self.kappa)))


def eval_stacked_loss(residuals, params: LossParams, kind: str):
    """Sum of per-channel losses over a residual vector.

    kind is "quadratic" or "huber". For the quadratic kind, params.r is
    read as the diagonal of the residual weight matrix.
    """
    if params.r is None:
        raise ParameterDomainError("eval_stacked_loss needs loss params with r set")
    z = as_vector(residuals, params.m, "residuals")
    if kind == "quadratic":
        per_channel = eval_eps_quadratic(z, params.r, params.epsilon)
    elif kind == "huber":
        per_channel = eval_eps_huber(z, params.r, params.epsilon, params.kappa)
    else:
        raise ParameterDomainError(f"unknown loss kind {kind!r}; use 'quadratic' or 'huber'")
    return float(np.sum(per_channel))
