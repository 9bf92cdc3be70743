"""Closed-form transition and bridge structure of the time-changed linear SDE class.

Two base dynamics driven by correlated noise Gamma^(1/2) dW:

* ``bm``: dX_t = sqrt(beta_t) Gamma^(1/2) dW_t
* ``ou``: dX_t = alpha beta_t X_t dt + sqrt(beta_t) Gamma^(1/2) dW_t  (alpha != 0 constant)

Both are the base process run on the warped clock b_t = int_0^t beta_u du, so
transitions are Gaussian with scalar mean scaling ``a`` and scalar variance
``v`` applied to Gamma:

    p(x_t' | x_t) = N(x_t'; a(t,t') x_t, v(t,t') Gamma)

with a = 1, v = b_t' - b_t for bm and a = exp(alpha db),
v = (exp(2 alpha db) - 1) / (2 alpha) for ou. Conditioning on both endpoints
gives the Gaussian bridge

    p(x_t | x_0, x_tau) = N(x_t; a_under x_0 + a_over x_tau, v_br Gamma)

whose coefficients are rational in the transition (a, v) of the two legs.
All state arguments accept shape (..., D); time arguments are scalars unless
noted (array-time helpers carry the ``_arrays`` suffix).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .covariance import CovarianceOperator, IdentityCovariance
from .errors import DegenerateIntervalError, DomainError
from .schedules import BetaSchedule, ConstantBeta

LOG_2PI = float(np.log(2.0 * np.pi))

# intervals shorter than DEGENERATE_RTOL * tau are treated as zero-length:
# sampling returns the deterministic mean instead of dividing by v ~ 0
DEGENERATE_RTOL = 1e-12


@dataclass(frozen=True)
class TransitionParams:
    """Integrated mean scaling ``a`` and integrated variance ``v`` of one transition."""

    a: float
    v: float


@dataclass(frozen=True)
class BridgeParams:
    """Endpoint weights and variance of the two-sided conditional law."""

    a_under: float  # weight on the start value
    a_over: float  # weight on the end value
    v_br: float


@dataclass(frozen=True)
class SdeSpec:
    """The time-changed linear SDE: kind, constant alpha, schedule, Gamma, horizon, dim."""

    kind: Literal["bm", "ou"]
    beta: BetaSchedule = field(default_factory=ConstantBeta)
    gamma: CovarianceOperator = None
    tau: float = 1.0
    dim: int = 1
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in ("bm", "ou"):
            raise DomainError(f"kind must be 'bm' or 'ou', got {self.kind!r}")
        if self.kind == "ou" and self.alpha == 0.0:
            raise DomainError("ou requires alpha != 0; select kind='bm' explicitly")
        if self.kind == "bm" and self.alpha != 0.0:
            raise DomainError("bm must not carry an alpha")
        if self.tau <= 0:
            raise DomainError("tau must be > 0")
        if self.dim < 1:
            raise DomainError("dim must be >= 1")
        if self.gamma is None:
            object.__setattr__(self, "gamma", IdentityCovariance(self.dim))
        if self.gamma.dim != self.dim:
            raise DomainError(
                f"gamma.dim ({self.gamma.dim}) != dim ({self.dim})"
            )
        # schedules in scope are monotone in t, so positivity at the endpoints
        # gives positivity on [0, tau]
        if min(float(self.beta.beta(0.0)), float(self.beta.beta(self.tau))) <= 0:
            raise DomainError("beta_t must stay > 0 on [0, tau]")

    def _check_time(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.tau):
            raise DomainError(f"time outside [0, {self.tau}]")
        return t

    def rate(self, t):
        """beta_t (scalar or array t in [0, tau])."""
        return self.beta.beta(self._check_time(t))

    def b(self, t):
        """Integrated clock b_t (scalar or array t in [0, tau])."""
        return self.beta.integrated(self._check_time(t))

    def drift(self, x, t):
        """Base drift f(x, t): zero for bm, alpha * beta_t * x for ou."""
        x = np.asarray(x, dtype=float)
        if self.kind == "bm":
            return np.zeros_like(x)
        return self.alpha * float(self.rate(t)) * x

    @property
    def degenerate_dt(self):
        return DEGENERATE_RTOL * self.tau


def _av_from_db(sde: SdeSpec, db):
    """Transition (a, v) from the clock increment db >= 0 (array friendly)."""
    db = np.asarray(db, dtype=float)
    if sde.kind == "bm":
        return np.ones_like(db), db
    a = np.exp(sde.alpha * db)
    v = np.expm1(2.0 * sde.alpha * db) / (2.0 * sde.alpha)
    return a, v


def transition_params(sde: SdeSpec, t: float, t_prime: float) -> TransitionParams:
    """(a, v) of the transition from time t to t' > t."""
    if not (0.0 <= t < t_prime <= sde.tau):
        raise DegenerateIntervalError(
            f"need 0 <= t < t' <= tau, got t={t}, t'={t_prime}, tau={sde.tau}"
        )
    db = float(sde.b(t_prime) - sde.b(t))
    a, v = _av_from_db(sde, db)
    return TransitionParams(float(a), float(v))


def transition_params_arrays(sde: SdeSpec, t, t_prime):
    """Vectorized (a, v) over per-row intervals; degenerate rows yield v = 0."""
    t = sde._check_time(t)
    t_prime = sde._check_time(t_prime)
    if np.any(t_prime < t):
        raise DegenerateIntervalError("t' < t in batch")
    db = sde.b(t_prime) - sde.b(t)
    return _av_from_db(sde, np.maximum(db, 0.0))


def transition_logdensity(sde, x_t, x_t_prime, t, t_prime):
    """log N(x_t'; a x_t, v Gamma); broadcasts over leading axes of the states."""
    p = transition_params(sde, t, t_prime)
    x_t = np.asarray(x_t, dtype=float)
    x_t_prime = np.asarray(x_t_prime, dtype=float)
    resid = x_t_prime - p.a * x_t
    quad = np.sum(resid * sde.gamma.solve(resid), axis=-1) / p.v
    logdet = sde.gamma.logdet() + sde.dim * np.log(p.v)
    out = -0.5 * (sde.dim * LOG_2PI + logdet + quad)
    return float(out) if out.ndim == 0 else out


def score_wrt_initial(sde, x_t, x_t_prime, t, t_prime):
    """Gradient of the transition log-density in its *conditioning* state x_t.

    Gamma^-1 (x_t'/a - x_t) * a^2 / v.
    """
    p = transition_params(sde, t, t_prime)
    x_t = np.asarray(x_t, dtype=float)
    x_t_prime = np.asarray(x_t_prime, dtype=float)
    return sde.gamma.solve(x_t_prime / p.a - x_t) * (p.a**2 / p.v)


def score_wrt_terminal(sde, x_t, x_t_prime, t, t_prime):
    """Gradient of the transition log-density in the *reached* state x_t'.

    Gamma^-1 (a x_t - x_t') / v. This is the conditional-score target of the
    reversal score-matching loss.
    """
    p = transition_params(sde, t, t_prime)
    x_t = np.asarray(x_t, dtype=float)
    x_t_prime = np.asarray(x_t_prime, dtype=float)
    return sde.gamma.solve(p.a * x_t - x_t_prime) / p.v


def bridge_params(sde: SdeSpec, t: float, t0: float = 0.0, t1: float = None) -> BridgeParams:
    """Bridge coefficients over [t0, t1] (default [0, tau]) at interior time t."""
    if t1 is None:
        t1 = sde.tau
    if not (t0 < t < t1):
        raise DomainError(f"bridge time must satisfy {t0} < t < {t1}, got {t}")
    left = transition_params(sde, t0, t)
    right = transition_params(sde, t, t1)
    den = left.v * right.a**2 + right.v
    return BridgeParams(
        a_under=right.v * left.a / den,
        a_over=left.v * right.a / den,
        v_br=left.v * right.v / den,
    )


def bridge_params_arrays(sde: SdeSpec, t, t0: float = 0.0, t1: float = None):
    """Vectorized bridge coefficients (a_under, a_over, v_br) over interior times t."""
    if t1 is None:
        t1 = sde.tau
    t = np.asarray(t, dtype=float)
    if np.any(t <= t0) or np.any(t >= t1):
        raise DomainError("bridge times must lie strictly inside (t0, t1)")
    a_l, v_l = transition_params_arrays(sde, np.full_like(t, t0), t)
    a_r, v_r = transition_params_arrays(sde, t, np.full_like(t, t1))
    den = v_l * a_r**2 + v_r
    return v_r * a_l / den, v_l * a_r / den, v_l * v_r / den


def bridge_logdensity(sde, x_t, x0, x_tau, t, t0=0.0, t1=None):
    """log N(x_t; a_under x0 + a_over x_tau, v_br Gamma)."""
    bp = bridge_params(sde, t, t0, t1)
    x_t = np.asarray(x_t, dtype=float)
    mean = bp.a_under * np.asarray(x0, dtype=float) + bp.a_over * np.asarray(x_tau, dtype=float)
    resid = x_t - mean
    quad = np.sum(resid * sde.gamma.solve(resid), axis=-1) / bp.v_br
    logdet = sde.gamma.logdet() + sde.dim * np.log(bp.v_br)
    out = -0.5 * (sde.dim * LOG_2PI + logdet + quad)
    return float(out) if out.ndim == 0 else out


def bridge_score(sde, x_t, x0, x_tau, t, t0=0.0, t1=None):
    """Gradient of the bridge log-density in x_t:

    Gamma^-1 (a_under x0 + a_over x_tau - x_t) / v_br. This is the
    conditional-score target of the bridge score-matching loss.
    """
    bp = bridge_params(sde, t, t0, t1)
    x_t = np.asarray(x_t, dtype=float)
    mean = bp.a_under * np.asarray(x0, dtype=float) + bp.a_over * np.asarray(x_tau, dtype=float)
    return sde.gamma.solve(mean - x_t) / bp.v_br


def _sample_like(sde, mean, rng):
    """Standard Gamma-covariance noise shaped like ``mean`` (leading axes = batch)."""
    mean = np.asarray(mean, dtype=float)
    if mean.ndim == 1:
        return sde.gamma.sqrt_sample(rng)
    lead = int(np.prod(mean.shape[:-1]))
    return sde.gamma.sqrt_sample(rng, lead).reshape(mean.shape)


def sample_transition(sde, x_t, t, t_prime, rng):
    """One draw of X_t' | X_t = x_t; degenerate intervals return the mean."""
    if not (0.0 <= t <= t_prime <= sde.tau):
        raise DegenerateIntervalError(f"need 0 <= t <= t' <= tau, got {t}, {t_prime}")
    x_t = np.asarray(x_t, dtype=float)
    if t_prime - t <= sde.degenerate_dt:
        a, _ = _av_from_db(sde, float(sde.b(t_prime) - sde.b(t)))
        return float(a) * x_t
    p = transition_params(sde, t, t_prime)
    return p.a * x_t + np.sqrt(p.v) * _sample_like(sde, x_t, rng)


def sample_bridge_point(sde, x0, x_tau, t, rng, t0=0.0, t1=None):
    """One draw of X_t | endpoints; t at (or within tolerance of) an endpoint
    returns that endpoint deterministically."""
    if t1 is None:
        t1 = sde.tau
    x0 = np.asarray(x0, dtype=float)
    x_tau = np.asarray(x_tau, dtype=float)
    if not (t0 <= t <= t1):
        raise DomainError(f"bridge time must lie in [{t0}, {t1}]")
    if t - t0 <= sde.degenerate_dt:
        return x0.copy()
    if t1 - t <= sde.degenerate_dt:
        return x_tau.copy()
    bp = bridge_params(sde, t, t0, t1)
    mean = bp.a_under * x0 + bp.a_over * x_tau
    return mean + np.sqrt(bp.v_br) * _sample_like(sde, mean, rng)
