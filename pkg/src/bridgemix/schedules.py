"""Noise-intensity schedules beta_t and their integrated clocks b_t.

The integrated clock b_t = int_0^t beta_u du warps the time axis of the base
diffusion; all schedules keep beta_t > 0 so b_t is strictly increasing and
b_0 = 0. Closed forms are used throughout (no quadrature).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class ConstantBeta:
    """Constant intensity: beta_t = rate, b_t = rate * t."""

    rate: float = 1.0

    def __post_init__(self):
        if self.rate <= 0:
            raise DomainError(f"rate must be > 0, got {self.rate}")

    def beta(self, t):
        return self.rate * np.ones_like(np.asarray(t, dtype=float))

    def integrated(self, t):
        return self.rate * np.asarray(t, dtype=float)


@dataclass(frozen=True)
class LinearVP:
    """Variance-preserving linear ramp: beta_t = beta_min + t * (beta_max - beta_min).

    b_t = beta_min * t + t^2 * (beta_max - beta_min) / 2.
    """

    beta_min: float
    beta_max: float

    def __post_init__(self):
        if self.beta_min <= 0 or self.beta_max <= 0:
            raise DomainError("beta_min and beta_max must be > 0")
        if self.beta_max < self.beta_min:
            raise DomainError("beta_max must be >= beta_min")

    def beta(self, t):
        t = np.asarray(t, dtype=float)
        return self.beta_min + t * (self.beta_max - self.beta_min)

    def integrated(self, t):
        t = np.asarray(t, dtype=float)
        return self.beta_min * t + 0.5 * t * t * (self.beta_max - self.beta_min)


@dataclass(frozen=True)
class GeometricVE:
    """Variance-exploding geometric growth.

    beta_t = sigma_min^2 * (sigma_max/sigma_min)^(2t) * 2 * log(sigma_max/sigma_min),
    b_t = sigma_min^2 * ((sigma_max/sigma_min)^(2t) - 1).
    """

    sigma_min: float
    sigma_max: float

    def __post_init__(self):
        if self.sigma_min <= 0:
            raise DomainError("sigma_min must be > 0")
        if self.sigma_max <= self.sigma_min:
            raise DomainError("sigma_max must be > sigma_min")

    def beta(self, t):
        t = np.asarray(t, dtype=float)
        log_ratio = np.log(self.sigma_max / self.sigma_min)
        return self.sigma_min**2 * np.exp(2.0 * t * log_ratio) * 2.0 * log_ratio

    def integrated(self, t):
        t = np.asarray(t, dtype=float)
        log_ratio = np.log(self.sigma_max / self.sigma_min)
        # expm1 keeps b_t accurate near t = 0
        return self.sigma_min**2 * np.expm1(2.0 * t * log_ratio)


BetaSchedule = Union[ConstantBeta, LinearVP, GeometricVE]


def integrated_rate(schedule: BetaSchedule, t):
    """b_t for scalar or array t >= 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be >= 0")
    return schedule.integrated(t)


def rate(schedule: BetaSchedule, t):
    """Instantaneous intensity beta_t for scalar or array t >= 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be >= 0")
    return schedule.beta(t)
