"""Empirical semivariograms on pixel grids and weighted least-squares fits.

gamma(h) = E[(x_{s+ds} - x_s)^2] / 2 as a function of the lag ||ds||, with
grid coordinates scaled to [0,1] (pixel (i,j) at ((i+1/2)/H, (j+1/2)/W)).
Fitting minimizes sum_h w_h (gamma_hat(h) - gamma_model(h))^2 with Cressie
weights w_h = N(h) / gamma_model(h)^2, seeded on a parameter grid and
polished with Nelder-Mead in log-parameter space.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.optimize import minimize

from . import accel
from .covariance import ExponentialKernel, Kernel, RbfKernel, variogram_value
from .errors import DomainError, FitConvergenceError


@dataclass(frozen=True)
class EmpiricalVariogram:
    """Lag-bin centers, estimates, and pair counts (empty bins already dropped).

    The bin center is the count-weighted mean pair distance of the bin, not
    the midpoint: the first bins contain no pairs below one pixel spacing, so
    midpoints would sit where no data exists and bias the fit.
    """

    lags: np.ndarray
    gamma: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if np.any(self.gamma < 0) or np.any(self.counts < 1):
            raise DomainError("estimates must be >= 0 with counts >= 1")


def empirical_variogram(image, n_bins: int = 16, max_lag: float = 0.5) -> List[EmpiricalVariogram]:
    """Per-channel semivariogram of an (H, W) or (H, W, C) field."""
    image = np.asarray(image, dtype=float)
    if image.ndim == 2:
        image = image[:, :, None]
    if image.ndim != 3 or image.shape[0] < 2 or image.shape[1] < 2:
        raise DomainError("image must be (H, W[, C]) with H, W >= 2")
    height, width, channels = image.shape
    if n_bins < 1 or max_lag <= 0:
        raise DomainError("n_bins must be >= 1 and max_lag > 0")

    # enumerate distinct offsets once: di >= 0, and dj > 0 when di == 0
    offs_i, offs_j, bins, lags = [], [], [], []
    edges = np.linspace(0.0, max_lag, n_bins + 1)
    for di in range(height):
        j_start = 1 if di == 0 else -(width - 1)
        for dj in range(j_start, width):
            h = np.hypot(di / height, dj / width)
            if h == 0.0 or h > max_lag:
                continue
            b = min(int(np.searchsorted(edges, h, side="left")) - 1, n_bins - 1)
            offs_i.append(di)
            offs_j.append(dj)
            bins.append(max(b, 0))
            lags.append(h)
    if not offs_i:
        raise DomainError("no pixel pairs within max_lag")
    offs_i = np.asarray(offs_i, dtype=np.int64)
    offs_j = np.asarray(offs_j, dtype=np.int64)
    bins = np.asarray(bins, dtype=np.int64)
    lags = np.asarray(lags)

    # per-offset pair counts are structural: (H - di) * (W - |dj|)
    pair_counts = (height - offs_i) * (width - np.abs(offs_j))
    lag_sum = np.bincount(bins, weights=lags * pair_counts, minlength=n_bins)
    count_sum = np.bincount(bins, weights=pair_counts.astype(float), minlength=n_bins)
    mean_lag = np.divide(lag_sum, count_sum, out=np.zeros(n_bins), where=count_sum > 0)

    out = []
    for c in range(channels):
        sums, counts = accel.variogram_accumulate(
            image[:, :, c], offs_i, offs_j, bins, n_bins
        )
        keep = counts >= 1
        out.append(
            EmpiricalVariogram(
                lags=mean_lag[keep],
                gamma=sums[keep] / (2.0 * counts[keep]),
                counts=counts[keep],
            )
        )
    return out


@dataclass(frozen=True)
class VariogramFit:
    """Fitted kernel plus diagnostics."""

    kernel: Kernel
    objective: float
    converged: bool
    theta_pinned: bool  # length scale stuck at the lower search bound
    family: str


def _wls_objective(emp, family, variance, length_scale):
    kernel = family(variance, length_scale)
    model = variogram_value(kernel, emp.lags)
    if np.any(model <= 0):
        return np.inf
    w = emp.counts / model**2
    return float(np.sum(w * (emp.gamma - model) ** 2))


def fit_variogram_wls(
    emp: EmpiricalVariogram,
    family: str = "exponential",
    max_iter: int = 400,
) -> VariogramFit:
    """Cressie-weighted least-squares fit of (variance, length_scale)."""
    if emp.lags.shape[0] < 3:
        raise DomainError("need at least 3 retained bins")
    families = {"exponential": ExponentialKernel, "rbf": RbfKernel}
    if family not in families:
        raise DomainError(f"family must be one of {sorted(families)}")
    ctor = families[family]

    max_lag = float(emp.lags.max())
    theta_lo, theta_hi = max_lag / 100.0, 10.0 * max_lag
    sill = max(float(emp.gamma.max()), 1e-12)
    var_lo, var_hi = sill * 1e-4, sill * 1e4

    def objective_log(z):
        variance, length_scale = np.exp(z)
        if not (var_lo <= variance <= var_hi and theta_lo <= length_scale <= theta_hi):
            return np.inf
        return _wls_objective(emp, ctor, variance, length_scale)

    # coarse seeding grid in log space
    var_seeds = sill * np.array([0.5, 1.0, 1.5])
    theta_seeds = np.geomspace(theta_lo, theta_hi, 12)
    candidates = []
    for sv in var_seeds:
        for st in theta_seeds:
            z = np.log([sv, st])
            candidates.append((objective_log(z), z))
    candidates.sort(key=lambda c: c[0])

    best_val, best_z = candidates[0]
    # fatol is absolute in scipy; scale it to the objective magnitude
    fatol = 1e-9 * (1.0 + abs(best_val))
    converged = True
    for _, z0 in candidates[:3]:
        res = minimize(
            objective_log,
            z0,
            method="Nelder-Mead",
            options={"maxiter": max_iter, "xatol": 1e-7, "fatol": fatol},
        )
        if res.fun < best_val:
            best_val, best_z = float(res.fun), res.x
        converged = converged and bool(res.success)

    variance, length_scale = np.exp(best_z)
    fit = VariogramFit(
        kernel=ctor(float(variance), float(length_scale)),
        objective=float(best_val),
        converged=converged,
        theta_pinned=bool(length_scale <= theta_lo * 1.05),
        family=family,
    )
    if not converged and not fit.theta_pinned:
        raise FitConvergenceError(
            f"Nelder-Mead hit the iteration cap ({max_iter})", best=fit
        )
    return fit
