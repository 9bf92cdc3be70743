"""Exact drift adjustments, posterior endpoint weights, and couplings.

Two transports share one mechanical core. Both drifts are attractors toward a
posterior average of the dataset atoms:

* bridge-mixture direction (sampling time t, remaining time tau - t):
      drift = f(x, t) + beta_t * (E[X_tau | x, t] / a(t,tau) - x) * a(t,tau)^2 / v(t,tau)
  where the expectation is over the mixture-of-bridges posterior of the
  terminal atom given the current state.

* time-reversal direction (remaining noising time r = tau - t):
      drift = -f(x, r) + div G (= 0 here) + beta_r * (a(0,r) E[Y_0 | x] - x) / v(0,r)
  where the expectation is the denoising posterior of the origin atom under
  the noising transition.

E[. | x, t] = sum_n w_n x^(n) with simplex weights w computed in log space
with max-subtraction. The same drifts equal the score-form averages
(sum of weighted transition scores, resp. the marginal score); tests check
the equivalence rather than computing both.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import accel
from .covariance import IdentityCovariance
from .errors import DomainError, EvidenceUnderflowError
from .sde import (
    SdeSpec,
    bridge_params,
    score_wrt_terminal,
    transition_params,
)


@dataclass(frozen=True)
class Dataset:
    """N x D sample matrix with uniform empirical weights."""

    samples: np.ndarray

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise DomainError("samples must be an N x D array with N >= 1")
        if not np.all(np.isfinite(arr)):
            raise DomainError("samples must be finite")
        object.__setattr__(self, "samples", arr)

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    def mean(self):
        return self.samples.mean(axis=0)


# ---------------------------------------------------------------------------
# Couplings between the start law and the data atoms
# ---------------------------------------------------------------------------


class DeltaStart:
    """All trajectories start at the fixed point ``x0``; endpoints are data atoms."""

    def __init__(self, x0, dataset: Dataset):
        self.x0 = np.asarray(x0, dtype=float).reshape(-1)
        self.dataset = dataset
        if self.x0.shape[0] != dataset.dim:
            raise DomainError("x0 dimension mismatch")

    def sample_pairs(self, rng, size):
        idx = rng.integers(0, self.dataset.n, size=size)
        x0 = np.broadcast_to(self.x0, (size, self.x0.shape[0])).copy()
        return x0, self.dataset.samples[idx]

    def initial_states(self, rng, size):
        return np.broadcast_to(self.x0, (size, self.x0.shape[0])).copy()

    def _evidence_terms(self, sde, t):
        bp = bridge_params(sde, t)
        shift = bp.a_under * self.x0  # shared across atoms
        return shift, bp.a_over, bp.v_br


class GaussianStart:
    """Start law N(0, sigma0_sq * Gamma), independent of the terminal atom.

    The bridge evidence marginalizes the Gaussian start in closed form:
    x | atom ~ N(atom * a_over, Gamma * (v_br + sigma0_sq * a_under^2)).
    """

    def __init__(self, dataset: Dataset, gamma, sigma0_sq: float = 1.0):
        if sigma0_sq <= 0:
            raise DomainError("sigma0_sq must be > 0")
        self.dataset = dataset
        self.gamma = gamma
        self.sigma0_sq = float(sigma0_sq)

    def sample_pairs(self, rng, size):
        idx = rng.integers(0, self.dataset.n, size=size)
        x0 = np.sqrt(self.sigma0_sq) * self.gamma.sqrt_sample(rng, size)
        return x0, self.dataset.samples[idx]

    def initial_states(self, rng, size):
        xi = rng.standard_normal((size, self.dataset.dim))
        return np.sqrt(self.sigma0_sq) * self.gamma.sqrt_apply(xi)

    def _evidence_terms(self, sde, t):
        bp = bridge_params(sde, t)
        v_eff = bp.v_br + self.sigma0_sq * bp.a_under**2
        return np.zeros(self.dataset.dim), bp.a_over, v_eff


class IdentityCoupling:
    """Fully dependent coupling: the start equals the terminal atom."""

    def __init__(self, dataset: Dataset):
        self.dataset = dataset

    def sample_pairs(self, rng, size):
        idx = rng.integers(0, self.dataset.n, size=size)
        atoms = self.dataset.samples[idx]
        return atoms.copy(), atoms

    def initial_states(self, rng, size):
        idx = rng.integers(0, self.dataset.n, size=size)
        return self.dataset.samples[idx].copy()

    def _evidence_terms(self, sde, t):
        bp = bridge_params(sde, t)
        return np.zeros(self.dataset.dim), bp.a_under + bp.a_over, bp.v_br


class EmpiricalStart:
    """Independent product of an empirical start law and the data atoms."""

    def __init__(self, start: Dataset, dataset: Dataset):
        if start.dim != dataset.dim:
            raise DomainError("start/terminal dimension mismatch")
        self.start = start
        self.dataset = dataset

    def sample_pairs(self, rng, size):
        i = rng.integers(0, self.start.n, size=size)
        j = rng.integers(0, self.dataset.n, size=size)
        return self.start.samples[i].copy(), self.dataset.samples[j]

    def initial_states(self, rng, size):
        idx = rng.integers(0, self.start.n, size=size)
        return self.start.samples[idx].copy()


MixingDistribution = (DeltaStart, GaussianStart, IdentityCoupling, EmpiricalStart)


# ---------------------------------------------------------------------------
# Posterior weights
# ---------------------------------------------------------------------------


def _quadforms(gamma, resid):
    """r Gamma^-1 r per row of resid (..., D)."""
    return np.sum(resid * gamma.solve(resid), axis=-1)


def _softmax_rows(logw):
    m = logw.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise EvidenceUnderflowError("evidence underflowed for at least one state")
    w = np.exp(logw - m)
    w /= w.sum(axis=1, keepdims=True)
    return w


def _nearest_atom_onehot(states, atoms):
    d2 = (
        np.sum(states * states, axis=1)[:, None]
        - 2.0 * states @ atoms.T
        + np.sum(atoms * atoms, axis=1)[None, :]
    )
    w = (d2 == d2.min(axis=1, keepdims=True)).astype(float)
    w /= w.sum(axis=1, keepdims=True)
    return w


def _gaussian_atom_weights(gamma, states, means, v):
    """softmax_n of -(x - m_n) Gamma^-1 (x - m_n) / (2v); shared constants cancel."""
    if isinstance(gamma, IdentityCovariance):
        return accel.identity_weights(states, means, 2.0 * v)
    resid = states[:, None, :] - means[None, :, :]
    q = _quadforms(gamma, resid)
    return _softmax_rows(-q / (2.0 * v))


def bridge_mixture_weights(sde: SdeSpec, mixing, x, t: float):
    """Posterior atom weights of the bridge-mixture transport at state x, time t.

    x may be (D,) or (P, D); returns weights of matching leading shape. At
    t = 0 (within tolerance) the exact limits apply: uniform 1/N for product
    couplings, nearest-atom one-hot for the identity coupling.
    """
    if not (0.0 <= t < sde.tau):
        raise DomainError(f"need 0 <= t < tau, got t={t}")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    states = np.atleast_2d(x)
    atoms = mixing.dataset.samples
    if t <= sde.degenerate_dt:
        if isinstance(mixing, IdentityCoupling):
            w = _nearest_atom_onehot(states, atoms)
        else:
            w = np.full((states.shape[0], atoms.shape[0]), 1.0 / atoms.shape[0])
        return w[0] if single else w

    if isinstance(mixing, EmpiricalStart):
        bp = bridge_params(sde, t)
        # log-evidence per atom: logsumexp over start atoms of the bridge density
        starts = mixing.start.samples
        means = (
            bp.a_under * starts[:, None, :] + bp.a_over * atoms[None, :, :]
        )  # (N0, N, D)
        resid = states[:, None, None, :] - means[None, :, :, :]
        q = _quadforms(sde.gamma, resid)  # (P, N0, N)
        logk = -q / (2.0 * bp.v_br)
        m = logk.max(axis=1, keepdims=True)
        logw = np.log(np.exp(logk - m).sum(axis=1)) + m[:, 0, :]
        w = _softmax_rows(logw)
    else:
        shift, coef, v_eff = mixing._evidence_terms(sde, t)
        means = shift[None, :] + coef * atoms
        w = _gaussian_atom_weights(sde.gamma, states, means, v_eff)
    return w[0] if single else w


def reversal_weights(sde: SdeSpec, dataset: Dataset, y, r: float):
    """Denoising posterior weights of the origin atom at noisy state y, time r.

    Proportional to the noising transition density from each atom; at r -> 0
    the weights concentrate on the nearest atom.
    """
    if not (0.0 <= r <= sde.tau):
        raise DomainError(f"need 0 <= r <= tau, got r={r}")
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    states = np.atleast_2d(y)
    atoms = dataset.samples
    if r <= sde.degenerate_dt:
        w = _nearest_atom_onehot(states, atoms)
        return w[0] if single else w
    p = transition_params(sde, 0.0, r)
    w = _gaussian_atom_weights(sde.gamma, states, p.a * atoms, p.v)
    return w[0] if single else w


# ---------------------------------------------------------------------------
# Drift fields
# ---------------------------------------------------------------------------


@dataclass
class DriftEval:
    drift: np.ndarray
    weights: Optional[np.ndarray]
    denoised: Optional[np.ndarray]


class ExactBridgeMixtureField:
    """O(N) exact drift of the bridge-mixture transport."""

    direction = "bridge"

    def __init__(self, sde: SdeSpec, mixing):
        self.sde = sde
        self.mixing = mixing

    def noise_time(self, t):
        return t

    def weights(self, x, t):
        return bridge_mixture_weights(self.sde, self.mixing, x, t)

    def evaluate(self, x, t) -> DriftEval:
        sde = self.sde
        if not (0.0 <= t < sde.tau):
            raise DomainError(f"bridge drift undefined at t={t} (needs t < tau)")
        x = np.asarray(x, dtype=float)
        w = self.weights(x, t)
        denoised = w @ self.mixing.dataset.samples
        p = transition_params(sde, t, sde.tau)
        rate = float(sde.rate(t))
        adjustment = rate * (denoised / p.a - x) * (p.a**2 / p.v)
        drift = sde.drift(x, t) + adjustment
        return DriftEval(drift=drift, weights=w, denoised=denoised)

    def drift(self, x, t):
        return self.evaluate(x, t).drift


class ExactReversalField:
    """O(N) exact drift of the time-reversal transport (sampling-time clock)."""

    direction = "reversal"

    def __init__(self, sde: SdeSpec, dataset: Dataset):
        self.sde = sde
        self.dataset = dataset

    def noise_time(self, t):
        return self.sde.tau - t

    def weights(self, x, t):
        return reversal_weights(self.sde, self.dataset, x, self.sde.tau - t)

    def evaluate(self, x, t) -> DriftEval:
        sde = self.sde
        r = sde.tau - t
        if r <= 0.0:
            raise DomainError(f"reversal drift undefined at t={t} (r = 0)")
        x = np.asarray(x, dtype=float)
        w = reversal_weights(sde, self.dataset, x, r)
        denoised = w @ self.dataset.samples
        p = transition_params(sde, 0.0, r)
        rate = float(sde.rate(r))
        # div G vanishes for state-independent G = beta_r Gamma; kept explicit
        div_g = 0.0
        adjustment = rate * (p.a * denoised - x) / p.v
        drift = -sde.drift(x, r) + div_g + adjustment
        return DriftEval(drift=drift, weights=w, denoised=denoised)

    def drift(self, x, t):
        return self.evaluate(x, t).drift


class LearnedEndpointField:
    """Drift from a regressor trained to predict the denoised endpoint."""

    def __init__(self, sde: SdeSpec, net, direction: str):
        if direction not in ("bridge", "reversal"):
            raise DomainError("direction must be 'bridge' or 'reversal'")
        self.sde = sde
        self.net = net
        self.direction = direction

    def noise_time(self, t):
        return t if self.direction == "bridge" else self.sde.tau - t

    def evaluate(self, x, t) -> DriftEval:
        sde = self.sde
        x = np.asarray(x, dtype=float)
        states = np.atleast_2d(x)
        if self.direction == "bridge":
            if not (0.0 <= t < sde.tau):
                raise DomainError(f"bridge drift undefined at t={t}")
            denoised = self.net.predict(states, np.full(states.shape[0], t))
            p = transition_params(sde, t, sde.tau)
            rate = float(sde.rate(t))
            adjustment = rate * (denoised / p.a - states) * (p.a**2 / p.v)
            drift = sde.drift(states, t) + adjustment
        else:
            r = sde.tau - t
            if r <= 0.0:
                raise DomainError(f"reversal drift undefined at t={t}")
            denoised = self.net.predict(states, np.full(states.shape[0], r))
            p = transition_params(sde, 0.0, r)
            rate = float(sde.rate(r))
            adjustment = rate * (p.a * denoised - states) / p.v
            drift = -sde.drift(states, r) + adjustment
        if x.ndim == 1:
            return DriftEval(drift=drift[0], weights=None, denoised=denoised[0])
        return DriftEval(drift=drift, weights=None, denoised=denoised)

    def drift(self, x, t):
        return self.evaluate(x, t).drift


class LearnedScoreField:
    """Drift from a regressor trained on the score-matching losses.

    bridge direction: the net approximates the gradient of the log marginal
    of the delta-start mixture; the adjustment is net(x, t) minus the
    reference transition score grad_x log p_{t|0}(x | x0). At t below the
    degenerate threshold (only the first Euler evaluation, where the state
    equals x0) the reference score is replaced by its t -> 0 limit along the
    start value, alpha * Gamma^-1 x0.

    reversal direction: the net approximates the marginal score of the
    noising process and enters the reversal drift directly.
    """

    def __init__(self, sde: SdeSpec, net, direction: str, x0=None):
        if direction not in ("bridge", "reversal"):
            raise DomainError("direction must be 'bridge' or 'reversal'")
        if direction == "bridge":
            if x0 is None:
                raise DomainError("bridge score field needs the fixed start x0")
            x0 = np.asarray(x0, dtype=float).reshape(-1)
        self.sde = sde
        self.net = net
        self.direction = direction
        self.x0 = x0

    def noise_time(self, t):
        return t if self.direction == "bridge" else self.sde.tau - t

    def evaluate(self, x, t) -> DriftEval:
        sde = self.sde
        x = np.asarray(x, dtype=float)
        states = np.atleast_2d(x)
        if self.direction == "bridge":
            if not (0.0 <= t < sde.tau):
                raise DomainError(f"bridge drift undefined at t={t}")
            score = self.net.predict(states, np.full(states.shape[0], t))
            if t <= sde.degenerate_dt:
                ref = sde.alpha * sde.gamma.solve(
                    np.broadcast_to(self.x0, states.shape).copy()
                )
            else:
                ref = score_wrt_terminal(
                    sde, np.broadcast_to(self.x0, states.shape), states, 0.0, t
                )
            rate = float(sde.rate(t))
            adjustment = rate * sde.gamma.apply(score - ref)
            drift = sde.drift(states, t) + adjustment
        else:
            r = sde.tau - t
            if r <= 0.0:
                raise DomainError(f"reversal drift undefined at t={t}")
            score = self.net.predict(states, np.full(states.shape[0], r))
            rate = float(sde.rate(r))
            drift = -sde.drift(states, r) + rate * sde.gamma.apply(score)
        if x.ndim == 1:
            return DriftEval(drift=drift[0], weights=None, denoised=None)
        return DriftEval(drift=drift, weights=None, denoised=None)

    def drift(self, x, t):
        return self.evaluate(x, t).drift


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def recover_expectation_from_score(sde: SdeSpec, score, x, r: float):
    """Denoised expectation implied by a marginal score at remaining time r:

    E[origin | x] = (v(0,r) * Gamma score + x) / a(0,r).
    """
    if r <= 0:
        raise DomainError("r must be > 0")
    p = transition_params(sde, 0.0, r)
    score = np.asarray(score, dtype=float)
    x = np.asarray(x, dtype=float)
    return (p.v * sde.gamma.apply(score) + x) / p.a


def centered_start(dataset: Dataset, sde: SdeSpec):
    """Start point whose drift adjustment vanishes at t = 0: mean / a(0, tau)."""
    p = transition_params(sde, 0.0, sde.tau)
    return dataset.mean() / p.a
