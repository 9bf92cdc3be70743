"""Training losses and their O(1)-per-row Monte Carlo batch constructors.

Four kinds, named by regression target and transport direction:

* ``score_reversal``  — Fisher-divergence loss on the noising marginal score;
  rows carry the conditional score of the noising transition as target and
  the closed-form regularizer R_r = v(0,r) / trace(Gamma^-1).
* ``score_bridge``    — Fisher-divergence loss on the delta-start mixture
  score; targets are bridge scores, regularizer J_t = v_br(0,t,tau) / trace(Gamma^-1).
* ``endpoint_bridge`` — MSE onto the drawn terminal atom (population minimizer
  is the posterior expectation); unit weights, no regularizer needed.
* ``endpoint_reversal`` — MSE onto the drawn origin atom.

Score kinds exclude the singular end of the time interval through ``t_eps``
(their targets have divergent variance there); endpoint kinds sample the
half-open interval including the benign end.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .sde import SdeSpec, bridge_params_arrays, transition_params_arrays
from .transport import Dataset, DeltaStart


class LossKind(enum.Enum):
    SCORE_REVERSAL = "score_reversal"
    SCORE_BRIDGE = "score_bridge"
    ENDPOINT_BRIDGE = "endpoint_bridge"
    ENDPOINT_REVERSAL = "endpoint_reversal"

    @property
    def is_score(self):
        return self in (LossKind.SCORE_REVERSAL, LossKind.SCORE_BRIDGE)

    @property
    def is_bridge(self):
        return self in (LossKind.SCORE_BRIDGE, LossKind.ENDPOINT_BRIDGE)


@dataclass
class Batch:
    """Times, states at those times, regression targets, per-row loss weights."""

    kind: LossKind
    times: np.ndarray  # (B,)
    inputs: np.ndarray  # (B, D)
    targets: np.ndarray  # (B, D)
    reg_weights: np.ndarray  # (B,)


def _gamma_noise(sde, rng, size):
    return sde.gamma.sqrt_sample(rng, size)


def regularizer_fd(kind: LossKind, sde: SdeSpec, times):
    """Closed-form inverse expected squared score norm at the given times.

    For a Gaussian with covariance v Gamma sampled from itself,
    E ||grad log p||^2 = trace(Gamma^-1) / v, so the weight is v / trace(Gamma^-1)
    with v = v(0, r) for the reversal kind and v_br(0, t, tau) for the bridge kind.
    """
    times = np.asarray(times, dtype=float)
    tr_inv = sde.gamma.trace_inverse()
    if kind == LossKind.SCORE_REVERSAL:
        _, v = transition_params_arrays(sde, np.zeros_like(times), times)
        return v / tr_inv
    if kind == LossKind.SCORE_BRIDGE:
        _, _, v_br = bridge_params_arrays(sde, times)
        return v_br / tr_inv
    raise DomainError("regularizer applies to score kinds only")


def sample_batch(kind: LossKind, sde: SdeSpec, source, size: int, rng, t_eps: float) -> Batch:
    """Draw one mini-batch per the kind's sampling recipe.

    ``source`` is a coupling for bridge kinds (``score_bridge`` requires a
    fixed-start coupling) and a :class:`Dataset` for reversal kinds.
    """
    if size < 1:
        raise DomainError("size must be >= 1")
    if not (0.0 <= t_eps < sde.tau / 10.0):
        raise DomainError("t_eps must lie in [0, tau/10)")
    if kind.is_score and t_eps == 0.0:
        raise DomainError(
            f"{kind.value} needs t_eps > 0: the regularized target variance "
            "diverges at the singular end of the interval"
        )
    # times drawn exactly 0 would degenerate the bridge scalars
    floor = sde.degenerate_dt

    if kind.is_bridge:
        coupling = source
        x0, x_tau = coupling.sample_pairs(rng, size)
        if kind == LossKind.SCORE_BRIDGE and not isinstance(coupling, DeltaStart):
            raise DomainError("score_bridge is defined for a fixed-start coupling")
        span = sde.tau - t_eps if kind == LossKind.SCORE_BRIDGE else sde.tau
        times = np.maximum(rng.uniform(0.0, span, size=size), floor)
        a_under, a_over, v_br = bridge_params_arrays(sde, times)
        mean = a_under[:, None] * x0 + a_over[:, None] * x_tau
        inputs = mean + np.sqrt(v_br)[:, None] * _gamma_noise(sde, rng, size)
        if kind == LossKind.ENDPOINT_BRIDGE:
            return Batch(kind, times, inputs, x_tau, np.ones(size))
        targets = sde.gamma.solve(mean - inputs) / v_br[:, None]
        return Batch(kind, times, inputs, targets, regularizer_fd(kind, sde, times))

    dataset: Dataset = source
    idx = rng.integers(0, dataset.n, size=size)
    y0 = dataset.samples[idx]
    if kind == LossKind.SCORE_REVERSAL:
        times = t_eps + rng.uniform(0.0, sde.tau - t_eps, size=size)
    else:
        times = np.maximum(rng.uniform(0.0, sde.tau, size=size), floor)
    a, v = transition_params_arrays(sde, np.zeros_like(times), times)
    inputs = a[:, None] * y0 + np.sqrt(v)[:, None] * _gamma_noise(sde, rng, size)
    if kind == LossKind.ENDPOINT_REVERSAL:
        return Batch(kind, times, inputs, y0, np.ones(size))
    targets = sde.gamma.solve(a[:, None] * y0 - inputs) / v[:, None]
    return Batch(kind, times, inputs, targets, regularizer_fd(kind, sde, times))


def loss_value(batch: Batch, net):
    out = net.predict(batch.inputs, batch.times)
    resid = out - batch.targets
    return float(np.mean(batch.reg_weights * np.sum(resid * resid, axis=1)))


def loss_and_gradient(kind: LossKind, batch: Batch, net):
    """Mean weighted squared error over the batch plus parameter gradients."""
    out, cache = net.forward(batch.inputs, batch.times)
    if out.shape[1] != batch.targets.shape[1]:
        raise DomainError(
            f"regressor output dim {out.shape[1]} != target dim {batch.targets.shape[1]}"
        )
    resid = out - batch.targets
    w = batch.reg_weights
    loss = float(np.mean(w * np.sum(resid * resid, axis=1)))
    dout = (2.0 / batch.inputs.shape[0]) * w[:, None] * resid
    grads = net.backward(cache, dout)
    return loss, grads
