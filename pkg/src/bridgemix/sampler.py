"""Explicit Euler integration of adjusted SDEs and terminal-law statistics.

The Euler(T) scheme evaluates the drift at the left endpoint of each step and
adds sqrt(beta * dt) Gamma^(1/2) noise; the final drift evaluation happens at
t = tau (T-1)/T, so the v -> 0 singularity at tau is never touched. The last
recorded denoised expectation is returned alongside the terminal state as the
noise-free alternative output.

Reproducibility: path i of a run seeded with s draws all of its randomness
from ``SeedSequence((s, i))``, so results are independent of chunking and of
how chunks are scheduled across threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, NumericalAbort
from .sde import SdeSpec, transition_params
from .transport import Dataset, IdentityCoupling

# per-chunk scalar budget for pre-drawn noise blocks
_CHUNK_SCALARS = 1 << 23


@dataclass
class Trajectory:
    """One discretized path with optional per-step weight / denoised tracks."""

    times: np.ndarray  # (T+1,)
    states: np.ndarray  # (T+1, D)
    weights: Optional[np.ndarray] = None  # (T, N)
    denoised: Optional[np.ndarray] = None  # (T, D)
    seed: Optional[int] = None


@dataclass
class PathBundle:
    """Vectorized results over many paths."""

    initial: np.ndarray  # (P, D)
    terminal: np.ndarray  # (P, D)
    terminal_denoised: Optional[np.ndarray] = None  # (P, D)
    states: Optional[np.ndarray] = None  # (P, T+1, D)
    weights: Optional[np.ndarray] = None  # (P, T, N)
    denoised: Optional[np.ndarray] = None  # (P, T, D)


@dataclass
class TransitionMatrixEstimate:
    """Atom-to-atom frequency estimate from start/terminal states."""

    counts: np.ndarray  # (K, K)
    frequencies: np.ndarray  # (K, K), row-normalized
    n_unassigned: int
    tolerance: float


def _euler_chunk(
    field,
    states0,
    steps,
    draw,
    record_weights=False,
    record_denoised=False,
    keep_states=False,
    zero_noise=False,
):
    """Advance a (P, D) state block through T Euler steps.

    ``draw(s)`` returns the (P, D) standard normals of step s.
    """
    sde: SdeSpec = field.sde
    dt = sde.tau / steps
    x = np.array(states0, dtype=float)
    n_paths, dim = x.shape
    states = np.empty((n_paths, steps + 1, dim)) if keep_states else None
    weights = None
    denoised = np.empty((n_paths, steps, dim)) if record_denoised else None
    last_denoised = None
    if keep_states:
        states[:, 0] = x
    sqrt_dt = np.sqrt(dt)
    for s in range(1, steps + 1):
        t = (s - 1) * dt
        ev = field.evaluate(x, t)
        if record_weights and ev.weights is not None:
            if weights is None:
                weights = np.empty((n_paths, steps, ev.weights.shape[-1]))
            weights[:, s - 1] = ev.weights
        if record_denoised and ev.denoised is not None:
            denoised[:, s - 1] = ev.denoised
        if ev.denoised is not None:
            last_denoised = ev.denoised
        if zero_noise:
            x = x + ev.drift * dt
        else:
            rate = float(sde.rate(field.noise_time(t)))
            noise = sde.gamma.sqrt_apply(draw(s - 1))
            x = x + ev.drift * dt + np.sqrt(rate) * sqrt_dt * noise
        if not np.all(np.isfinite(x)):
            raise NumericalAbort(f"non-finite state at step {s}", step=s)
        if keep_states:
            states[:, s] = x
    if record_denoised and last_denoised is None:
        denoised = None
    return x, last_denoised, states, weights, denoised


def euler_sample(
    field,
    init,
    steps: int,
    rng,
    record_weights=False,
    record_denoised=False,
    zero_noise=False,
    seed=None,
) -> Trajectory:
    """Integrate a single path. ``init`` is a state vector or a callable rng -> vector."""
    if steps < 1:
        raise DomainError("steps must be >= 1")
    sde = field.sde
    x0 = init(rng) if callable(init) else np.asarray(init, dtype=float)
    x0 = np.atleast_2d(x0)
    draw = lambda s: rng.standard_normal(x0.shape)
    terminal, _, states, weights, denoised = _euler_chunk(
        field,
        x0,
        steps,
        draw,
        record_weights=record_weights,
        record_denoised=record_denoised,
        keep_states=True,
        zero_noise=zero_noise,
    )
    times = np.linspace(0.0, sde.tau, steps + 1)
    return Trajectory(
        times=times,
        states=states[0],
        weights=None if weights is None else weights[0],
        denoised=None if denoised is None else denoised[0],
        seed=seed,
    )


def _chunk_ranges(n_paths, steps, dim):
    chunk = max(1, min(n_paths, _CHUNK_SCALARS // max(1, steps * dim)))
    return [(lo, min(lo + chunk, n_paths)) for lo in range(0, n_paths, chunk)]


def run_paths(
    field,
    coupling_or_init,
    steps: int,
    n_paths: int,
    seed: int,
    record_weights=False,
    record_denoised=False,
    keep_states=False,
    threads: int = 1,
) -> PathBundle:
    """Integrate many paths with per-path deterministic seeding.

    ``coupling_or_init`` is either a coupling exposing ``initial_states(rng, n)``
    or a fixed (D,) start vector used for every path.
    """
    if steps < 1 or n_paths < 1:
        raise DomainError("steps and n_paths must be >= 1")
    sde = field.sde
    dim = sde.dim

    fixed_init = None
    if isinstance(coupling_or_init, np.ndarray) or (
        not hasattr(coupling_or_init, "initial_states")
    ):
        fixed_init = np.asarray(coupling_or_init, dtype=float).reshape(-1)

    def run_chunk(bounds):
        lo, hi = bounds
        size = hi - lo
        rngs = [np.random.default_rng(np.random.SeedSequence((seed, i))) for i in range(lo, hi)]
        if fixed_init is not None:
            x0 = np.broadcast_to(fixed_init, (size, dim)).copy()
        else:
            x0 = np.stack(
                [coupling_or_init.initial_states(r, 1)[0] for r in rngs], axis=0
            )
        noise = np.stack([r.standard_normal((steps, dim)) for r in rngs], axis=0)
        draw = lambda s: noise[:, s, :]
        return _euler_chunk(
            field,
            x0,
            steps,
            draw,
            record_weights=record_weights,
            record_denoised=record_denoised,
            keep_states=keep_states,
        ), x0

    bounds = _chunk_ranges(n_paths, steps, dim)
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, bounds))
    else:
        results = [run_chunk(b) for b in bounds]

    initial = np.concatenate([x0 for _, x0 in results], axis=0)
    terminal = np.concatenate([r[0] for r, _ in results], axis=0)
    t_den = [r[1] for r, _ in results]
    bundle = PathBundle(
        initial=initial,
        terminal=terminal,
        terminal_denoised=None
        if any(d is None for d in t_den)
        else np.concatenate(t_den, axis=0),
    )
    if keep_states:
        bundle.states = np.concatenate([r[2] for r, _ in results], axis=0)
    if record_weights and all(r[3] is not None for r, _ in results):
        bundle.weights = np.concatenate([r[3] for r, _ in results], axis=0)
    if record_denoised and all(r[4] is not None for r, _ in results):
        bundle.denoised = np.concatenate([r[4] for r, _ in results], axis=0)
    return bundle


def run_bridge_realization(
    sde: SdeSpec,
    coupling,
    steps: int,
    n_paths: int,
    seed: int,
    keep_states=False,
    threads: int = 1,
    start_override=None,
) -> PathBundle:
    """Realize the coupled-bridge transport: draw (X_0, X_tau) from the coupling,
    then Euler-integrate each path's *pinned* bridge drift

        f(x, t) + beta_t (x_tau / a(t,tau) - x) a(t,tau)^2 / v(t,tau).

    This reproduces the coupling exactly as the start/end joint (each path is
    conditioned on its own endpoint), unlike the posterior-drift Markov field,
    which shares the marginals but mixes overlapping components.
    ``start_override`` replaces every drawn start with a fixed vector (the
    endpoint is still drawn from the coupling's conditional given that start
    for product couplings; for the identity coupling it pins both ends).
    """
    if steps < 1 or n_paths < 1:
        raise DomainError("steps and n_paths must be >= 1")
    dim = sde.dim
    dt = sde.tau / steps
    sqrt_dt = np.sqrt(dt)

    def run_chunk(bounds):
        lo, hi = bounds
        size = hi - lo
        rngs = [np.random.default_rng(np.random.SeedSequence((seed, i))) for i in range(lo, hi)]
        pairs = [coupling.sample_pairs(r, 1) for r in rngs]
        x0 = np.concatenate([p[0] for p in pairs], axis=0)
        ends = np.concatenate([p[1] for p in pairs], axis=0)
        if start_override is not None:
            x0 = np.broadcast_to(np.asarray(start_override, float), (size, dim)).copy()
            if isinstance(coupling, IdentityCoupling):
                ends = x0.copy()
        noise = np.stack([r.standard_normal((steps, dim)) for r in rngs], axis=0)
        x = x0.copy()
        states = np.empty((size, steps + 1, dim)) if keep_states else None
        if keep_states:
            states[:, 0] = x
        for s in range(1, steps + 1):
            t = (s - 1) * dt
            p = transition_params(sde, t, sde.tau)
            rate = float(sde.rate(t))
            drift = sde.drift(x, t) + rate * (ends / p.a - x) * (p.a**2 / p.v)
            x = x + drift * dt + np.sqrt(rate) * sqrt_dt * sde.gamma.sqrt_apply(noise[:, s - 1])
            if not np.all(np.isfinite(x)):
                raise NumericalAbort(f"non-finite state at step {s}", step=s)
            if keep_states:
                states[:, s] = x
        return x0, x, states

    bounds = _chunk_ranges(n_paths, steps, dim)
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, bounds))
    else:
        results = [run_chunk(b) for b in bounds]
    bundle = PathBundle(
        initial=np.concatenate([r[0] for r in results], axis=0),
        terminal=np.concatenate([r[1] for r in results], axis=0),
    )
    if keep_states:
        bundle.states = np.concatenate([r[2] for r in results], axis=0)
    return bundle


def estimate_transition_matrix(
    initial, terminal, atoms, tolerance: float = 0.5
) -> TransitionMatrixEstimate:
    """Row-stochastic atom-to-atom frequencies; states farther than ``tolerance``
    from every atom are counted as unassigned and excluded."""
    initial = np.atleast_2d(np.asarray(initial, dtype=float))
    terminal = np.atleast_2d(np.asarray(terminal, dtype=float))
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    k = atoms.shape[0]

    def assign(states):
        d = np.linalg.norm(states[:, None, :] - atoms[None, :, :], axis=-1)
        idx = d.argmin(axis=1)
        idx[d.min(axis=1) > tolerance] = -1
        return idx

    i0 = assign(initial)
    i1 = assign(terminal)
    ok = (i0 >= 0) & (i1 >= 0)
    counts = np.zeros((k, k))
    np.add.at(counts, (i0[ok], i1[ok]), 1.0)
    rowsum = counts.sum(axis=1, keepdims=True)
    freqs = np.divide(counts, rowsum, out=np.zeros_like(counts), where=rowsum > 0)
    return TransitionMatrixEstimate(
        counts=counts,
        frequencies=freqs,
        n_unassigned=int(np.count_nonzero(~ok)),
        tolerance=tolerance,
    )


def noising_forward_states(sde: SdeSpec, y0, steps: int, rng):
    """Exact simulation of the noising process on a uniform r-grid.

    One Gaussian transition draw per grid step (no Euler error). y0 is (P, D);
    returns (times (T+1,), states (T+1, P, D)).
    """
    if steps < 1:
        raise DomainError("steps must be >= 1")
    y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    n_paths, dim = y0.shape
    times = np.linspace(0.0, sde.tau, steps + 1)
    states = np.empty((steps + 1, n_paths, dim))
    states[0] = y0
    for s in range(steps):
        p = transition_params(sde, times[s], times[s + 1])
        lead = n_paths
        noise = sde.gamma.sqrt_sample(rng, lead)
        states[s + 1] = p.a * states[s] + np.sqrt(p.v) * noise
    return times, states


def simulate_noising_forward(sde: SdeSpec, dataset: Dataset, steps: int, rng) -> Trajectory:
    """Exactly simulate one noising path started at a uniformly drawn atom."""
    idx = rng.integers(0, dataset.n)
    times, states = noising_forward_states(sde, dataset.samples[idx], steps, rng)
    return Trajectory(times=times, states=states[:, 0, :])
