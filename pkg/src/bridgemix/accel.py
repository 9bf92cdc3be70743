"""JIT-compiled hot kernels with pure-numpy fallbacks.

The two inner loops that dominate desk-scale runs are the posterior-weight
softmax over dataset atoms (evaluated once per Euler step per path batch)
and the semivariogram pair accumulation. Both carry a numba ``@njit`` version
and a numpy twin; set ``BRIDGEMIX_NO_NUMBA=1`` to force the numpy path.
Kernels are compiled single-threaded so runs stay bitwise reproducible.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("BRIDGEMIX_NO_NUMBA", "").lower() not in ("", "0", "false")

if not _DISABLED:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False

if not NUMBA_ENABLED:

    def njit(*args, **kwargs):
        def decorator(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return decorator


# ---------------------------------------------------------------------------
# Posterior weights from quadratic evidence
# ---------------------------------------------------------------------------


def softmax_weights_numpy(logw):
    """Row softmax with max-subtraction; logw is (P, N)."""
    m = logw.max(axis=1, keepdims=True)
    w = np.exp(logw - m)
    w /= w.sum(axis=1, keepdims=True)
    return w


def identity_weights_numpy(states, means, two_v):
    """softmax_n( -||x_p - m_n||^2 / (2v) ) for identity Gamma.

    states (P, D), means (N, D); returns (P, N).
    """
    sq = (
        np.sum(states * states, axis=1)[:, None]
        - 2.0 * states @ means.T
        + np.sum(means * means, axis=1)[None, :]
    )
    return softmax_weights_numpy(-sq / two_v)


@njit(cache=True)
def _identity_weights_numba(states, means, two_v):
    n_paths, dim = states.shape
    n_atoms = means.shape[0]
    out = np.empty((n_paths, n_atoms))
    for p in range(n_paths):
        m_best = -np.inf
        for n in range(n_atoms):
            q = 0.0
            for d in range(dim):
                diff = states[p, d] - means[n, d]
                q += diff * diff
            val = -q / two_v
            out[p, n] = val
            if val > m_best:
                m_best = val
        total = 0.0
        for n in range(n_atoms):
            e = np.exp(out[p, n] - m_best)
            out[p, n] = e
            total += e
        for n in range(n_atoms):
            out[p, n] /= total
    return out


# above this dimension the numpy path's BLAS matmul beats the scalar loop
_NUMBA_DIM_CUTOFF = 16


def identity_weights(states, means, two_v):
    """Dispatch to the numba kernel unless disabled by env flag or high-D."""
    states = np.ascontiguousarray(states, dtype=np.float64)
    means = np.ascontiguousarray(means, dtype=np.float64)
    if NUMBA_ENABLED and states.shape[1] <= _NUMBA_DIM_CUTOFF:
        return _identity_weights_numba(states, means, float(two_v))
    return identity_weights_numpy(states, means, float(two_v))


# ---------------------------------------------------------------------------
# Semivariogram accumulation
# ---------------------------------------------------------------------------


def variogram_accumulate_numpy(img, off_i, off_j, bins, n_bins):
    """Accumulate sum((dx)^2) and pair counts per lag bin via array slicing."""
    height, width = img.shape
    sums = np.zeros(n_bins)
    counts = np.zeros(n_bins, dtype=np.int64)
    for k in range(off_i.shape[0]):
        di, dj, b = int(off_i[k]), int(off_j[k]), int(bins[k])
        if dj >= 0:
            d = img[di:, dj:] - img[: height - di, : width - dj]
        else:
            d = img[di:, : width + dj] - img[: height - di, -dj:]
        sums[b] += float(np.sum(d * d))
        counts[b] += d.size
    return sums, counts


@njit(cache=True)
def _variogram_accumulate_numba(img, off_i, off_j, bins, n_bins):
    height, width = img.shape
    sums = np.zeros(n_bins)
    counts = np.zeros(n_bins, dtype=np.int64)
    for k in range(off_i.shape[0]):
        di = off_i[k]
        dj = off_j[k]
        b = bins[k]
        j_lo = -dj if dj < 0 else 0
        j_hi = width - dj if dj >= 0 else width
        for i in range(height - di):
            for j in range(j_lo, j_hi):
                diff = img[i + di, j + dj] - img[i, j]
                sums[b] += diff * diff
        counts[b] += (height - di) * (j_hi - j_lo)
    return sums, counts


def variogram_accumulate(img, off_i, off_j, bins, n_bins):
    img = np.ascontiguousarray(img, dtype=np.float64)
    off_i = np.ascontiguousarray(off_i, dtype=np.int64)
    off_j = np.ascontiguousarray(off_j, dtype=np.int64)
    bins = np.ascontiguousarray(bins, dtype=np.int64)
    if NUMBA_ENABLED:
        return _variogram_accumulate_numba(img, off_i, off_j, bins, int(n_bins))
    return variogram_accumulate_numpy(img, off_i, off_j, bins, int(n_bins))
