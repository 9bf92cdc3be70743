"""Covariance operators and stationary kernels.

The diffusion class uses a fixed spatial covariance Gamma through four
operations: apply (Gamma x), solve (Gamma^-1 x), sqrt_apply (Gamma^1/2 x),
and Gaussian sampling, plus log-determinant and trace of the inverse for
the loss regularizers. Backings:

* ``IdentityCovariance`` — Gamma = I.
* ``DenseCovariance``    — explicit SPD matrix, Cholesky based.
* ``CirculantTorusCovariance`` — block-circulant covariance of a stationary
  isotropic Gaussian process on an H x W torus, diagonalized by the 2D FFT;
  channels are independent copies of the same process. Everything runs in
  O(D log D).
* ``PlaneEmbeddedCovariance`` — exact covariance on the plane patch [0,1]^2
  obtained by embedding the block-Toeplitz target into a larger circulant;
  sampling-only (FFT apply/solve are exact on the torus, not on the window).

Flat vectors use channel-last row-major layout: index (i, j, c) of an
H x W x C field maps to (i * W + j) * C + c, matching the on-disk formats.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.linalg
from scipy.fft import next_fast_len

from .errors import (
    DomainError,
    NotPositiveDefiniteError,
    SingularOperatorError,
    UnsupportedOperationError,
)

# Relative spectrum tolerance: eigenvalues in (-tol, 0) are rounding noise
# and get clipped; anything below -tol means the construction truly failed.
SPECTRUM_RTOL = 1e-10


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WhiteNoiseKernel:
    """k(h) = variance * 1[h == 0]; flat semivariogram."""

    variance: float = 1.0

    def __post_init__(self):
        if self.variance <= 0:
            raise DomainError("variance must be > 0")


@dataclass(frozen=True)
class ExponentialKernel:
    """k(h) = variance * exp(-h / length_scale); rough (non-differentiable) paths."""

    variance: float
    length_scale: float

    def __post_init__(self):
        if self.variance <= 0 or self.length_scale <= 0:
            raise DomainError("variance and length_scale must be > 0")


@dataclass(frozen=True)
class RbfKernel:
    """k(h) = variance * exp(-h^2 / (2 length_scale^2)); smooth paths."""

    variance: float
    length_scale: float

    def __post_init__(self):
        if self.variance <= 0 or self.length_scale <= 0:
            raise DomainError("variance and length_scale must be > 0")


Kernel = Union[WhiteNoiseKernel, ExponentialKernel, RbfKernel]


def kernel_value(kernel: Kernel, h):
    """Covariance k(h) at (array of) isotropic distances h >= 0."""
    h = np.asarray(h, dtype=float)
    if isinstance(kernel, WhiteNoiseKernel):
        return np.where(h == 0.0, kernel.variance, 0.0)
    if isinstance(kernel, ExponentialKernel):
        return kernel.variance * np.exp(-h / kernel.length_scale)
    if isinstance(kernel, RbfKernel):
        return kernel.variance * np.exp(-0.5 * (h / kernel.length_scale) ** 2)
    raise TypeError(f"unknown kernel {kernel!r}")


def variogram_value(kernel: Kernel, h):
    """Semivariogram gamma(h) = k(0) - k(h) for h > 0."""
    h = np.asarray(h, dtype=float)
    if isinstance(kernel, WhiteNoiseKernel):
        return np.where(h > 0, kernel.variance, 0.0)
    if isinstance(kernel, ExponentialKernel):
        return kernel.variance * -np.expm1(-h / kernel.length_scale)
    if isinstance(kernel, RbfKernel):
        return kernel.variance * -np.expm1(-0.5 * (h / kernel.length_scale) ** 2)
    raise TypeError(f"unknown kernel {kernel!r}")


# ---------------------------------------------------------------------------
# Operator backings
# ---------------------------------------------------------------------------


class IdentityCovariance:
    """Gamma = I_D."""

    def __init__(self, dim: int):
        if dim < 1:
            raise DomainError("dim must be >= 1")
        self.dim = int(dim)

    def apply(self, x):
        return np.array(x, dtype=float, copy=True)

    def solve(self, x):
        return np.array(x, dtype=float, copy=True)

    def sqrt_apply(self, x):
        return np.array(x, dtype=float, copy=True)

    def sqrt_sample(self, rng, n=None):
        shape = (self.dim,) if n is None else (int(n), self.dim)
        return rng.standard_normal(shape)

    def logdet(self):
        return 0.0

    def trace_inverse(self):
        return float(self.dim)

    def as_dense(self):
        return np.eye(self.dim)

    def __repr__(self):
        return f"IdentityCovariance(dim={self.dim})"


class DenseCovariance:
    """Explicit symmetric positive-definite matrix, factored once at construction."""

    def __init__(self, matrix):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DomainError("matrix must be square")
        if not np.allclose(matrix, matrix.T, rtol=1e-10, atol=1e-12):
            raise NotPositiveDefiniteError("matrix is not symmetric")
        try:
            self._chol = scipy.linalg.cholesky(matrix, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(f"Cholesky failed: {exc}") from exc
        self.matrix = matrix
        self.dim = matrix.shape[0]
        self._cho_factor = (self._chol, True)

    def apply(self, x):
        return np.asarray(x, dtype=float) @ self.matrix

    def solve(self, x):
        x = np.asarray(x, dtype=float)
        flat = np.atleast_2d(x.reshape(-1, self.dim))
        out = scipy.linalg.cho_solve(self._cho_factor, flat.T).T
        return out.reshape(x.shape)

    def sqrt_apply(self, x):
        # uses the Cholesky factor L (Gamma = L L^T) as the square root
        return np.asarray(x, dtype=float) @ self._chol.T

    def sqrt_sample(self, rng, n=None):
        shape = (self.dim,) if n is None else (int(n), self.dim)
        return rng.standard_normal(shape) @ self._chol.T

    def logdet(self):
        return float(2.0 * np.sum(np.log(np.diag(self._chol))))

    def trace_inverse(self):
        inv = scipy.linalg.cho_solve(self._cho_factor, np.eye(self.dim))
        return float(np.trace(inv))

    def as_dense(self):
        return self.matrix.copy()

    def __repr__(self):
        return f"DenseCovariance(dim={self.dim})"


def _validate_spectrum(spectrum, allow_truncation, context):
    """Clip rounding noise, or truncate/raise on genuinely negative eigenvalues.

    Returns (clean spectrum, n_clipped, truncated_flag).
    """
    spectrum = np.asarray(spectrum, dtype=float)
    tol = SPECTRUM_RTOL * float(spectrum.max())
    low = float(spectrum.min())
    truncated = False
    if low < -tol:
        if not allow_truncation:
            raise NotPositiveDefiniteError(
                f"{context}: spectrum entry {low:.3e} below -{tol:.3e}; "
                "enable truncation to clip"
            )
        truncated = True
    n_clipped = int(np.count_nonzero(spectrum < 0.0))
    if n_clipped and not truncated:
        warnings.warn(
            f"{context}: clipped {n_clipped} spectrum entries in (-{tol:.3e}, 0) to zero",
            RuntimeWarning,
            stacklevel=3,
        )
    return np.maximum(spectrum, 0.0), n_clipped, truncated


class CirculantTorusCovariance:
    """Stationary GP covariance on an H x W torus, one iid copy per channel.

    The operator is diagonalized by the 2D DFT: with eigenvalues lam (the DFT
    of the base row), apply multiplies by lam in Fourier space, solve divides,
    sqrt_apply multiplies by sqrt(lam), and logdet is channels * sum(log lam).
    Sampling uses the complex-pair trick: one inverse FFT of sqrt(lam)-scaled
    complex standard noise yields two independent real samples; the spare is
    cached, which makes a *sampling* handle non-shareable across threads.
    """

    def __init__(self, spectrum, channels=1, allow_truncation=False):
        spectrum = np.asarray(spectrum, dtype=float)
        if spectrum.ndim != 2:
            raise DomainError("spectrum must be 2-dimensional (H x W)")
        if channels < 1:
            raise DomainError("channels must be >= 1")
        spectrum, self.n_clipped, self.truncated = _validate_spectrum(
            spectrum, allow_truncation, "torus spectrum"
        )
        self.spectrum = spectrum
        self.channels = int(channels)
        self.height, self.width = spectrum.shape
        self.dim = self.channels * self.height * self.width
        self._sqrt_spectrum = np.sqrt(spectrum)
        self._has_zero = bool(np.any(spectrum == 0.0))
        self._spare = None  # cached second CEM sample, flat (k, H*W)

    # -- layout helpers ----------------------------------------------------

    def _to_grid(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DomainError(f"expected last axis {self.dim}, got {x.shape[-1]}")
        return x.reshape(x.shape[:-1] + (self.height, self.width, self.channels))

    def _from_grid(self, g, shape):
        return g.reshape(shape)

    def _fourier_op(self, x, factor):
        shape = np.asarray(x).shape
        g = self._to_grid(x)
        spec = np.fft.fft2(g, axes=(-3, -2))
        spec *= factor[..., None]
        out = np.fft.ifft2(spec, axes=(-3, -2)).real
        return self._from_grid(out, shape)

    # -- operator interface ------------------------------------------------

    def apply(self, x):
        return self._fourier_op(x, self.spectrum)

    def solve(self, x):
        if self._has_zero:
            raise SingularOperatorError("solve needs a strictly positive spectrum")
        return self._fourier_op(x, 1.0 / self.spectrum)

    def sqrt_apply(self, x):
        return self._fourier_op(x, self._sqrt_spectrum)

    def sqrt_sample(self, rng, n=None):
        k = self.channels if n is None else int(n) * self.channels
        fields = self._sample_grids(rng, k)
        # channel-last reassembly: fields is (k, H, W), grouped per sample
        fields = fields.reshape(-1, self.channels, self.height, self.width)
        fields = np.moveaxis(fields, 1, -1)  # (n, H, W, C)
        flat = fields.reshape(fields.shape[0], self.dim)
        return flat[0] if n is None else flat

    def _sample_grids(self, rng, k):
        """k independent N(0, Gamma) fields of shape (k, H, W)."""
        out = np.empty((k, self.height, self.width))
        filled = 0
        if self._spare is not None:
            out[0] = self._spare
            self._spare = None
            filled = 1
        need = k - filled
        if need > 0:
            pairs = (need + 1) // 2
            noise = rng.standard_normal((pairs, self.height, self.width, 2))
            z = self._sqrt_spectrum * (noise[..., 0] + 1j * noise[..., 1])
            # orthonormal inverse FFT makes Re and Im independent N(0, Gamma)
            y = np.fft.ifft2(z, axes=(-2, -1), norm="ortho")
            both = np.concatenate([y.real, y.imag], axis=0)
            out[filled : filled + need] = both[:need]
            if 2 * pairs > need:
                self._spare = both[need]
        return out

    def logdet(self):
        if self._has_zero:
            raise SingularOperatorError("logdet needs a strictly positive spectrum")
        return float(self.channels * np.sum(np.log(self.spectrum)))

    def trace_inverse(self):
        if self._has_zero:
            raise SingularOperatorError("trace_inverse needs a strictly positive spectrum")
        return float(self.channels * np.sum(1.0 / self.spectrum))

    def as_dense(self):
        if self.dim > 4096:
            raise UnsupportedOperationError("as_dense limited to dim <= 4096")
        eye = np.eye(self.dim)
        return np.stack([self.apply(eye[i]) for i in range(self.dim)], axis=1)

    def __repr__(self):
        return (
            f"CirculantTorusCovariance({self.height}x{self.width}, "
            f"channels={self.channels})"
        )


class PlaneEmbeddedCovariance:
    """Window restriction of an enlarged circulant: exact plane covariance, sampling only.

    apply/solve/logdet are only exact on the torus, so they raise here; the
    operator exists to draw N(0, Gamma_plane) fields at O(D log D) cost.
    ``truncation_error`` records ||Gamma_truncated - Gamma_target||_F over the
    window (0 when the embedding succeeded without clipping).
    """

    def __init__(self, spectrum, height, width, channels, truncation_error, n_doublings):
        self.height = int(height)
        self.width = int(width)
        self.channels = int(channels)
        self.dim = self.channels * self.height * self.width
        self.embedded = CirculantTorusCovariance(
            spectrum, channels=1, allow_truncation=True
        )
        self.truncation_error = float(truncation_error)
        self.n_doublings = int(n_doublings)

    def sqrt_sample(self, rng, n=None):
        k = self.channels if n is None else int(n) * self.channels
        grids = self.embedded._sample_grids(rng, k)
        window = grids[:, : self.height, : self.width]
        window = window.reshape(-1, self.channels, self.height, self.width)
        window = np.moveaxis(window, 1, -1)
        flat = window.reshape(window.shape[0], self.dim)
        return flat[0] if n is None else flat

    def _unsupported(self, name):
        raise UnsupportedOperationError(
            f"{name} is not available on a plane-embedded operator "
            "(FFT apply/solve are exact only on the torus); use a torus operator"
        )

    def apply(self, x):
        self._unsupported("apply")

    def solve(self, x):
        self._unsupported("solve")

    def sqrt_apply(self, x):
        self._unsupported("sqrt_apply")

    def logdet(self):
        self._unsupported("logdet")

    def trace_inverse(self):
        self._unsupported("trace_inverse")

    def __repr__(self):
        return (
            f"PlaneEmbeddedCovariance({self.height}x{self.width}, "
            f"channels={self.channels}, embedded="
            f"{self.embedded.height}x{self.embedded.width})"
        )


CovarianceOperator = Union[
    IdentityCovariance,
    DenseCovariance,
    CirculantTorusCovariance,
    PlaneEmbeddedCovariance,
]


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------


def _torus_base_row(kernel, n_rows, n_cols, spacing_i, spacing_j):
    """Base row from the kernel at wrapped (min) distances; used for embeddings."""
    di = np.arange(n_rows)
    dj = np.arange(n_cols)
    ti = np.minimum(di, n_rows - di) * spacing_i
    tj = np.minimum(dj, n_cols - dj) * spacing_j
    dist = np.hypot(ti[:, None], tj[None, :])
    return kernel_value(kernel, dist)


def _kernel_reach(kernel):
    """Distance beyond which |k(h)| < 1e-14 * k(0)."""
    if isinstance(kernel, WhiteNoiseKernel):
        return 0.0
    log_eps = 14.0 * np.log(10.0)
    if isinstance(kernel, ExponentialKernel):
        return kernel.length_scale * log_eps
    return kernel.length_scale * np.sqrt(2.0 * log_eps)


def _periodized_base_row(kernel, n_rows, n_cols):
    """Base row of the plane kernel wrap-summed onto the unit torus.

    Periodization (summing k over all integer shifts of the displacement)
    keeps the row positive definite for every valid plane kernel; evaluating
    the raw kernel at min-wrapped distance instead is indefinite on fine grids.
    """
    bi = np.arange(n_rows) / n_rows
    bj = np.arange(n_cols) / n_cols
    wraps = min(int(np.ceil(_kernel_reach(kernel))) + 1, 64)
    row = np.zeros((n_rows, n_cols))
    for m in range(-wraps, wraps + 1):
        d_i2 = (bi + m) ** 2
        for n in range(-wraps, wraps + 1):
            dist = np.sqrt(d_i2[:, None] + ((bj + n) ** 2)[None, :])
            row += kernel_value(kernel, dist)
    return row


def build_torus_operator(kernel, height, width, channels=1, allow_truncation=False):
    """Block-circulant covariance of a stationary isotropic GP on the H x W torus.

    Pixel (i, j) sits at ((i + 1/2)/H, (j + 1/2)/W) in [0,1]^2; the torus
    covariance is the periodized plane kernel and the spectrum is the 2D DFT
    of its base row (real and positive whenever the plane kernel is valid).
    """
    if height < 2 or width < 2:
        raise DomainError("height and width must be >= 2")
    row = _periodized_base_row(kernel, height, width)
    spectrum = np.fft.fft2(row)
    if np.abs(spectrum.imag).max() > 1e-8 * max(np.abs(spectrum.real).max(), 1.0):
        raise NotPositiveDefiniteError("base row DFT is not real; kernel not symmetric")
    return CirculantTorusCovariance(
        spectrum.real, channels=channels, allow_truncation=allow_truncation
    )


def _window_frobenius_error(base_diff, height, width):
    """||C' - C||_F over the H x W window for a circulant perturbation.

    base_diff is the base-row difference on the enlarged torus; the window
    Frobenius norm sums base_diff[(di, dj) wrapped]^2 over all signed window
    offsets weighted by the number of pixel pairs at that offset.
    """
    n_rows, n_cols = base_diff.shape
    di = np.arange(-(height - 1), height)
    dj = np.arange(-(width - 1), width)
    counts = np.outer(height - np.abs(di), width - np.abs(dj)).astype(float)
    vals = base_diff[np.ix_(di % n_rows, dj % n_cols)]
    return float(np.sqrt(np.sum(counts * vals**2)))


def embed_plane_operator(
    kernel, height, width, channels=1, max_doublings=4, allow_truncation=False
):
    """Exact N(0, Gamma) sampler for a stationary GP on the plane patch [0,1]^2.

    The H x W block-Toeplitz target is embedded in a circulant on an enlarged
    torus (at least (2H-2) x (2W-2), padded up to an FFT-friendly size, kept
    at the original grid spacing). If the embedding spectrum has genuinely
    negative entries the torus is doubled up to ``max_doublings`` times; if it
    still fails, ``allow_truncation`` clips the spectrum and records the
    Frobenius-norm covariance error over the window, otherwise this raises.
    """
    if height < 2 or width < 2:
        raise DomainError("height and width must be >= 2")
    base_h, base_w = 2 * height - 2, 2 * width - 2
    spectrum = row = None
    n_doublings = 0
    for k in range(max_doublings + 1):
        emb_h = next_fast_len(base_h * 2**k)
        emb_w = next_fast_len(base_w * 2**k)
        row = _torus_base_row(kernel, emb_h, emb_w, 1.0 / height, 1.0 / width)
        spectrum = np.fft.fft2(row).real
        tol = SPECTRUM_RTOL * float(spectrum.max())
        n_doublings = k
        if spectrum.min() >= -tol:
            break
    tol = SPECTRUM_RTOL * float(spectrum.max())
    truncation_error = 0.0
    if spectrum.min() < -tol:
        if not allow_truncation:
            raise NotPositiveDefiniteError(
                f"plane embedding spectrum still has entries down to "
                f"{spectrum.min():.3e} after {max_doublings} doublings"
            )
        clipped = np.maximum(spectrum, 0.0)
        base_diff = np.fft.ifft2(clipped - spectrum).real
        per_channel = _window_frobenius_error(base_diff, height, width)
        truncation_error = float(np.sqrt(channels) * per_channel)
        spectrum = clipped
    return PlaneEmbeddedCovariance(
        spectrum, height, width, channels, truncation_error, n_doublings
    )
