import numpy as np
import pytest

from bridgemix import (
    ExponentialKernel,
    RbfKernel,
    WhiteNoiseKernel,
    embed_plane_operator,
    empirical_variogram,
    fit_variogram_wls,
)
from bridgemix.covariance import variogram_value
from bridgemix.errors import DomainError
from bridgemix.variogram import EmpiricalVariogram


def test_constant_image_flat_zero():
    img = np.full((8, 8), 3.2)
    (emp,) = empirical_variogram(img)
    assert np.all(emp.gamma == 0.0)


def test_pair_counts_bruteforce_small():
    rng = np.random.default_rng(0)
    img = rng.standard_normal((5, 4))
    (emp,) = empirical_variogram(img, n_bins=6, max_lag=0.6)
    # brute force over all unordered pixel pairs
    height, width = img.shape
    edges = np.linspace(0, 0.6, 7)
    sums = np.zeros(6)
    counts = np.zeros(6)
    pix = [(i, j) for i in range(height) for j in range(width)]
    for a in range(len(pix)):
        for b in range(a + 1, len(pix)):
            (i1, j1), (i2, j2) = pix[a], pix[b]
            h = np.hypot((i1 - i2) / height, (j1 - j2) / width)
            if h == 0 or h > 0.6:
                continue
            k = min(int(np.searchsorted(edges, h, side="left")) - 1, 5)
            k = max(k, 0)
            sums[k] += (img[i1, j1] - img[i2, j2]) ** 2
            counts[k] += 1
    keep = counts >= 1
    assert np.array_equal(emp.counts, counts[keep])
    assert np.allclose(emp.gamma, sums[keep] / (2 * counts[keep]), atol=1e-12)


def test_white_noise_semivariogram_is_flat(rng):
    # 100 synthetic iid images: mean estimate per lag ~ sigma^2
    sigma_sq = 0.8
    per_bin = []
    for _ in range(100):
        img = rng.normal(0, np.sqrt(sigma_sq), (16, 16))
        (emp,) = empirical_variogram(img, n_bins=8, max_lag=0.5)
        per_bin.append(emp.gamma)
    per_bin = np.array(per_bin)
    mean = per_bin.mean(axis=0)
    se = per_bin.std(axis=0) / np.sqrt(per_bin.shape[0])
    assert np.all(np.abs(mean - sigma_sq) < 4 * se)


def test_gp_sample_variogram_tracks_model(rng):
    kernel = ExponentialKernel(1.0, 0.2)
    op = embed_plane_operator(kernel, 32, 32)
    fields = op.sqrt_sample(rng, 60).reshape(60, 32, 32)
    per_bin = []
    for f in fields:
        (emp,) = empirical_variogram(f, n_bins=10, max_lag=0.5)
        per_bin.append(emp.gamma)
    per_bin = np.array(per_bin)
    mean = per_bin.mean(axis=0)
    se = per_bin.std(axis=0) / np.sqrt(per_bin.shape[0])
    (emp,) = empirical_variogram(fields[0], n_bins=10, max_lag=0.5)
    target = variogram_value(kernel, emp.lags)
    assert np.all(np.abs(mean - target) < 5 * se + 0.02)


def test_multichannel_returns_one_per_channel(rng):
    img = rng.standard_normal((8, 8, 3))
    emps = empirical_variogram(img)
    assert len(emps) == 3


# ---------------------------------------------------------------------------
# WLS fitting
# ---------------------------------------------------------------------------


def test_noiseless_self_consistency_recovers_parameters():
    lags = np.linspace(0.03, 0.45, 12)
    kernel = ExponentialKernel(1.0, 0.2)
    emp = EmpiricalVariogram(
        lags=lags,
        gamma=variogram_value(kernel, lags),
        counts=np.full(12, 500.0),
    )
    fit = fit_variogram_wls(emp, "exponential")
    assert fit.kernel.variance == pytest.approx(1.0, abs=1e-4)
    assert fit.kernel.length_scale == pytest.approx(0.2, abs=1e-4)
    assert not fit.theta_pinned


def test_fit_beats_every_grid_seed():
    lags = np.linspace(0.03, 0.45, 10)
    rng = np.random.default_rng(5)
    emp = EmpiricalVariogram(
        lags=lags,
        gamma=variogram_value(ExponentialKernel(0.8, 0.15), lags)
        * rng.uniform(0.9, 1.1, 10),
        counts=np.full(10, 200.0),
    )
    fit = fit_variogram_wls(emp, "exponential")
    from bridgemix.variogram import _wls_objective

    sill = emp.gamma.max()
    for sv in sill * np.array([0.5, 1.0, 1.5]):
        for st in np.geomspace(emp.lags.max() / 100, 10 * emp.lags.max(), 12):
            assert fit.objective <= _wls_objective(
                emp, ExponentialKernel, sv, st
            ) + 1e-12


def test_flat_variogram_pins_theta():
    lags = np.linspace(0.05, 0.45, 10)
    emp = EmpiricalVariogram(
        lags=lags, gamma=np.full(10, 0.7), counts=np.full(10, 100.0)
    )
    fit = fit_variogram_wls(emp, "exponential")
    assert fit.theta_pinned


def test_median_recovery_on_synthetic_corpus(rng):
    kernel = ExponentialKernel(1.0, 0.205)
    op = embed_plane_operator(kernel, 32, 32)
    fields = op.sqrt_sample(rng, 40).reshape(40, 32, 32)
    thetas = []
    exp_beats_rbf = 0
    for f in fields:
        (emp,) = empirical_variogram(f, n_bins=16, max_lag=0.5)
        fit_exp = fit_variogram_wls(emp, "exponential")
        fit_rbf = fit_variogram_wls(emp, "rbf")
        thetas.append(fit_exp.kernel.length_scale)
        exp_beats_rbf += fit_exp.objective < fit_rbf.objective
    med_err = abs(np.median(thetas) - 0.205) / 0.205
    assert med_err < 0.15
    assert exp_beats_rbf >= 0.95 * len(fields)


def test_needs_three_bins():
    emp = EmpiricalVariogram(
        lags=np.array([0.1, 0.2]), gamma=np.array([0.5, 0.6]),
        counts=np.array([10.0, 10.0]),
    )
    with pytest.raises(DomainError):
        fit_variogram_wls(emp, "exponential")
