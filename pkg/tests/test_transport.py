import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bridgemix import (
    ConstantBeta,
    Dataset,
    DeltaStart,
    DenseCovariance,
    EmpiricalStart,
    ExactBridgeMixtureField,
    ExactReversalField,
    GaussianStart,
    IdentityCoupling,
    SdeSpec,
    bridge_logdensity,
    bridge_mixture_weights,
    bridge_params,
    centered_start,
    recover_expectation_from_score,
    reversal_weights,
    score_wrt_initial,
    transition_logdensity,
    transition_params,
)
from bridgemix.datasets import three_atoms
from bridgemix.errors import DomainError

from conftest import random_spd
from oracles import finite_diff_grad, scalar_normal_pdf


@pytest.fixture
def toy(bm_unit):
    data = three_atoms()
    return bm_unit, data


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------


def test_single_atom_weight_is_one(toy):
    sde, _ = toy
    data = Dataset(np.array([[1.3]]))
    w = bridge_mixture_weights(sde, DeltaStart(np.zeros(1), data), np.array([0.2]), 0.4)
    assert w.shape == (1,)
    assert w[0] == 1.0


def test_initial_weights_uniform(toy):
    sde, data = toy
    coupling = DeltaStart(np.zeros(1), data)
    w = bridge_mixture_weights(sde, coupling, np.zeros(1), 0.0)
    assert np.allclose(w, 1.0 / 3.0, atol=1e-15)


def test_toy_weights_match_scalar_normal_oracle(toy):
    # evidence for atom n at (x=0, t=1/2) is N(0; x_n/2, 1/4), delta start at 0
    sde, data = toy
    coupling = DeltaStart(np.zeros(1), data)
    got = bridge_mixture_weights(sde, coupling, np.zeros(1), 0.5)
    ev = np.array(
        [scalar_normal_pdf(0.0, 0.5 * a, 0.25) for a in data.samples[:, 0]]
    )
    assert np.allclose(got, ev / ev.sum(), atol=1e-12)


def test_identity_coupling_weights_match_direct_oracle(toy):
    sde, data = toy
    coupling = IdentityCoupling(data)
    x, t = np.array([0.7]), 0.3
    got = bridge_mixture_weights(sde, coupling, x, t)
    ev = np.array(
        [
            math.exp(bridge_logdensity(sde, x, np.full(1, a), np.full(1, a), t))
            for a in data.samples[:, 0]
        ]
    )
    assert np.allclose(got, ev / ev.sum(), atol=1e-12)


def test_empirical_start_weights_average_bridge_evidence(toy):
    sde, data = toy
    starts = Dataset(np.array([[-1.0], [1.0]]))
    coupling = EmpiricalStart(starts, data)
    x, t = np.array([0.4]), 0.6
    got = bridge_mixture_weights(sde, coupling, x, t)
    ev = np.zeros(3)
    for n, atom in enumerate(data.samples[:, 0]):
        for s in starts.samples[:, 0]:
            ev[n] += math.exp(
                bridge_logdensity(sde, x, np.full(1, s), np.full(1, atom), t)
            )
    assert np.allclose(got, ev / ev.sum(), atol=1e-12)


def test_gaussian_start_weights_match_gauss_hermite_quadrature(toy):
    # 17-point Gauss-Hermite marginalization over the Gaussian start (D = 1)
    sde, data = toy
    sigma0_sq = 0.7
    coupling = GaussianStart(data, sde.gamma, sigma0_sq=sigma0_sq)
    x, t = np.array([0.3]), 0.45
    got = bridge_mixture_weights(sde, coupling, x, t)
    nodes, weights = np.polynomial.hermite.hermgauss(17)
    bp = bridge_params(sde, t)
    ev = np.zeros(3)
    for n, atom in enumerate(data.samples[:, 0]):
        for u, w in zip(nodes, weights):
            x0 = math.sqrt(2.0 * sigma0_sq) * u
            mean = bp.a_under * x0 + bp.a_over * atom
            ev[n] += w * scalar_normal_pdf(x[0], mean, bp.v_br)
    ev /= math.sqrt(math.pi)
    assert np.allclose(got, ev / ev.sum(), atol=1e-8)


def test_reversal_weights_against_direct_density(toy, rng):
    sde, data = toy
    y, r = np.array([0.9]), 0.5
    got = reversal_weights(sde, data, y, r)
    logq = np.array(
        [
            transition_logdensity(sde, np.full(1, a), y, 0.0, r)
            for a in data.samples[:, 0]
        ]
    )
    ev = np.exp(logq - logq.max())
    assert np.allclose(got, ev / ev.sum(), atol=1e-12)


def test_reversal_weights_concentrate_at_small_r(toy):
    sde, data = toy
    w = reversal_weights(sde, data, np.array([2.0]), 1e-15)
    assert np.argmax(w) == 2 and w[2] == 1.0


@given(
    x=st.floats(-4.0, 4.0),
    t=st.floats(0.01, 0.99),
    atoms=st.lists(st.floats(-3.0, 3.0), min_size=1, max_size=6),
)
@settings(max_examples=80, deadline=None)
def test_weight_simplex_property(x, t, atoms, ):
    sde = SdeSpec(kind="bm", beta=ConstantBeta(1.0), tau=1.0, dim=1)
    data = Dataset(np.array(atoms)[:, None])
    for coupling in (DeltaStart(np.zeros(1), data), IdentityCoupling(data)):
        w = bridge_mixture_weights(sde, coupling, np.array([x]), t)
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) < 1e-12


# ---------------------------------------------------------------------------
# Drifts
# ---------------------------------------------------------------------------


def test_single_atom_bridge_drift_is_brownian_bridge(toy):
    sde, _ = toy
    data = Dataset(np.array([[1.5]]))
    field = ExactBridgeMixtureField(sde, DeltaStart(np.zeros(1), data))
    x, t = np.array([0.2]), 0.4
    ev = field.evaluate(x, t)
    assert ev.drift[0] == pytest.approx((1.5 - 0.2) / (1.0 - 0.4), rel=1e-12)


def test_bridge_drift_zero_at_scaled_denoised():
    sde = SdeSpec(kind="ou", alpha=0.5, beta=ConstantBeta(1.0), tau=1.0, dim=1)
    data = Dataset(np.array([[0.8]]))
    field = ExactBridgeMixtureField(sde, DeltaStart(np.zeros(1), data))
    t = 0.35
    p = transition_params(sde, t, 1.0)
    x = np.array([0.8 / p.a])
    ev = field.evaluate(x, t)
    # adjustment vanishes; remaining drift is the base drift alpha * beta * x
    assert ev.drift[0] == pytest.approx(sde.alpha * 1.0 * x[0], abs=1e-12)


def test_bridge_drift_matches_score_form_sum(toy):
    sde, data = toy
    field = ExactBridgeMixtureField(sde, DeltaStart(np.zeros(1), data))
    x, t = np.array([0.0]), 0.5
    ev = field.evaluate(x, t)
    # score form: f + beta * Gamma * sum_n w_n grad_x log p(atom_n | x at tau)
    acc = np.zeros(1)
    for n, atom in enumerate(data.samples):
        acc += ev.weights[n] * score_wrt_initial(sde, x, atom, t, sde.tau)
    expected = sde.drift(x, t) + 1.0 * acc  # beta = 1, Gamma = I
    assert np.max(np.abs(ev.drift - expected)) < 1e-10


def test_bridge_drift_score_form_dense_gamma(rng):
    mat = random_spd(rng, 3, scale=0.4)
    sde = SdeSpec(kind="ou", alpha=-0.5, beta=ConstantBeta(1.2), tau=1.0, dim=3,
                  gamma=DenseCovariance(mat))
    data = Dataset(rng.standard_normal((4, 3)))
    field = ExactBridgeMixtureField(sde, DeltaStart(rng.standard_normal(3), data))
    x, t = rng.standard_normal(3), 0.55
    ev = field.evaluate(x, t)
    rate = float(sde.rate(t))
    acc = np.zeros(3)
    for n, atom in enumerate(data.samples):
        acc += ev.weights[n] * score_wrt_initial(sde, x, atom, t, sde.tau)
    expected = sde.drift(x, t) + rate * sde.gamma.apply(acc)
    rel = np.max(np.abs(ev.drift - expected)) / max(1.0, np.max(np.abs(expected)))
    assert rel < 1e-9


def test_reversal_drift_trivial_single_atom(toy):
    sde, _ = toy
    data = Dataset(np.array([[1.5]]))
    field = ExactReversalField(sde, data)
    x, t = np.array([0.3]), 0.6  # r = 0.4
    ev = field.evaluate(x, t)
    assert ev.drift[0] == pytest.approx((1.5 - 0.3) / 0.4, rel=1e-12)


def test_reversal_drift_matches_marginal_score_fd(rng):
    # -f + beta_r * Gamma grad log q_r via finite differences of log sum_n q(y|x_n)
    mat = random_spd(rng, 2, scale=0.5)
    sde = SdeSpec(kind="ou", alpha=-0.5, beta=ConstantBeta(1.5), tau=1.0, dim=2,
                  gamma=DenseCovariance(mat))
    data = Dataset(rng.standard_normal((3, 2)))
    field = ExactReversalField(sde, data)
    x, t = rng.standard_normal(2), 0.45
    r = sde.tau - t
    ev = field.evaluate(x, t)

    def log_marginal(y):
        vals = [
            transition_logdensity(sde, atom, y, 0.0, r) for atom in data.samples
        ]
        m = max(vals)
        return m + math.log(sum(math.exp(v - m) for v in vals))

    score = finite_diff_grad(log_marginal, x)
    rate = float(sde.rate(r))
    expected = -sde.drift(x, r) + rate * sde.gamma.apply(score)
    assert np.max(np.abs(ev.drift - expected)) < 1e-6


def test_drift_rejected_at_terminal_time(toy):
    sde, data = toy
    bridge = ExactBridgeMixtureField(sde, DeltaStart(np.zeros(1), data))
    reversal = ExactReversalField(sde, data)
    with pytest.raises(DomainError):
        bridge.evaluate(np.zeros(1), 1.0)
    with pytest.raises(DomainError):
        reversal.evaluate(np.zeros(1), 1.0)


# ---------------------------------------------------------------------------
# Identity: adjustment = grad log mixture - grad log transition
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("dim", [1, 3])
def test_adjustment_identity_finite_differences(dim, rng):
    mat = random_spd(rng, dim, scale=0.5)
    sde = SdeSpec(kind="ou", alpha=-0.5, beta=ConstantBeta(1.0), tau=1.0, dim=dim,
                  gamma=DenseCovariance(mat))
    data = Dataset(rng.standard_normal((3, dim)))
    x0 = rng.standard_normal(dim)
    coupling = DeltaStart(x0, data)
    worst = 0.0
    for _ in range(50):
        x = rng.standard_normal(dim)
        t = rng.uniform(0.05, 0.95)
        w = bridge_mixture_weights(sde, coupling, x, t)
        adjustment = np.zeros(dim)
        for n, atom in enumerate(data.samples):
            adjustment += w[n] * score_wrt_initial(sde, x, atom, t, sde.tau)

        def log_mixture(z):
            vals = [
                bridge_logdensity(sde, z, x0, atom, t) for atom in data.samples
            ]
            m = max(vals)
            return m + math.log(sum(math.exp(v - m) for v in vals) / len(vals))

        fd = finite_diff_grad(log_mixture, x) - finite_diff_grad(
            lambda z: transition_logdensity(sde, x0, z, 0.0, t), x
        )
        worst = max(worst, float(np.max(np.abs(adjustment - fd))))
    assert worst < 1e-5


# ---------------------------------------------------------------------------
# Couplings, denoising round trip, centered start
# ---------------------------------------------------------------------------


def test_coupling_samplers(toy, rng):
    sde, data = toy
    x0, x_tau = IdentityCoupling(data).sample_pairs(rng, 1000)
    assert np.array_equal(x0, x_tau)
    delta = DeltaStart(np.full(1, 0.25), data)
    x0, x_tau = delta.sample_pairs(rng, 1000)
    assert np.all(x0 == 0.25)
    # terminal marginal uniform over rows
    _, ends = delta.sample_pairs(rng, 30_000)
    freqs = np.array([(ends[:, 0] == a).mean() for a in data.samples[:, 0]])
    assert np.all(np.abs(freqs - 1 / 3) < 4 * math.sqrt((1 / 3) * (2 / 3) / 30_000))


def test_gaussian_start_covariance(rng):
    mat = random_spd(rng, 2, scale=0.4)
    gamma = DenseCovariance(mat)
    data = Dataset(rng.standard_normal((3, 2)))
    coupling = GaussianStart(data, gamma, sigma0_sq=0.5)
    x0, _ = coupling.sample_pairs(rng, 100_000)
    emp = x0.T @ x0 / x0.shape[0]
    target = 0.5 * mat
    se = np.sqrt((np.outer(np.diag(target), np.diag(target)) + target**2) / x0.shape[0])
    assert np.all(np.abs(emp - target) < 4 * se)


def test_recover_expectation_round_trip(rng):
    mat = random_spd(rng, 2, scale=0.5)
    sde = SdeSpec(kind="ou", alpha=-0.5, beta=ConstantBeta(1.0), tau=1.0, dim=2,
                  gamma=DenseCovariance(mat))
    data = Dataset(rng.standard_normal((4, 2)))
    field = ExactReversalField(sde, data)
    x, t = rng.standard_normal(2), 0.35
    r = sde.tau - t
    ev = field.evaluate(x, t)
    # reconstruct the marginal score from the closed-form weighted sum
    p = transition_params(sde, 0.0, r)
    score = sde.gamma.solve(p.a * ev.denoised - x) / p.v
    back = recover_expectation_from_score(sde, score, x, r)
    assert np.max(np.abs(back - ev.denoised)) < 1e-10


def test_recover_expectation_edge_cases(toy):
    sde, data = toy
    # zero score -> x / a(0, r) (a = 1 for bm)
    out = recover_expectation_from_score(sde, np.zeros(1), np.full(1, 0.7), 0.4)
    assert out[0] == pytest.approx(0.7)
    # single atom: exact score returns that atom anywhere
    single = Dataset(np.array([[1.1]]))
    field = ExactReversalField(sde, single)
    for x, t in [(np.array([-0.4]), 0.2), (np.array([2.0]), 0.7)]:
        ev = field.evaluate(x, t)
        r = sde.tau - t
        p = transition_params(sde, 0.0, r)
        score = sde.gamma.solve(p.a * ev.denoised - x) / p.v
        assert recover_expectation_from_score(sde, score, x, r)[0] == pytest.approx(1.1, abs=1e-10)


def test_centered_start_values(toy):
    sde, data = toy
    assert centered_start(data, sde)[0] == pytest.approx(0.0)
    ou = SdeSpec(kind="ou", alpha=0.5, beta=ConstantBeta(1.0), tau=1.0, dim=1)
    shifted = Dataset(np.array([[0.0], [1.0], [2.0]]))
    assert centered_start(shifted, ou)[0] == pytest.approx(1.0 * math.exp(-0.5), rel=1e-12)
    single = Dataset(np.array([[2.0]]))
    assert centered_start(single, ou)[0] == pytest.approx(2.0 * math.exp(-0.5), rel=1e-12)


def test_centered_start_kills_initial_adjustment(toy):
    sde, data = toy
    x0 = centered_start(data, sde)
    field = ExactBridgeMixtureField(sde, DeltaStart(x0, data))
    ev = field.evaluate(x0, 0.0)
    assert np.max(np.abs(ev.drift - sde.drift(x0, 0.0))) < 1e-10
