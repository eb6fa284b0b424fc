import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from robustnpe import autodiff as ad
from robustnpe.losses import (
    KernelSpec,
    NnpeConfig,
    UdaConfig,
    domain_loss,
    imq_gram,
    imq_kernel,
    mmd2_biased,
    mmd2_biased_batched,
    nnpe_augment,
    npe_dann_loss,
    npe_loss,
    npe_mmd_loss,
    spike_slab_noise,
)
from robustnpe.networks import (
    ClassifierConfig,
    CouplingFlow,
    CouplingFlowConfig,
    DeepSetSummary,
    DomainClassifier,
    SummaryNetworkConfig,
)
from robustnpe.simulators import ScenarioSpec, SimulationBatch, draw_batch
from oracles import brute_mmd2, central_diff, rel_error

SCALES = (0.5, 1.0, 2.0, 4.0, 8.0)


def nets(seed=0, zero_flow=False, zero_clf=False):
    rng = np.random.default_rng(seed)
    summary = DeepSetSummary(SummaryNetworkConfig(), rng)
    flow = CouplingFlow(CouplingFlowConfig(), rng, zero_init=zero_flow)
    clf = DomainClassifier(ClassifierConfig(zero_output=zero_clf), rng)
    return summary, flow, clf


# ---------------------------------------------------------------- kernel / MMD


def test_kernel_closed_forms():
    assert imq_kernel([1.0, 2.0], [1.0, 2.0]) == 5.0
    assert imq_kernel([0.0], [1.0], KernelSpec((1.0,))) == 0.5
    with pytest.raises(ValueError):
        imq_kernel([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        KernelSpec(())
    with pytest.raises(ValueError):
        KernelSpec((1.0, -2.0))


def test_gram_is_symmetric_psd():
    X = np.random.default_rng(0).normal(size=(10, 4))
    K = imq_gram(X, X)
    np.testing.assert_array_equal(K, K.T)
    assert np.linalg.eigvalsh(K).min() >= -1e-10


def test_mmd_identical_sets_give_exact_zero():
    A = np.random.default_rng(1).normal(size=(37, 4))
    assert mmd2_biased(A, A) == 0.0
    assert mmd2_biased(A, A[::-1]) == 0.0


def test_mmd_singletons_hand_expansion():
    d, s = 1.7, 2.0
    k = s * s / (s * s + d * d)
    val = mmd2_biased([[0.0, 0.0]], [[d, 0.0]], KernelSpec((s,)))
    assert val == pytest.approx(2 * (1 - k), rel=1e-15)


@pytest.mark.parametrize("seed", range(20))
def test_mmd_matches_brute_force_bit_for_bit(seed):
    rng = np.random.default_rng(seed)
    n, m, d = rng.integers(1, 25, size=3)
    A = rng.normal(size=(n, d))
    B = rng.normal(loc=rng.uniform(-1, 1), size=(m, d))
    assert mmd2_biased(A, B) == brute_mmd2(A, B, SCALES)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 4), st.integers(0, 2 ** 31))
def test_mmd_symmetric_order_free_non_negative(n, m, d, seed):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(n, d)), rng.normal(size=(m, d))
    v = mmd2_biased(A, B)
    assert v >= 0
    assert v == mmd2_biased(B, A)
    assert v == mmd2_biased(A[rng.permutation(n)], B[rng.permutation(m)])


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 2), elements=st.integers(-8, 8).map(lambda v: v / 4)),
       arrays(np.float64, (3, 2), elements=st.integers(-8, 8).map(lambda v: v / 4)))
def test_mmd_zero_exactly_for_identical_multisets(A, B):
    # values on a grid of 0.25 keep distinct multisets well separated
    same = sorted(map(tuple, A)) == sorted(map(tuple, B))
    v = mmd2_biased(A, B)
    assert v == 0.0 if same else v > 1e-6


def test_mmd_separates_shifted_gaussians():
    rng = np.random.default_rng(2)
    wins = 0
    for _ in range(100):
        A, A2 = rng.normal(size=(500, 1)), rng.normal(size=(500, 1))
        B = rng.normal(3.0, 1.0, size=(500, 1))
        Ab = np.stack([A, A])
        wins += int(np.all(mmd2_biased_batched(Ab, np.stack([B, A2]))[0] >
                           mmd2_biased_batched(Ab, np.stack([B, A2]))[1]))
    assert wins == 100
    # the exact estimator agrees with the batched one on a single trial
    assert mmd2_biased(A, B) == pytest.approx(mmd2_biased_batched(A[None], B[None])[0], rel=1e-10)


def test_mmd_empty_or_mismatched_sets():
    with pytest.raises(ValueError):
        mmd2_biased(np.zeros((0, 2)), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        mmd2_biased(np.zeros((2, 2)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        mmd2_biased(ad.Tensor(np.zeros((0, 2))), np.zeros((3, 2)))


def test_tensor_mmd_value_and_gradient():
    rng = np.random.default_rng(3)
    A0, B = rng.normal(size=(6, 3)), rng.normal(size=(5, 3))
    A = ad.parameter(A0, "A")
    val = mmd2_biased(A, B)
    assert val.item() == pytest.approx(mmd2_biased(A0, B), rel=1e-12)
    (num,) = central_diff(lambda a: mmd2_biased(a, B), [A0])
    assert rel_error(ad.grad(val, {"A": A})["A"], num) < 1e-4


# ---------------------------------------------------------------- objectives


def test_npe_loss_identity_flow_and_duplication():
    summary, flow, _ = nets(zero_flow=True)
    b = SimulationBatch(np.zeros((1, 2)), np.zeros((1, 5, 2)))
    assert npe_loss(b, summary, flow).item() == pytest.approx(math.log(2 * math.pi), abs=1e-15)
    summary, flow, _ = nets(1)
    b = draw_batch(ScenarioSpec(), 16, np.random.default_rng(4))
    doubled = SimulationBatch(np.vstack([b.theta, b.theta]), np.vstack([b.x, b.x]))
    assert npe_loss(doubled, summary, flow).item() == pytest.approx(npe_loss(b, summary, flow).item(), rel=1e-13)
    with pytest.raises(ValueError):
        npe_loss(b.subset(slice(0, 0)), summary, flow)


def test_npe_loss_decreases_during_training():
    summary, flow, _ = nets(5, zero_flow=True)
    params = {**summary.parameters(), **flow.parameters()}
    opt = ad.OptimizerState(5e-4, 200)
    rng = np.random.default_rng(5)
    trace = []
    for _ in range(200):
        loss = npe_loss(draw_batch(ScenarioSpec(), 32, rng), summary, flow)
        grads, _ = ad.clip_grad_norm(ad.grad(loss, params), 10.0)
        ad.adam_step(opt, grads, params)
        trace.append(loss.item())
    ma = np.convolve(trace, np.ones(20) / 20, mode="valid")
    assert ma[-1] < ma[0] - 0.5
    quarters = np.asarray(trace).reshape(4, 50).mean(axis=1)
    assert np.all(np.diff(quarters) < 0)


def test_mmd_loss_reductions_and_decomposition():
    summary, flow, _ = nets(6)
    rng = np.random.default_rng(6)
    b = draw_batch(ScenarioSpec(), 32, rng)
    obs = draw_batch(ScenarioSpec(variant="prior_location", mu0=(3, 3)), 32, rng).x
    base = npe_loss(b, summary, flow).item()
    assert npe_mmd_loss(b, obs, summary, flow, UdaConfig("mmd", 0.0)).item() == base
    same = npe_mmd_loss(b, b.x, summary, flow, UdaConfig("mmd", 1.0)).item()
    assert 0.0 <= same - base < 1e-12

    # separate the observed summaries by an offset of 10 in every coordinate
    class Shifted:
        def __call__(self, x):
            s = summary(x)
            return s + 10.0 if x is obs else s

    total = npe_mmd_loss(b, obs, Shifted(), flow, UdaConfig("mmd", 1.0)).item()
    s_sim, s_obs = summary(b.x).data, summary(obs).data + 10.0
    assert total - base == pytest.approx(mmd2_biased(s_sim, s_obs), rel=1e-9)
    with pytest.raises(ValueError):
        npe_mmd_loss(b, obs, summary, flow, UdaConfig("dann", 1.0))
    with pytest.raises(ValueError):
        npe_mmd_loss(b, obs[:0], summary, flow, UdaConfig("mmd", 1.0))


def test_uda_config_validation():
    with pytest.raises(ValueError):
        UdaConfig("mmd", -1.0)
    with pytest.raises(ValueError):
        UdaConfig("gan", 1.0)
    with pytest.raises(ValueError):
        UdaConfig("dann", 1.0, grl_weight=0.0)


def test_domain_loss_untrained_classifier_is_two_log_two():
    summary, _, clf = nets(7, zero_clf=True)
    x = np.random.default_rng(7).normal(size=(8, 20, 2))
    s = summary(x)
    assert domain_loss(s, s, clf).item() == pytest.approx(2 * math.log(2), abs=1e-15)


@pytest.mark.parametrize("weight", [1.0, 2.0, 0.5])
def test_reversal_contract_on_summary_parameters(weight):
    summary, _, clf = nets(8)
    rng = np.random.default_rng(8)
    xs, xo = rng.normal(size=(8, 20, 2)), rng.normal(1.0, 1.0, size=(8, 20, 2))
    p = summary.parameters()
    rev = ad.grad(domain_loss(summary(xs), summary(xo), clf, weight), p)
    plain = ad.grad(domain_loss(summary(xs), summary(xo), clf, None), p)
    for k in p:
        # powers of two scale exactly, so the reversal identity holds bit for bit
        np.testing.assert_array_equal(rev[k], -weight * plain[k])
    crev = ad.grad(domain_loss(summary(xs), summary(xo), clf, weight), clf.parameters())
    cplain = ad.grad(domain_loss(summary(xs), summary(xo), clf, None), clf.parameters())
    for k in crev:
        np.testing.assert_array_equal(crev[k], cplain[k])


def test_dann_lambda_zero_equals_npe():
    summary, flow, clf = nets(9)
    rng = np.random.default_rng(9)
    b = draw_batch(ScenarioSpec(), 16, rng)
    obs = rng.normal(size=(16, 100, 2))
    npe = npe_loss(b, summary, flow)
    dann = npe_dann_loss(b, obs, summary, flow, clf, UdaConfig("dann", 0.0))
    assert dann.item() == npe.item()
    params = {**summary.parameters(), **flow.parameters()}
    g_npe, g_dann = ad.grad(npe, params), ad.grad(dann, params)
    for k in params:
        np.testing.assert_array_equal(g_npe[k], g_dann[k])


def test_dann_players_move_in_opposite_directions():
    summary, _, clf = nets(10)
    rng = np.random.default_rng(10)
    xs, xo = rng.normal(size=(16, 30, 2)), rng.normal(0.7, 1.5, size=(16, 30, 2))
    phi, psi = summary.parameters(), clf.parameters()

    def l_d():
        with ad.no_grad():
            return domain_loss(summary(xs), summary(xo), clf).item()

    def step(which, lr=1e-3):
        g = ad.grad(domain_loss(summary(xs), summary(xo), clf, 1.0), {**phi, **psi})
        saved = {k: p.data.copy() for k, p in {**phi, **psi}.items()}
        for k, p in which.items():
            p.data = p.data - lr * g[k]
        after = l_d()
        for k, p in {**phi, **psi}.items():
            p.data = saved[k]
        return after

    before = l_d()
    assert step(psi) < before
    assert step(phi) > before


# ---------------------------------------------------------------- NNPE noise


def test_nnpe_zero_scales_leave_batch_unchanged():
    b = draw_batch(ScenarioSpec(), 4, np.random.default_rng(11))
    out = nnpe_augment(b, NnpeConfig(0.0, 0.0, 0.5), np.random.default_rng(12))
    np.testing.assert_array_equal(out.x, b.x)
    np.testing.assert_array_equal(out.theta, b.theta)


def test_nnpe_spike_fraction_and_spike_std():
    noise, spike = spike_slab_noise((100_000,), NnpeConfig(), np.random.default_rng(13))
    assert 0.49 <= spike.mean() <= 0.51
    noise, spike = spike_slab_noise((100_000,), NnpeConfig(p=1.0), np.random.default_rng(14))
    assert spike.all()
    assert 0.0095 <= noise.std() <= 0.0105


def test_nnpe_slab_is_heavy_tailed():
    noise, spike = spike_slab_noise((100_000,), NnpeConfig(p=0.0), np.random.default_rng(15))
    # Cauchy quartiles are +-tau
    q1, q3 = np.quantile(noise, [0.25, 0.75])
    assert q1 == pytest.approx(-0.25, rel=0.03) and q3 == pytest.approx(0.25, rel=0.03)
    with pytest.raises(ValueError):
        NnpeConfig(p=1.5)


def test_per_dimension_nll_divides_by_parameter_count():
    summary, flow, _ = nets(16)
    b = draw_batch(ScenarioSpec(), 8, np.random.default_rng(16))
    total = npe_loss(b, summary, flow).item()
    assert npe_loss(b, summary, flow, per_dim=True).item() == pytest.approx(total / 2, rel=1e-15)
