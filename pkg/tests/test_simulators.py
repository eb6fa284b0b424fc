import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustnpe.simulators import (
    IdxFormatError,
    ImageSourceExhausted,
    ScenarioSpec,
    analytic_posterior,
    analytic_posterior_batch,
    blackout_rows,
    camera_forward,
    downscale_antialias,
    draw_batch,
    encode_idx,
    gaussian_blur,
    load_idx,
    load_scenario,
    make_image_source,
    parse_idx,
    salt_pepper,
    sample_prior,
    simulate,
    simulate_dataset,
    write_idx,
)
from oracles import gaussian_posterior_quadrature


def rng(seed=0):
    return np.random.default_rng(seed)


# ---------------------------------------------------------------- scenarios


def test_scenario_validation_and_labels():
    with pytest.raises(ValueError):
        ScenarioSpec(variant="image_blur")
    with pytest.raises(ValueError):
        ScenarioSpec(family="camera", variant="contamination")
    with pytest.raises(ValueError):
        ScenarioSpec(variant="contamination", eps=1.5)
    with pytest.raises(ValueError):
        ScenarioSpec(variant="prior_scale", tau0=0.0)
    with pytest.raises(ValueError):
        ScenarioSpec(family="camera", variant="row_blackout", rows=17)
    spec = ScenarioSpec(variant="prior_location", mu0=[3, 3])
    assert spec.mu0 == (3.0, 3.0) and spec.variant_param() == "mu0=3,3"
    assert spec.assumed() == ScenarioSpec()
    assert ScenarioSpec.from_dict(spec.to_dict()) == spec


def test_scenario_manifest_file(tmp_path):
    p = tmp_path / "s.json"
    p.write_text('{"family": "gaussian2d", "variant": "contamination", '
                 '"params": {"eps": 0.2, "c": 1.5}, "seed": 3, "n_datasets": 10, "M": 50}')
    spec, extra = load_scenario(p)
    assert spec == ScenarioSpec(variant="contamination", eps=0.2, c=1.5, M=50)
    assert extra == {"seed": 3, "n_datasets": 10}


# ---------------------------------------------------------------- Gaussian model


def test_prior_moments():
    th = sample_prior(ScenarioSpec(), 100_000, rng(1))
    assert np.all(np.abs(th.mean(axis=0)) <= 0.02)
    assert np.all((th.var(axis=0) >= 0.97) & (th.var(axis=0) <= 1.03))
    th = sample_prior(ScenarioSpec(variant="prior_scale", tau0=4.0), 100_000, rng(2))
    np.testing.assert_allclose(th.var(axis=0), 4.0, rtol=0.05)
    th = sample_prior(ScenarioSpec(variant="prior_location", mu0=(3, 3)), 100_000, rng(3))
    np.testing.assert_allclose(th.mean(axis=0), 3.0, atol=0.02)
    with pytest.raises(ValueError):
        sample_prior(ScenarioSpec(), 0, rng())


def test_likelihood_moments():
    x = simulate_dataset(np.zeros(2), ScenarioSpec(M=10_000), rng(4))
    assert x.shape == (10_000, 2)
    assert np.all(np.abs(x.mean(axis=0)) < 0.03)
    np.testing.assert_allclose(np.cov(x.T), np.eye(2), atol=0.05)
    x = simulate_dataset(np.zeros(2), ScenarioSpec(variant="likelihood_scale", tau=20.0, M=10_000), rng(5))
    np.testing.assert_allclose(x.var(axis=0), 20.0, rtol=0.1)


def test_full_contamination_rows_are_plus_minus_c():
    x = simulate_dataset(np.array([0.7, -0.4]), ScenarioSpec(variant="contamination", eps=1.0, c=1.5), rng(6))
    assert np.all(np.isin(x, (-1.5, 1.5))) and np.all(x[:, 0] == x[:, 1])
    assert np.all(np.abs(x.mean(axis=0)) < 0.4)


def test_contamination_preserves_grand_mean():
    theta = sample_prior(ScenarioSpec(), 10_000, rng(7))
    clean = simulate(theta, ScenarioSpec(), rng(8))
    dirty = simulate(theta, ScenarioSpec(variant="contamination", eps=0.2, c=1.5), rng(8))
    assert np.all(np.abs(dirty.mean(axis=(0, 1)) - clean.mean(axis=(0, 1))) < 0.01)
    frac = np.mean(np.all(np.abs(dirty) == 1.5, axis=2))
    assert frac == pytest.approx(0.2, abs=0.005)


def test_simulators_are_deterministic_given_rng():
    spec = ScenarioSpec(variant="contamination", eps=0.3)
    a, b = draw_batch(spec, 5, rng(9)), draw_batch(spec, 5, rng(9))
    np.testing.assert_array_equal(a.theta, b.theta)
    np.testing.assert_array_equal(a.x, b.x)


# ---------------------------------------------------------------- analytic posterior


def test_analytic_posterior_closed_form():
    post = analytic_posterior(np.zeros((7, 2)))
    np.testing.assert_array_equal(post.mean, 0.0)
    x = np.array([[1.0, -1.0]]) + np.array([[0.5, 0.5], [-0.5, -0.5]]).repeat(50, axis=0)
    post = analytic_posterior(x)
    np.testing.assert_allclose(post.mean, [100 / 101, -100 / 101], rtol=1e-14)
    np.testing.assert_allclose(post.cov, np.eye(2) / 101, rtol=1e-14)
    x = rng(10).normal(0.4, 1.0, size=(10_000, 2))
    post = analytic_posterior(x)
    assert np.max(np.abs(post.mean - x.mean(axis=0))) < 1e-3 and post.cov[0, 0] < 1e-3
    with pytest.raises(ValueError):
        analytic_posterior(np.zeros((0, 2)))


@pytest.mark.parametrize("seed", range(50))
def test_analytic_posterior_matches_quadrature(seed):
    g = rng(100 + seed)
    M = int(g.integers(1, 200))
    x = g.normal(g.normal(size=2), 1.0, size=(M, 2))
    post = analytic_posterior(x)
    mean, cov = gaussian_posterior_quadrature(x)
    np.testing.assert_allclose(post.mean, mean, atol=1e-6, rtol=0)
    np.testing.assert_allclose(post.cov, cov, atol=1e-6, rtol=0)


def test_analytic_posterior_batch_agrees():
    x = rng(11).normal(size=(4, 30, 2))
    means, var = analytic_posterior_batch(x)
    for i in range(4):
        p = analytic_posterior(x[i])
        np.testing.assert_allclose(means[i], p.mean, rtol=1e-14)
        np.testing.assert_allclose(var[i], np.diag(p.cov), rtol=1e-14)


# ---------------------------------------------------------------- camera


def test_camera_forward_preserves_mid_grey():
    out = camera_forward(np.zeros((1000, 256)), 1.4, rng(12))
    assert out.shape == (1000, 256)
    assert -0.02 <= out.mean() <= 0.02
    with pytest.raises(ValueError):
        camera_forward(np.zeros(255), 1.4, rng())
    with pytest.raises(ValueError):
        camera_forward(np.zeros(256), 0.0, rng())


def test_blur_kernel_normalised_and_variance_scales_with_sigma_squared():
    impulse = np.zeros((16, 16))
    impulse[8, 8] = 1.0
    small = gaussian_blur(impulse.ravel(), 1.4).reshape(16, 16)
    assert small.sum() == pytest.approx(1.0, abs=1e-12)
    # the truncation radius (7) stays inside the canvas, so reflection folds no mass
    wide = gaussian_blur(impulse.ravel(), 1.4 * 1.25).reshape(16, 16)
    r = np.arange(16) - 8

    def var(img):
        return float((img.sum(axis=1) * r ** 2).sum() / img.sum())

    assert var(wide) / var(small) == pytest.approx(1.5625, rel=0.02)


def test_salt_pepper_counts():
    img = np.zeros(256)
    np.testing.assert_array_equal(salt_pepper(img, 0.0, rng()), img)
    out = salt_pepper(np.zeros((20, 256)), 0.1, rng(13))
    assert np.all(np.sum(np.abs(out) == 1.0, axis=1) == 26)
    assert np.all(np.isin(salt_pepper(img, 1.0, rng(14)), (-1.0, 1.0)))
    with pytest.raises(ValueError):
        salt_pepper(img, 1.2, rng())


def test_row_blackout_counts():
    img = np.full(256, 0.3)
    np.testing.assert_array_equal(blackout_rows(img, 0, rng()), img)
    out = blackout_rows(img, 2, rng(15))
    assert np.sum(out == -1.0) == 32 and np.mean(out == -1.0) == 0.125
    assert np.all(blackout_rows(img, 16, rng()) == -1.0)
    with pytest.raises(ValueError):
        blackout_rows(img, 17, rng())


def test_contaminated_scenarios_dispatch():
    theta = np.zeros((3, 256))
    sp = simulate(theta, ScenarioSpec(family="camera", variant="salt_pepper"), rng(16))
    assert np.all(np.sum(np.abs(sp) == 1.0, axis=1) >= 26)
    rb = simulate(theta, ScenarioSpec(family="camera", variant="row_blackout"), rng(17))
    assert np.all(np.sum(rb == -1.0, axis=1) >= 32)


# ---------------------------------------------------------------- IDX and preprocessing


def test_idx_round_trip(tmp_path):
    imgs = np.arange(32, dtype=np.uint8).reshape(2, 4, 4)
    buf = encode_idx(imgs)
    assert buf[:4] == b"\x00\x00\x08\x03" and len(buf) == 16 + 32
    p = tmp_path / "imgs.idx"
    write_idx(p, imgs)
    np.testing.assert_array_equal(load_idx(p, expect="images"), imgs)
    labels = np.array([3, 7], dtype=np.uint8)
    np.testing.assert_array_equal(parse_idx(encode_idx(labels), expect="labels"), labels)


def test_idx_errors():
    with pytest.raises(IdxFormatError, match="truncated"):
        parse_idx(b"")
    with pytest.raises(IdxFormatError, match="expected image"):
        parse_idx(encode_idx(np.zeros(3, np.uint8)), expect="images")
    buf = encode_idx(np.zeros((2, 4, 4), np.uint8))
    with pytest.raises(IdxFormatError, match="truncated"):
        parse_idx(buf[:-1])
    with pytest.raises(IdxFormatError):
        parse_idx(buf + b"\x00")
    with pytest.raises(IdxFormatError, match="magic"):
        parse_idx(b"\x12\x34\x08\x03" + buf[4:])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 255))
def test_downscale_preserves_constant_images(v):
    out = downscale_antialias(np.full((28, 28), float(v)))
    np.testing.assert_allclose(out, 2 * v / 255 - 1, atol=1e-12)


def test_downscale_range_and_smoothing():
    img = rng(18).uniform(0, 255, (28, 28))
    out = downscale_antialias(img)
    assert out.shape == (16, 16) and out.min() >= -1 and out.max() <= 1
    checker = (np.indices((28, 28)).sum(axis=0) % 2) * 255.0

    def tv(a):
        a = (a - a.min()) / np.ptp(a) if np.ptp(a) else a
        return np.mean(np.abs(np.diff(a, axis=0))) + np.mean(np.abs(np.diff(a, axis=1)))

    assert tv(downscale_antialias(checker)) < tv(checker)
    with pytest.raises(ValueError):
        downscale_antialias(np.zeros((16, 16)))


def test_image_sources(tmp_path):
    src = make_image_source("mnist", 10, rng(19))
    assert src.surrogate and src.images.shape == (10, 256)
    assert src.images.min() >= -1 and src.images.max() <= 1
    head, tail = src.split(4)
    assert len(head) == 4 and len(tail) == 6
    with pytest.raises(ImageSourceExhausted):
        head.take(5)
    raw = rng(20).integers(0, 256, (5, 28, 28)).astype(np.uint8)
    write_idx(tmp_path / "m.idx", raw)
    idx_src = make_image_source("mnist", 3, rng(21), idx_path=tmp_path / "m.idx")
    assert not idx_src.surrogate and idx_src.images.shape == (3, 256)
    usps = make_image_source("usps", 10, rng(19))
    # the cropped rescale magnifies digits, so fewer pixels stay at the background level
    assert np.mean(usps.images > -0.9) > np.mean(make_image_source("mnist", 10, rng(19)).images > -0.9)
    with pytest.raises(ValueError):
        make_image_source("svhn", 3, rng())
    with pytest.raises(ValueError):
        sample_prior(ScenarioSpec(family="camera"), 3, rng())
