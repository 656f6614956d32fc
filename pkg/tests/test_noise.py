import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from activesim.imageio import write_pgm
from activesim.noise import (
    PAPER_K,
    PAPER_MU,
    PAPER_SIGMA,
    PAPER_THETA,
    FrameStack,
    NoiseError,
    NoiseEstimationError,
    NoiseParams,
    apply_noise,
    estimate_noise_params,
    extract_pattern,
    otsu_threshold,
)
from activesim.render import auto_exposure, trace
from activesim.scene import LightSource, SensorRig, Texture, generate_dot_pattern

from conftest import wall_scene
from test_render import _pattern_oracle


def test_reference_defaults():
    p = NoiseParams()
    assert (p.k, p.theta, p.mu_n, p.sigma, p.scale) == (3.98, 0.254, -0.231, 0.83, 1.0)
    assert p.gamma_mean == pytest.approx(1.01092)


def test_params_validation():
    for bad in ({"k": 0}, {"theta": -1}, {"sigma": -0.1}, {"scale": -1}, {"k": math.nan}):
        with pytest.raises(NoiseError):
            NoiseParams(**bad)
    with pytest.raises(NoiseError, match="unknown"):
        NoiseParams.from_dict({"kappa": 1})
    p = NoiseParams(k=2.0, sigma=0.5)
    assert NoiseParams.from_dict(p.to_dict()) == p


def test_scale_zero_is_deterministic_bias():
    img = np.linspace(0, 200, 1000).reshape(20, 50)
    p = NoiseParams(scale=0.0)
    assert np.array_equal(apply_noise(img, p, seed=1), PAPER_K * PAPER_THETA * img)
    assert np.array_equal(apply_noise(img, p, seed=1), apply_noise(img, p, seed=2))


def test_constant_one_mean_unclamped():
    out = apply_noise(np.ones((1000, 1000)), seed=3, clamp=False)
    expected = PAPER_K * PAPER_THETA + PAPER_MU
    assert expected == pytest.approx(0.780, abs=5e-4)
    assert abs(out.mean() / expected - 1) < 0.01


def test_constant_one_mean_clamped_matches_rectified_model():
    # the clamp lifts the mean above k*theta + mu; compare against a direct simulation
    out = apply_noise(np.ones((1000, 1000)), seed=3)
    rng = np.random.default_rng(99)
    ref = np.maximum(rng.gamma(PAPER_K, PAPER_THETA, 10**6) + rng.normal(PAPER_MU, PAPER_SIGMA, 10**6), 0).mean()
    assert abs(out.mean() / ref - 1) < 0.01
    assert out.min() >= 0


def test_zero_image_is_rectified_read_noise():
    out = apply_noise(np.zeros((1000, 1000)), seed=4)
    expected = stats.norm.cdf(-PAPER_MU / PAPER_SIGMA)
    assert expected == pytest.approx(0.61, abs=0.005)
    assert abs((out == 0).mean() - expected) < 0.005
    pos = out[out > 0]
    # positive part follows the truncated normal
    trunc_mean = PAPER_MU + PAPER_SIGMA * stats.norm.pdf(-PAPER_MU / PAPER_SIGMA) / stats.norm.sf(-PAPER_MU / PAPER_SIGMA)
    assert pos.mean() == pytest.approx(trunc_mean, rel=0.01)


def test_rejects_negative_input():
    with pytest.raises(NoiseError):
        apply_noise(np.array([[-1.0]]))
    with pytest.raises(NoiseError):
        apply_noise(np.array([[np.inf]]))


def test_determinism_and_seed_dependence():
    img = np.full((64, 64), 50.0)
    a = apply_noise(img, seed=10)
    assert np.array_equal(a, apply_noise(img, seed=10))
    assert not np.array_equal(a, apply_noise(img, seed=11))


@settings(max_examples=6, deadline=None)
@given(c=st.floats(20.0, 200.0), seed=st.integers(0, 2**32))
def test_moment_match(c, seed):
    p = NoiseParams()
    out = apply_noise(np.full((1000, 1000), c), p, seed=seed)
    assert abs(out.mean() / p.expected_mean(c) - 1) < 0.01
    assert abs(out.var() / p.expected_variance(c) - 1) < 0.03


@settings(max_examples=20, deadline=None)
@given(img=st.lists(st.floats(0, 255), min_size=1, max_size=200), seed=st.integers(0, 2**40),
       scale=st.floats(0, 3))
def test_output_nonnegative(img, seed, scale):
    out = apply_noise(np.array(img), NoiseParams(scale=scale), seed=seed)
    assert np.all(out >= 0) and out.shape == (len(img),)


def test_variance_monotone_in_scale():
    img = np.full((100_000,), 60.0)
    variances = [apply_noise(img, NoiseParams(scale=s), seed=5).var() for s in np.linspace(0, 2, 9)]
    assert variances[0] < 1e-20
    assert all(b >= a for a, b in zip(variances, variances[1:]))


def _stacks(params, n_frames, shape, seeds=(0,), bright_value=120.0):
    rng = np.random.default_rng(123)
    stacks = []
    for s in seeds:
        clean = np.where(rng.random(shape) < 0.4, rng.uniform(40, bright_value, shape), 0.0)
        frames = [apply_noise(clean, params, seed=1000 * s + i) for i in range(n_frames)]
        stacks.append(FrameStack(frames))
    return stacks


def test_estimate_round_trip_small():
    p = NoiseParams()
    est = estimate_noise_params(_stacks(p, 30, (60, 80), seeds=(0, 1)))
    for name in ("k", "theta", "mu_n", "sigma"):
        assert abs(getattr(est, name) / getattr(p, name) - 1) < 0.15, name


def test_estimate_noise_free_limit():
    clean = np.zeros((40, 40))
    clean[10:30, 10:30] = 100.0
    stack = FrameStack([clean] * 12)
    est = estimate_noise_params([stack])
    assert est.sigma < 1e-3
    assert abs(est.k * est.theta - 1) < 1e-3


def test_estimate_errors():
    dark = FrameStack([np.zeros((16, 16)), np.zeros((16, 16))])
    with pytest.raises(NoiseEstimationError, match="insufficient bright pixels"):
        estimate_noise_params([dark])
    bright = np.full((16, 16), 100.0)
    with pytest.raises(NoiseEstimationError, match="insufficient frames"):
        estimate_noise_params([FrameStack([bright] * 5)])
    with pytest.raises(NoiseError):
        FrameStack([bright])
    with pytest.raises(NoiseError):
        FrameStack([np.zeros((4, 4)), np.zeros((4, 5))])


def test_framestack_load(tmp_path):
    for i in range(3):
        write_pgm(tmp_path / f"f{i:03d}.pgm", np.full((4, 6), 10 * i, np.uint8))
    stack = FrameStack.load(tmp_path)
    assert len(stack) == 3 and stack.shape == (4, 6)
    assert np.all(stack.mean() == 10)
    assert len(FrameStack.load(str(tmp_path / "f00[01].pgm"))) == 2
    with pytest.raises(NoiseError):
        FrameStack.load(tmp_path / "none*.pgm")


def test_extract_half_half():
    img = np.zeros((10, 20))
    img[:, 10:] = 200
    pattern = extract_pattern(FrameStack([img, img, img]), threshold=100)
    assert np.array_equal(pattern.data, (img > 100).astype(np.float32))
    assert pattern.data.mean() == 0.5


def test_extract_threshold_above_max():
    img = np.random.default_rng(0).uniform(0, 50, (8, 8))
    assert extract_pattern(FrameStack([img, img]), threshold=51).data.max() == 0


def test_otsu_separates_modes():
    values = np.concatenate([np.full(100, 10.0), np.full(300, 90.0)])
    t = otsu_threshold(values)
    assert 10 < t <= 90
    assert otsu_threshold(np.full(5, 3.0)) == 3.0


def test_extract_pattern_from_noisy_renders():
    pattern = generate_dot_pattern(40, 30, density=0.5, seed=4)
    rig = SensorRig.build(width=160, height=120, fx=160.0,
                          projector=LightSource("textured_spot", pattern=Texture(pattern), fov=0.6))
    img = trace(wall_scene(rig=rig), rig.ir_left, spp=16, spectrum="ir").data
    clean = img * auto_exposure(img) * 255
    stack = FrameStack([apply_noise(clean, seed=s) for s in range(20)])
    extracted = extract_pattern(stack).data
    truth = _pattern_oracle(rig, pattern, 1.0)
    assert np.mean(extracted == truth) >= 0.98
