import math

import numpy as np
import pytest

from mc_bounds import within_3sigma
from signal_leak.rng import RngStream
from signal_leak.sampler import (
    CovarianceError,
    Hybrid,
    ManualLF,
    PixelGaussian,
    WhiteNoise,
    robust_cholesky,
    sample_initial_latent,
    sample_leak,
    sample_training_latent,
)
from signal_leak.schedule import LinearBeta, NoiseSchedule, ScaledLinear, build_schedule, marginal_coeffs
from signal_leak.stats import HybridStats, LFStats, PixelStats
from signal_leak.tensor import dct_matrix, lowfreq_mask

SD = build_schedule(ScaledLinear(), 1000)


def _lf_pixel_variance(mask, h, w):
    """Per-pixel variance that unit-variance LF coefficients put in pixel space."""
    dh, dw = dct_matrix(h), dct_matrix(w)
    out = np.zeros((h, w))
    for u, v in mask.coords:
        out += np.outer(dh[u], dw[v]) ** 2
    return out


def white_hybrid(shape, n_lowest=1):
    """Hybrid stats of white noise: unit LF covariance and the HF residual's
    per-pixel variance, so the combined draw has unit variance everywhere."""
    c, h, w = shape
    mask = lowfreq_mask(n_lowest, h, w)
    lf = LFStats(mask, np.zeros(c * n_lowest), np.eye(c * n_lowest), 0.0)
    hf_sigma = np.broadcast_to(np.sqrt(1.0 - _lf_pixel_variance(mask, h, w)), shape).copy()
    return HybridStats(lf, PixelStats(np.zeros(shape), hf_sigma))


def test_rng_determinism_and_independence():
    a = RngStream(7).normal(100)
    b = RngStream(7).normal(100)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(RngStream(7).spawn(1).normal(10), RngStream(7).spawn(2).normal(10))
    u = RngStream(0).uniform(100_000)
    assert u.min() > 0.0 and u.max() < 1.0


def test_rng_stream_is_sequential():
    r = RngStream(3)
    first = r.normal(5)
    second = r.normal(5)
    np.testing.assert_array_equal(np.concatenate([first, second]), RngStream(3).normal(10))


def test_pixel_gaussian_with_zero_sigma_returns_mu():
    mu = RngStream(1).normal((2, 3, 3))
    model = PixelGaussian(PixelStats(mu, np.zeros_like(mu)))
    for seed in range(3):
        np.testing.assert_array_equal(sample_leak(model, mu.shape, RngStream(seed)), mu)


def test_manual_lf_dc_gives_constant_image():
    hf = PixelStats(np.zeros((1, 8, 8)), np.zeros((1, 8, 8)))
    model = ManualLF(np.array([8.0]), lowfreq_mask(1, 8, 8), hf)
    np.testing.assert_allclose(sample_leak(model, (1, 8, 8), RngStream(0)), np.ones((1, 8, 8)), atol=1e-12)


def test_manual_lf_levels_shift_spatial_mean_by_level():
    hf = PixelStats(np.zeros((2, 4, 4)), np.zeros((2, 4, 4)))
    model = ManualLF.from_levels([1.0, -0.5], hf, lowfreq_mask(3, 4, 4))
    x = sample_leak(model, (2, 4, 4), RngStream(0))
    np.testing.assert_allclose(x.mean(axis=(1, 2)), [1.0, -0.5], atol=1e-12)
    with pytest.raises(ValueError):
        ManualLF.from_levels([1.0], hf, lowfreq_mask(3, 4, 4))


def test_hybrid_dc_only_monte_carlo():
    shape = (1, 4, 4)
    model = Hybrid(white_hybrid(shape))
    rng = RngStream(11)
    draws = np.stack([sample_leak(model, shape, rng) for _ in range(100_000)])
    ok_mean, ok_var = within_3sigma(draws.reshape(len(draws), -1), 0.0, 1.0)
    assert ok_mean and ok_var


def test_hybrid_white_in_lf_and_hf_stays_white():
    shape = (2, 4, 4)
    model = Hybrid(white_hybrid(shape, 3))
    rng = RngStream(12)
    draws = np.stack([sample_leak(model, shape, rng) for _ in range(10_000)])
    var = draws.var(axis=0)
    assert np.all((var >= 0.9) & (var <= 1.1))


def test_shape_mismatch():
    model = PixelGaussian(PixelStats(np.zeros((1, 2, 2)), np.ones((1, 2, 2))))
    with pytest.raises(ValueError):
        sample_leak(model, (1, 3, 3), RngStream(0))
    with pytest.raises(ValueError):
        sample_leak(WhiteNoise(), (1, 0, 3), RngStream(0))


def test_robust_cholesky_retries_and_fails():
    singular = np.ones((3, 3))
    L = robust_cholesky(singular, 1e-6)
    assert np.all(np.isfinite(L))
    with pytest.raises(CovarianceError):
        robust_cholesky(-np.eye(2), 1e-8)


def test_initial_latent_degenerates_to_noise_without_leak():
    no_leak = NoiseSchedule(LinearBeta(), 1, np.ones(1), np.zeros(1), np.zeros(1))
    model = PixelGaussian(PixelStats(np.full((1, 2, 2), 5.0), np.ones((1, 2, 2))))
    x = sample_initial_latent(no_leak, model, (1, 2, 2), RngStream(4))
    r = RngStream(4)
    r.normal((1, 2, 2))  # leak variates come first
    np.testing.assert_array_equal(x, r.normal((1, 2, 2)))


def test_initial_latent_moment_oracle():
    shape = (1, 2, 2)
    mu = np.array([[[3.0, -1.0], [0.5, 8.0]]])
    sigma = np.array([[[2.0, 0.5], [1.0, 3.0]]])
    model = PixelGaussian(PixelStats(mu, sigma))
    a, b = marginal_coeffs(SD, SD.T)
    rng = RngStream(21)
    draws = np.stack([sample_initial_latent(SD, model, shape, rng) for _ in range(100_000)])
    ok_mean, ok_var = within_3sigma(draws, a * mu, a * a * sigma**2 + b * b)
    assert ok_mean and ok_var


def test_manual_lf_sweep_is_monotone():
    shape = (4, 8, 8)
    hf = PixelStats(np.zeros(shape), np.ones(shape))
    mask = lowfreq_mask(1, 8, 8)
    means = []
    for level in (-2, -1, 0, 1, 2):
        model = ManualLF.from_levels([level, 0, 0, 0], hf, mask)
        rng = RngStream(5)
        draws = np.stack([sample_initial_latent(SD, model, shape, rng) for _ in range(200)])
        means.append(draws[:, 0].mean())
    assert all(np.diff(means) > 0)


def test_training_latent():
    clean = NoiseSchedule(LinearBeta(), 1, np.zeros(1), np.ones(1), np.ones(1))
    x0 = RngStream(0).normal((1, 3, 3))
    np.testing.assert_array_equal(sample_training_latent(clean, x0, 1, RngStream(1)), x0)

    t = 400
    ab = SD.alpha_bars[t - 1]
    rng = RngStream(9)
    draws = np.stack([sample_training_latent(SD, np.zeros((1, 1, 1)), t, rng) for _ in range(20_000)])
    assert within_3sigma(draws, 0.0, 1 - ab)[1]

    x0 = np.ones((1, 2, 2))
    np.testing.assert_array_equal(
        sample_training_latent(SD, x0, 10, RngStream(3)), sample_training_latent(SD, x0, 10, RngStream(3))
    )
    with pytest.raises(ValueError):
        sample_training_latent(SD, x0, 0, RngStream(3))


def test_realignment_matches_training_distribution():
    # when the leak model is the true data distribution, inference latents
    # and training latents at t = T share their first two moments
    shape = (1, 1, 2)
    mu = np.array([[[2.0, -3.0]]])
    sigma = np.array([[[1.5, 0.25]]])
    model = PixelGaussian(PixelStats(mu, sigma))
    s = build_schedule(LinearBeta(), 100)
    r1, r2, r3 = RngStream(31), RngStream(32), RngStream(33)
    n = 100_000
    inference = np.stack([sample_initial_latent(s, model, shape, r1) for _ in range(n)])
    x0 = mu + sigma * r2.normal((n, *shape))
    training = np.stack([sample_training_latent(s, x, s.T, r3) for x in x0])
    a, b = marginal_coeffs(s, s.T)
    var = a * a * sigma**2 + b * b
    se = 3 * np.sqrt(2 * var / n)  # difference of two independent means
    assert np.all(np.abs(inference.mean(0) - training.mean(0)) <= se)
    se_var = 3 * np.sqrt(2 * 2 * var**2 / n)
    assert np.all(np.abs(inference.var(0) - training.var(0)) <= se_var)


def test_determinism():
    shape = (2, 4, 4)
    model = Hybrid(white_hybrid(shape, 3))
    x = sample_initial_latent(SD, model, shape, RngStream(99))
    y = sample_initial_latent(SD, model, shape, RngStream(99))
    assert x.tobytes() == y.tobytes()
    assert math.isfinite(float(x.sum()))
