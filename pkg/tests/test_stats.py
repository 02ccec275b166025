import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signal_leak.rng import RngStream
from signal_leak.schedule import NoiseSchedule, ScaledLinear, build_schedule, from_betas, snr_global
from signal_leak.stats import (
    FreqEnergy,
    _CompensatedSum,
    estimate_freq_energy,
    estimate_hybrid_stats,
    estimate_pixel_stats,
    snr_per_frequency,
)
from signal_leak.tensor import dct2, idct2, split_by_mask


def test_identical_tensors_have_zero_sigma():
    x = RngStream(0).normal((2, 3, 3))
    st_ = estimate_pixel_stats([x] * 5)
    np.testing.assert_allclose(st_.mu, x, atol=1e-15)
    np.testing.assert_array_equal(st_.sigma, np.zeros_like(x))


def test_population_std_of_two_values():
    st_ = estimate_pixel_stats([np.zeros((1, 2, 2)), np.full((1, 2, 2), 2.0)])
    np.testing.assert_array_equal(st_.mu, np.ones((1, 2, 2)))
    np.testing.assert_array_equal(st_.sigma, np.ones((1, 2, 2)))


def test_pixel_stats_monte_carlo():
    data = 3.0 + 2.0 * RngStream(1).normal((1000, 1, 4, 4))
    st_ = estimate_pixel_stats(list(data))
    assert np.all(np.abs(st_.mu - 3.0) <= 0.2)
    assert np.all(np.abs(st_.sigma - 2.0) <= 0.15)


def test_pixel_stats_errors():
    with pytest.raises(ValueError):
        estimate_pixel_stats([])
    with pytest.raises(ValueError):
        estimate_pixel_stats([np.zeros((1, 2, 2)), np.zeros((1, 2, 3))])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.integers(-64, 64), st.integers(1, 6))
def test_shift_equivariance(seed, shift, n):
    # dyadic values keep every sum exact; dividing by n is exact only for powers of two
    data = np.round(RngStream(seed).normal((n, 1, 3, 3)) * 8) / 8
    a = estimate_pixel_stats(list(data))
    b = estimate_pixel_stats(list(data + shift))
    if n in (1, 2, 4):
        np.testing.assert_array_equal(b.mu, a.mu + shift)
        np.testing.assert_array_equal(b.sigma, a.sigma)
    else:
        np.testing.assert_allclose(b.mu, a.mu + shift, rtol=0, atol=1e-12)
        np.testing.assert_allclose(b.sigma, a.sigma, rtol=0, atol=1e-12)


def test_compensated_sum_beats_naive():
    acc = _CompensatedSum(())
    values = [1e16, 1.0, -1e16, 1.0] * 100
    for v in values:
        acc.add(np.float64(v))
    assert acc.value() == 200.0


def test_hybrid_identical_images_gives_ridge():
    x = RngStream(2).normal((1, 8, 8))
    h = estimate_hybrid_stats([x] * 4, N=3, ridge=1e-4)
    np.testing.assert_allclose(h.lf.cov_lf, 1e-4 * np.eye(3), atol=1e-18)
    np.testing.assert_array_equal(h.hf.sigma, np.zeros_like(x))


def test_hybrid_constant_images_analytic():
    data = [np.zeros((1, 8, 8)), np.full((1, 8, 8), 2.0)]
    h = estimate_hybrid_stats(data, N=1, ridge=0.0)
    assert h.lf.mu_lf == pytest.approx([8.0], abs=1e-12)
    assert h.lf.cov_lf == pytest.approx(np.array([[64.0]]), abs=1e-10)
    np.testing.assert_allclose(h.hf.mu, 0.0, atol=1e-12)


def test_hybrid_white_noise_monte_carlo():
    data = RngStream(3).normal((500, 1, 8, 8))
    h = estimate_hybrid_stats(list(data), N=3, ridge=0.0)
    assert np.all(np.abs(h.lf.mu_lf) <= 0.15)
    assert np.all(np.abs(h.lf.cov_lf - np.eye(3)) <= 0.2)


def test_hybrid_joint_covariance_is_cross_channel():
    base = RngStream(4).normal((300, 1, 4, 4))
    data = np.concatenate([base, 2 * base], axis=1)  # channel 1 = 2 * channel 0
    h = estimate_hybrid_stats(list(data), N=2, ridge=0.0)
    cov = h.lf.cov_lf
    assert cov.shape == (4, 4)
    np.testing.assert_allclose(cov[0, 2], 2 * cov[0, 0], rtol=1e-12)
    np.testing.assert_array_equal(cov, cov.T)


def test_hybrid_errors():
    x = np.zeros((1, 4, 4))
    with pytest.raises(ValueError):
        estimate_hybrid_stats([], N=1)
    with pytest.raises(ValueError):
        estimate_hybrid_stats([x], N=17)
    with pytest.raises(ValueError):
        estimate_hybrid_stats([x], N=1, ridge=-1.0)


def test_hybrid_decomposition_reconstructs_each_image():
    data = RngStream(5).normal((7, 2, 8, 8))
    h = estimate_hybrid_stats(list(data), N=3)
    for x in data:
        X_lf, X_hf = split_by_mask(dct2(x), h.lf.mask)
        np.testing.assert_allclose(idct2(X_lf) + idct2(X_hf), x, atol=1e-9)


@pytest.mark.parametrize("n", [1, 2, 7])
def test_cholesky_succeeds_with_small_ridge(n):
    data = RngStream(6).normal((n, 4, 8, 8))
    h = estimate_hybrid_stats(list(data), N=3, ridge=1e-8)
    np.linalg.cholesky(h.lf.cov_lf)
    assert np.max(np.abs(h.lf.cov_lf - h.lf.cov_lf.T)) <= 1e-12


def test_freq_energy_examples():
    e = estimate_freq_energy([np.ones((1, 8, 8))] * 3)
    assert e.second_moment[0, 0, 0] == pytest.approx(64.0, abs=1e-10)
    e.second_moment[0, 0, 0] = 0.0
    assert np.max(np.abs(e.second_moment)) <= 1e-20

    data = RngStream(7).normal((1000, 1, 4, 4))
    white = estimate_freq_energy(list(data)).second_moment
    assert np.all(np.abs(white - 1.0) <= 0.15)

    doubled = estimate_freq_energy(list(2 * data[:50])).second_moment
    np.testing.assert_allclose(doubled, 4 * estimate_freq_energy(list(data[:50])).second_moment, rtol=1e-12)


def test_freq_energy_union_is_mean_of_parts():
    # dyadic DC values: squares and means stay exact
    a = [np.full((1, 4, 4), v) for v in (0.5, 1.0, 0.25)]
    b = [np.full((1, 4, 4), v) for v in (2.0, 0.75, 1.5)]
    union = estimate_freq_energy(a + b).second_moment
    parts = 0.5 * (estimate_freq_energy(a).second_moment + estimate_freq_energy(b).second_moment)
    np.testing.assert_allclose(union, parts, rtol=1e-15, atol=1e-30)


def test_snr_per_frequency():
    s = build_schedule(ScaledLinear(), 1000)
    ones = FreqEnergy(np.ones((2, 4, 4)))
    np.testing.assert_array_equal(snr_per_frequency(s, ones), np.full((2, 4, 4), snr_global(s)))

    faint = from_betas(ScaledLinear(), np.array([1 - 1e-12]))
    assert np.all(snr_per_frequency(faint, ones) < 1e-11)


def test_snr_concentrates_at_dc_for_smooth_images():
    levels = 2.0 * RngStream(8).uniform(200) - 1.0
    data = [np.full((1, 8, 8), c) for c in levels]
    snr = snr_per_frequency(build_schedule(ScaledLinear(), 1000), estimate_freq_energy(data))
    rest = snr.copy()
    rest[0, 0, 0] = 0.0
    assert snr[0, 0, 0] / max(rest.max(), 1e-300) >= 100
