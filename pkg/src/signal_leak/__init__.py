"""Signal-leak analysis and exploitation for diffusion models."""

from .analysis import brightness_summary, lowfreq_recovery, wasserstein1
from .rng import RngStream
from .sampler import (
    Hybrid,
    ManualLF,
    PixelGaussian,
    WhiteNoise,
    sample_initial_latent,
    sample_leak,
    sample_training_latent,
)
from .schedule import (
    LinearBeta,
    NoiseSchedule,
    ScaledLinear,
    SigmoidBeta,
    SquaredCosine,
    accentuated_schedule,
    build_schedule,
    marginal_coeffs,
    snr_global,
    truncate,
)
from .sim import GmmDistribution, Oracle, generate, gmm_posterior_x0, run_bias_experiment
from .stats import estimate_freq_energy, estimate_hybrid_stats, estimate_pixel_stats, snr_per_frequency
from .tensor import dct2, idct2, lowfreq_mask, split_by_mask

__all__ = [
    "GmmDistribution",
    "Hybrid",
    "LinearBeta",
    "ManualLF",
    "NoiseSchedule",
    "Oracle",
    "PixelGaussian",
    "RngStream",
    "ScaledLinear",
    "SigmoidBeta",
    "SquaredCosine",
    "WhiteNoise",
    "accentuated_schedule",
    "brightness_summary",
    "build_schedule",
    "dct2",
    "estimate_freq_energy",
    "estimate_hybrid_stats",
    "estimate_pixel_stats",
    "generate",
    "gmm_posterior_x0",
    "idct2",
    "lowfreq_mask",
    "lowfreq_recovery",
    "marginal_coeffs",
    "run_bias_experiment",
    "sample_initial_latent",
    "sample_leak",
    "sample_training_latent",
    "snr_global",
    "snr_per_frequency",
    "split_by_mask",
    "truncate",
    "wasserstein1",
]
