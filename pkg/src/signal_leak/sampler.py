"""Signal-leak models and initial-latent sampling.

Variates are always drawn in a fixed order from the given stream: first the
leak (for the hybrid models the ``C * N`` low-frequency variates, then the
``C * H * W`` high-frequency ones), then the noise ``eps``. Each block is
row-major.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np

from .rng import RngStream
from .schedule import NoiseSchedule, marginal_coeffs
from .stats import HybridStats, PixelStats
from .tensor import FreqMask, as_tensor, idct2

RIDGE_RETRIES = 3


class CovarianceError(np.linalg.LinAlgError):
    """The LF covariance stayed non-PSD after every ridge retry."""


def robust_cholesky(cov: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    """Lower Cholesky factor of ``cov``, retrying with a 10x larger ridge up to 3 times."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    base = max(ridge, 1e-8)
    eye = np.eye(cov.shape[0])
    for k in range(1, RIDGE_RETRIES + 1):
        try:
            return np.linalg.cholesky(cov + base * 10.0**k * eye)
        except np.linalg.LinAlgError:
            continue
    raise CovarianceError(
        f"LF covariance is not positive definite even with ridge {base * 10.0**RIDGE_RETRIES:g}; "
        "re-estimate with a larger ridge"
    )


@dataclass(frozen=True)
class WhiteNoise:
    name = "white"


@dataclass(frozen=True, eq=False)
class PixelGaussian:
    stats: PixelStats
    name = "pixel"


@dataclass(frozen=True, eq=False)
class Hybrid:
    stats: HybridStats
    name = "hybrid"

    @cached_property
    def chol(self) -> np.ndarray:
        return robust_cholesky(self.stats.lf.cov_lf, self.stats.lf.ridge)


@dataclass(frozen=True, eq=False)
class ManualLF:
    """Hybrid leak whose low band is fixed by the user instead of sampled."""

    x_lf_coeffs: np.ndarray
    mask: FreqMask
    hf: PixelStats
    name = "manual-lf"

    def __post_init__(self):
        c = self.hf.shape[0]
        if np.asarray(self.x_lf_coeffs).size != c * self.mask.n_lowest:
            raise ValueError(
                f"x_lf_coeffs must have C*N={c * self.mask.n_lowest} entries, got {np.asarray(self.x_lf_coeffs).size}"
            )
        if (self.mask.height, self.mask.width) != self.hf.shape[1:]:
            raise ValueError("mask and HF stats disagree on spatial size")

    @classmethod
    def from_levels(cls, levels, hf: PixelStats, mask: FreqMask) -> "ManualLF":
        """Per-channel brightness levels: level ``v`` shifts that channel's
        spatial mean by ``v``, i.e. DC coefficient ``v * sqrt(H * W)``.
        Other low-band coefficients are set to zero."""
        levels = np.asarray(levels, dtype=np.float64).reshape(-1)
        c, h, w = hf.shape
        if levels.size != c:
            raise ValueError(f"expected {c} levels (one per channel), got {levels.size}")
        coeffs = np.zeros((c, mask.n_lowest))
        coeffs[:, 0] = levels * math.sqrt(h * w)
        return cls(x_lf_coeffs=coeffs.reshape(-1), mask=mask, hf=hf)


LeakModel = Union[WhiteNoise, PixelGaussian, Hybrid, ManualLF]


def _model_shape(model: LeakModel):
    if isinstance(model, PixelGaussian):
        return model.stats.shape
    if isinstance(model, Hybrid):
        return model.stats.shape
    if isinstance(model, ManualLF):
        return model.hf.shape
    return None


def _check_shape(shape) -> tuple[int, int, int]:
    shape = tuple(int(s) for s in shape)
    if len(shape) != 3 or min(shape) < 1:
        raise ValueError(f"shape must be (C, H, W) with positive entries, got {shape}")
    return shape


def _lf_plus_hf(lf_coeffs, mask: FreqMask, hf: PixelStats, rng: RngStream) -> np.ndarray:
    c = hf.shape[0]
    x_lf = idct2(mask.scatter(lf_coeffs, c))
    return x_lf + hf.mu + hf.sigma * rng.normal(hf.shape)


def sample_leak(model: LeakModel, shape, rng: RngStream) -> np.ndarray:
    """Draw one leak tensor from ``model``."""
    shape = _check_shape(shape)
    expected = _model_shape(model)
    if expected is not None and tuple(expected) != shape:
        raise ValueError(f"model is fitted for shape {tuple(expected)}, requested {shape}")

    if isinstance(model, WhiteNoise):
        return rng.normal(shape)
    if isinstance(model, PixelGaussian):
        return model.stats.mu + model.stats.sigma * rng.normal(shape)
    if isinstance(model, Hybrid):
        lf = model.stats.lf
        coeffs = lf.mu_lf + model.chol @ rng.normal(lf.mu_lf.size)
        return _lf_plus_hf(coeffs, lf.mask, model.stats.hf, rng)
    if isinstance(model, ManualLF):
        return _lf_plus_hf(model.x_lf_coeffs, model.mask, model.hf, rng)
    raise TypeError(f"unknown leak model {model!r}")


def sample_initial_latent(s: NoiseSchedule, model: LeakModel, shape, rng: RngStream) -> np.ndarray:
    """``sqrt(ab_T) * leak + sqrt(1 - ab_T) * eps`` with independent leak and noise."""
    shape = _check_shape(shape)
    leak = sample_leak(model, shape, rng)
    eps = rng.normal(shape)
    a, b = marginal_coeffs(s, s.T)
    return a * leak + b * eps


def sample_training_latent(s: NoiseSchedule, x0, t: int, rng: RngStream) -> np.ndarray:
    """Forward-noise ``x0`` to timestep ``t`` as during training."""
    a, b = marginal_coeffs(s, t)
    x0 = as_tensor(x0, "x0")
    return a * x0 + b * rng.normal(x0.shape)
