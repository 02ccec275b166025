"""Statistics of a target set: pixel-domain, hybrid LF/HF and per-frequency energy.

All reductions run sequentially over the dataset in input order with
Neumaier-compensated sums, so results are bit-reproducible. Standard
deviations and covariances use the population (divide-by-n) convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .schedule import NoiseSchedule, snr_global
from .tensor import FreqMask, as_tensor, dct2, idct2, lowfreq_mask, split_by_mask

DEFAULT_RIDGE = 1e-4


class _CompensatedSum:
    """Elementwise Neumaier summation over a stream of equal-shape arrays."""

    def __init__(self, shape):
        self.total = np.zeros(shape)
        self.comp = np.zeros(shape)

    def add(self, x: np.ndarray) -> None:
        t = self.total + x
        big = np.abs(self.total) >= np.abs(x)
        self.comp += np.where(big, (self.total - t) + x, (x - t) + self.total)
        self.total = t

    def value(self) -> np.ndarray:
        return self.total + self.comp


def _compensated_mean(arrays: Iterable[np.ndarray], shape, n: int) -> np.ndarray:
    acc = _CompensatedSum(shape)
    for a in arrays:
        acc.add(a)
    return acc.value() / n


def _checked(dataset: Sequence) -> list[np.ndarray]:
    tensors = [as_tensor(x, "dataset item") for x in dataset]
    if not tensors:
        raise ValueError("dataset is empty")
    shape = tensors[0].shape
    for i, x in enumerate(tensors):
        if x.shape != shape:
            raise ValueError(f"dataset item {i} has shape {x.shape}, expected {shape}")
    return tensors


@dataclass(frozen=True, eq=False)
class PixelStats:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape:
            raise ValueError(f"mu {self.mu.shape} and sigma {self.sigma.shape} differ in shape")
        if np.any(self.sigma < 0):
            raise ValueError("sigma must be non-negative")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.mu.shape


@dataclass(frozen=True, eq=False)
class LFStats:
    """Gaussian over the masked DCT coefficients.

    ``cov_lf`` already includes ``ridge`` on its diagonal.
    """

    mask: FreqMask
    mu_lf: np.ndarray
    cov_lf: np.ndarray
    ridge: float

    def __post_init__(self):
        d = self.mu_lf.size
        if d % self.mask.n_lowest:
            raise ValueError("mu_lf length must be a multiple of the mask size")
        if self.cov_lf.shape != (d, d):
            raise ValueError(f"cov_lf must be {d}x{d}, got {self.cov_lf.shape}")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")

    @property
    def channels(self) -> int:
        return self.mu_lf.size // self.mask.n_lowest


@dataclass(frozen=True, eq=False)
class HybridStats:
    lf: LFStats
    hf: PixelStats

    def __post_init__(self):
        c, h, w = self.hf.shape
        if (self.lf.channels, self.lf.mask.height, self.lf.mask.width) != (c, h, w):
            raise ValueError("LF mask/channels inconsistent with HF shape")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.hf.shape


@dataclass(frozen=True, eq=False)
class FreqEnergy:
    second_moment: np.ndarray


def _mean(arrays: list[np.ndarray]) -> np.ndarray:
    # shifted by the first item: exact for identical inputs
    pivot = arrays[0]
    return pivot + _compensated_mean((a - pivot for a in arrays), pivot.shape, len(arrays))


def _pixel_stats(tensors: list[np.ndarray]) -> PixelStats:
    n = len(tensors)
    shape = tensors[0].shape
    mu = _mean(tensors)
    var = _compensated_mean(((x - mu) ** 2 for x in tensors), shape, n)
    return PixelStats(mu=mu, sigma=np.sqrt(var))


def estimate_pixel_stats(dataset: Sequence) -> PixelStats:
    """Elementwise mean and population std of the dataset."""
    return _pixel_stats(_checked(dataset))


def estimate_hybrid_stats(dataset: Sequence, N: int, ridge: float = DEFAULT_RIDGE) -> HybridStats:
    """Fit a joint Gaussian to the ``N`` lowest DCT frequencies of every channel
    and a pixel-domain diagonal Gaussian to the high-frequency residual."""
    tensors = _checked(dataset)
    if not (ridge >= 0.0):
        raise ValueError(f"ridge={ridge} must be non-negative")
    c, h, w = tensors[0].shape
    mask = lowfreq_mask(N, h, w)
    n = len(tensors)

    lf_vectors = []
    residuals = []
    for x in tensors:
        X_lf, X_hf = split_by_mask(dct2(x), mask)
        lf_vectors.append(mask.gather(X_lf))
        residuals.append(idct2(X_hf))

    d = c * N
    mu_lf = _mean(lf_vectors)
    cov = _compensated_mean((np.outer(v - mu_lf, v - mu_lf) for v in lf_vectors), (d, d), n)
    cov = 0.5 * (cov + cov.T)
    cov[np.diag_indices(d)] += ridge
    lf = LFStats(mask=mask, mu_lf=mu_lf, cov_lf=cov, ridge=float(ridge))
    return HybridStats(lf=lf, hf=_pixel_stats(residuals))


def estimate_freq_energy(dataset: Sequence) -> FreqEnergy:
    """Mean squared DCT coefficient at every (channel, u, v)."""
    tensors = _checked(dataset)
    return FreqEnergy(_compensated_mean((dct2(x) ** 2 for x in tensors), tensors[0].shape, len(tensors)))


def snr_per_frequency(s: NoiseSchedule, e: FreqEnergy) -> np.ndarray:
    return snr_global(s) * e.second_moment
