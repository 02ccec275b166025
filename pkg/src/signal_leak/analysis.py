"""Desk-scale diagnostics: low-frequency recovery, brightness summaries and W1."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .schedule import NoiseSchedule, marginal_coeffs
from .tensor import as_tensor, dct2, idct2, lowfreq_mask, split_by_mask


def lowfreq_recovery(x_t, s: NoiseSchedule, t: int, N: int) -> np.ndarray:
    """Estimate the low band of ``x0`` from a noisy ``x_t``.

    Keeps the ``N`` lowest DCT frequencies of ``x_t`` and undoes the
    ``sqrt(alpha_bar_t)`` scaling; the noise contributes zero on average.
    """
    x_t = as_tensor(x_t, "x_t")
    scale, _ = marginal_coeffs(s, t)
    if scale <= 0.0:
        raise ValueError(f"alpha_bar at t={t} is zero; nothing to recover")
    mask = lowfreq_mask(N, x_t.shape[1], x_t.shape[2])
    X_lf, _ = split_by_mask(dct2(x_t) / scale, mask)
    return idct2(X_lf)


def spatial_moments(samples: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample mean and std over all elements."""
    flat = np.stack([np.asarray(x, dtype=np.float64).reshape(-1) for x in samples])
    return flat.mean(axis=1), flat.std(axis=1)


def brightness_summary(samples: Sequence) -> dict[str, float]:
    """Spread of brightness across samples plus a mean contrast proxy.

    Returns ``mean_of_means``, ``std_of_means`` (population std of the
    per-sample spatial means) and ``mean_contrast`` (average per-sample std).
    """
    if len(samples) == 0:
        raise ValueError("no samples")
    means, stds = spatial_moments(samples)
    # sorting makes the reductions independent of sample order
    means = np.sort(means)
    stds = np.sort(stds)
    mean_of_means = math.fsum(means) / means.size
    return {
        "mean_of_means": mean_of_means,
        "std_of_means": math.sqrt(math.fsum((means - mean_of_means) ** 2) / means.size),
        "mean_contrast": math.fsum(stds) / stds.size,
    }


def wasserstein1(a, b) -> float:
    """Wasserstein-1 distance between two 1-D empirical distributions."""
    a = np.sort(np.asarray(a, dtype=np.float64).reshape(-1))
    b = np.sort(np.asarray(b, dtype=np.float64).reshape(-1))
    if a.size == 0 or b.size == 0:
        raise ValueError("wasserstein1 needs non-empty samples")
    n, m = a.size, b.size
    if n == m:
        return float(np.mean(np.abs(a - b)))
    # integrate |F^-1 - G^-1| over the merged quantile breakpoints
    edges = np.union1d(np.arange(n + 1) / n, np.arange(m + 1) / m)
    widths = np.diff(edges)
    mids = 0.5 * (edges[1:] + edges[:-1])
    ia = np.minimum((mids * n).astype(np.intp), n - 1)
    ib = np.minimum((mids * m).astype(np.intp), m - 1)
    return float(np.sum(widths * np.abs(a[ia] - b[ib])))


def marginal_wasserstein1(samples, reference) -> float:
    """W1 per element between two sample sets, averaged over elements."""
    x = np.asarray(samples, dtype=np.float64).reshape(len(samples), -1)
    y = np.asarray(reference, dtype=np.float64).reshape(len(reference), -1)
    if x.shape[1] != y.shape[1]:
        raise ValueError("sample sets have different element counts")
    return float(np.mean([wasserstein1(x[:, j], y[:, j]) for j in range(x.shape[1])]))
