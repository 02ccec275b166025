"""C x H x W tensors, orthonormal 2-D DCT and low-frequency masks.

Tensors are plain float64 ``numpy`` arrays of shape ``(C, H, W)``. The DCT is
the unitary DCT-II applied separably over the two spatial axes of every
channel, so white Gaussian noise stays white in the frequency domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


def as_tensor(x, name: str = "tensor") -> np.ndarray:
    """Coerce ``x`` to a finite float64 ``(C, H, W)`` array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3 or 0 in arr.shape:
        raise ValueError(f"{name} must have shape (C, H, W), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@lru_cache(maxsize=32)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix ``D`` with ``X = D @ x``."""
    k = np.arange(n, dtype=np.float64)[:, None]
    i = np.arange(n, dtype=np.float64)[None, :]
    mat = np.cos(np.pi * (2.0 * i + 1.0) * k / (2.0 * n)) * np.sqrt(2.0 / n)
    mat[0, :] = np.sqrt(1.0 / n)
    mat.setflags(write=False)
    return mat


def dct2(x) -> np.ndarray:
    x = as_tensor(x)
    dh = dct_matrix(x.shape[1])
    dw = dct_matrix(x.shape[2])
    return dh @ x @ dw.T


def idct2(X) -> np.ndarray:
    X = as_tensor(X)
    dh = dct_matrix(X.shape[1])
    dw = dct_matrix(X.shape[2])
    return dh.T @ X @ dw


def frequency_order(height: int, width: int) -> list[tuple[int, int]]:
    """All ``(u, v)`` pairs sorted by ``u + v``, then ``max(u, v)``, then ``u``."""
    pairs = [(u, v) for u in range(height) for v in range(width)]
    pairs.sort(key=lambda p: (p[0] + p[1], max(p), p[0]))
    return pairs


@dataclass(frozen=True)
class FreqMask:
    n_lowest: int
    coords: tuple[tuple[int, int], ...]
    height: int
    width: int

    @property
    def rows(self) -> np.ndarray:
        return np.array([u for u, _ in self.coords], dtype=np.intp)

    @property
    def cols(self) -> np.ndarray:
        return np.array([v for _, v in self.coords], dtype=np.intp)

    def as_array(self) -> np.ndarray:
        """Boolean ``(H, W)`` mask, true on the retained frequencies."""
        m = np.zeros((self.height, self.width), dtype=bool)
        m[self.rows, self.cols] = True
        return m

    def gather(self, X: np.ndarray) -> np.ndarray:
        """Masked coefficients as a ``C * N`` vector, channel-major."""
        return X[:, self.rows, self.cols].reshape(-1)

    def scatter(self, coeffs: np.ndarray, channels: int) -> np.ndarray:
        """Inverse of :meth:`gather`: zeros everywhere except the masked coords."""
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.size != channels * self.n_lowest:
            raise ValueError(f"expected {channels * self.n_lowest} coefficients, got {coeffs.size}")
        X = np.zeros((channels, self.height, self.width))
        X[:, self.rows, self.cols] = coeffs.reshape(channels, self.n_lowest)
        return X


def lowfreq_mask(N: int, height: int, width: int) -> FreqMask:
    if not (1 <= N <= height * width):
        raise ValueError(f"N={N} outside [1, {height * width}]")
    coords = tuple(frequency_order(height, width)[:N])
    return FreqMask(n_lowest=N, coords=coords, height=height, width=width)


def split_by_mask(X, m: FreqMask) -> tuple[np.ndarray, np.ndarray]:
    """Split DCT coefficients into the masked low band and the residual."""
    X = as_tensor(X)
    if X.shape[1:] != (m.height, m.width):
        raise ValueError(f"mask is {m.height}x{m.width} but tensor is {X.shape[1]}x{X.shape[2]}")
    keep = m.as_array()
    X_lf = np.where(keep, X, 0.0)
    X_hf = np.where(keep, 0.0, X)
    return X_lf, X_hf
