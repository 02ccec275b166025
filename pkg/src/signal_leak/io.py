"""File formats: ``.slt`` binary tensors, PPM/PGM images and JSON stats files.

``.slt`` layout (all little-endian)::

    b"SLT1" | dtype u8 (0=float32, 1=float64) | ndim u8 | ndim x u32 dims | payload

Stats files are JSON documents; array fields hold base64-encoded ``.slt``
blobs so a single file carries the header and the tensors.
"""

from __future__ import annotations

import base64
import json
import struct
from pathlib import Path

import numpy as np

from .stats import FreqEnergy, HybridStats, LFStats, PixelStats
from .tensor import lowfreq_mask

MAGIC = b"SLT1"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class FormatError(ValueError):
    pass


def tensor_to_bytes(x: np.ndarray, dtype="float64") -> bytes:
    dt = np.dtype(dtype)
    if dt not in _CODES:
        raise ValueError(f"unsupported dtype {dtype}")
    arr = np.ascontiguousarray(x, dtype=_DTYPES[_CODES[dt]])
    if arr.ndim > 255:
        raise ValueError("too many dimensions")
    header = MAGIC + struct.pack("<BB", _CODES[dt], arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes(order="C")


def tensor_from_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < 6 or buf[:4] != MAGIC:
        raise FormatError("not an SLT1 tensor")
    code, ndim = struct.unpack_from("<BB", buf, 4)
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    off = 6 + 4 * ndim
    if len(buf) < off:
        raise FormatError("truncated header")
    dims = struct.unpack_from(f"<{ndim}I", buf, 6)
    dt = _DTYPES[code]
    count = int(np.prod(dims, dtype=np.int64))
    if len(buf) - off != count * dt.itemsize:
        raise FormatError(f"payload is {len(buf) - off} bytes, expected {count * dt.itemsize}")
    arr = np.frombuffer(buf, dtype=dt, count=count, offset=off).reshape(dims)
    return arr.astype(dt.newbyteorder("="))


def write_tensor(path, x: np.ndarray, dtype="float64") -> None:
    Path(path).write_bytes(tensor_to_bytes(x, dtype))


def read_tensor(path) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())


def _netpbm_tokens(data: bytes, count: int):
    """Parse ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset of the single whitespace byte after the last one.
    """
    tokens = []
    i = 0
    while len(tokens) < count:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i >= len(data):
            raise FormatError("truncated PNM header")
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    return tokens, i


def read_pnm(path) -> np.ndarray:
    """Load a binary PGM (P5) or PPM (P6) with maxval 255 as a ``(C, H, W)``
    tensor with values mapped to [-1, 1] via ``v / 127.5 - 1``."""
    data = Path(path).read_bytes()
    tokens, off = _netpbm_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"{path}: unsupported magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{path}: malformed header") from None
    if maxval != 255:
        raise FormatError(f"{path}: maxval {maxval} unsupported (need 255)")
    channels = 1 if magic == b"P5" else 3
    n = width * height * channels
    pixels = data[off + 1 : off + 1 + n]
    if len(pixels) != n:
        raise FormatError(f"{path}: expected {n} pixel bytes, got {len(pixels)}")
    img = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, channels)
    return img.transpose(2, 0, 1).astype(np.float64) / 127.5 - 1.0


def write_pnm(path, x: np.ndarray) -> None:
    """Inverse of :func:`read_pnm` (values clipped and rounded to bytes)."""
    x = np.asarray(x, dtype=np.float64)
    c, h, w = x.shape
    if c not in (1, 3):
        raise ValueError("PNM needs 1 or 3 channels")
    v = np.clip(np.rint((x + 1.0) * 127.5), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    magic = b"P5" if c == 1 else b"P6"
    Path(path).write_bytes(magic + f"\n{w} {h}\n255\n".encode() + v.tobytes())


def _blob(x: np.ndarray) -> str:
    return base64.b64encode(tensor_to_bytes(x)).decode("ascii")


def _unblob(s: str) -> np.ndarray:
    return tensor_from_bytes(base64.b64decode(s))


def stats_to_json(stats, **extra) -> str:
    """Serialize pixel, hybrid or frequency-energy stats with extra header fields."""
    if isinstance(stats, PixelStats):
        doc = {"mode": "pixel", "shape": list(stats.shape), **extra}
        doc["mu"] = _blob(stats.mu)
        doc["sigma"] = _blob(stats.sigma)
    elif isinstance(stats, HybridStats):
        lf = stats.lf
        doc = {"mode": "hybrid", "shape": list(stats.shape), "N": lf.mask.n_lowest, "ridge": lf.ridge, **extra}
        doc["mu_lf"] = _blob(lf.mu_lf)
        doc["cov_lf"] = _blob(lf.cov_lf)
        doc["hf_mu"] = _blob(stats.hf.mu)
        doc["hf_sigma"] = _blob(stats.hf.sigma)
    elif isinstance(stats, FreqEnergy):
        doc = {"mode": "energy", "shape": list(stats.second_moment.shape), **extra}
        doc["second_moment"] = _blob(stats.second_moment)
    else:
        raise TypeError(f"cannot serialize {type(stats).__name__}")
    return json.dumps(doc, indent=2, sort_keys=True)


def stats_from_json(text: str):
    doc = json.loads(text)
    mode = doc.get("mode")
    if mode == "pixel":
        return PixelStats(mu=_unblob(doc["mu"]), sigma=_unblob(doc["sigma"]))
    if mode == "hybrid":
        _, h, w = doc["shape"]
        lf = LFStats(
            mask=lowfreq_mask(int(doc["N"]), h, w),
            mu_lf=_unblob(doc["mu_lf"]),
            cov_lf=_unblob(doc["cov_lf"]),
            ridge=float(doc["ridge"]),
        )
        return HybridStats(lf=lf, hf=PixelStats(mu=_unblob(doc["hf_mu"]), sigma=_unblob(doc["hf_sigma"])))
    if mode == "energy":
        return FreqEnergy(_unblob(doc["second_moment"]))
    raise FormatError(f"unknown stats mode {mode!r}")


def read_stats(path):
    return stats_from_json(Path(path).read_text())


def write_stats(path, stats, **extra) -> None:
    Path(path).write_text(stats_to_json(stats, **extra) + "\n")
