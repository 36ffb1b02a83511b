"""Round-to-nearest quantizer, reconstruction error and level packing.

Channel-batched helpers take ``xt`` shaped (channels, rows): one contiguous
row per weight column, so every per-channel reduction runs along the last
axis and gives the same bits whether one channel or many are processed.
"""

from __future__ import annotations

import math

import numpy as np

from .types import DenseMatrix, OutlierSet, QuantConfig


def round_half_away(y: np.ndarray) -> np.ndarray:
    """Round to nearest integer, ties away from zero."""
    t = np.trunc(y)
    return np.where(np.abs(y - t) >= 0.5, t + np.sign(y), t)


def _check_scale(s):
    s = np.asarray(s, dtype=np.float64)
    if not (np.isfinite(s).all() and (s > 0).all()):
        raise ValueError(f"scale must be finite and > 0, got {s}")
    return s


def channel_levels(xt: np.ndarray, s: np.ndarray, l_min: int, l_max: int) -> np.ndarray:
    """float64 levels clamp(round(x / s)) for every channel row of ``xt``."""
    return np.clip(round_half_away(xt / s[:, None]), l_min, l_max)


def initial_scales(xt: np.ndarray, normal: np.ndarray | None, l_max: int) -> np.ndarray:
    """max |x| / l_max per channel over normal entries; 1.0 for empty or all-zero channels."""
    a = np.abs(xt)
    if normal is not None:
        a = np.where(normal, a, 0.0)
    peak = a.max(axis=1) if a.shape[1] else np.zeros(a.shape[0])
    return np.where(peak > 0, peak / l_max, 1.0)


def channel_errors(
    xt: np.ndarray, s: np.ndarray, normal: np.ndarray | None, l_min: int, l_max: int
) -> np.ndarray:
    """Masked squared reconstruction error of each channel (float64)."""
    r = s[:, None] * channel_levels(xt, s, l_min, l_max) - xt
    if normal is not None:
        r = np.where(normal, r, 0.0)
    return np.sum(r * r, axis=1)


def initial_scale(x, cfg: QuantConfig) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if x.size == 0:
        raise ValueError("empty channel")
    return float(initial_scales(x, None, cfg.l_max)[0])


def quantize_channel(x, s: float, cfg: QuantConfig) -> np.ndarray:
    s = _check_scale(s).reshape(1)
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return channel_levels(x, s, cfg.l_min, cfg.l_max)[0].astype(np.int16)


def dequantize_channel(levels, s: float) -> np.ndarray:
    s = float(_check_scale(s))
    return s * np.asarray(levels, dtype=np.float64)


def reconstruction_error(
    W: DenseMatrix, W_hat: DenseMatrix, mask: OutlierSet | None = None
) -> float:
    """Sum of squared differences, skipping coordinates listed in ``mask``.

    Per-column float64 sums, then an exactly rounded sum across columns.
    """
    if W.shape != W_hat.shape:
        raise ValueError(f"shape mismatch {W.shape} vs {W_hat.shape}")
    d = W_hat.data.T.astype(np.float64) - W.data.T.astype(np.float64)
    if mask is not None and len(mask):
        if mask.shape != W.shape:
            raise ValueError("mask shape does not match")
        d[mask.col, mask.row] = 0.0
    return math.fsum(np.sum(d * d, axis=1))


def pack_levels(levels, bits: int = 4) -> bytes:
    """Offset-encode levels (level - l_min) and pack them.

    bits == 4: two per byte, earlier element in the low nibble, odd tail
    padded with a zero nibble. Other widths: one unsigned byte per level.
    """
    l_min = -(2 ** (bits - 1)) + 1
    u = np.asarray(levels, dtype=np.int16).reshape(-1) - l_min
    if u.size and (u.min() < 0 or u.max() > 2**bits - 1):
        raise ValueError(f"level outside [{l_min}, {2 ** (bits - 1)}]")
    u = u.astype(np.uint8)
    if bits != 4:
        return u.tobytes()
    if u.size % 2:
        u = np.append(u, np.uint8(0))
    return (u[0::2] | (u[1::2] << 4)).astype(np.uint8).tobytes()


def packed_size(count: int, bits: int) -> int:
    return (count + 1) // 2 if bits == 4 else count


def unpack_levels(data: bytes, count: int, bits: int = 4) -> np.ndarray:
    need = packed_size(count, bits)
    if len(data) < need:
        raise ValueError(f"packed data has {len(data)} bytes, need {need} for {count} levels")
    l_min = -(2 ** (bits - 1)) + 1
    b = np.frombuffer(data, dtype=np.uint8, count=need)
    if bits == 4:
        u = np.empty(2 * need, dtype=np.uint8)
        u[0::2] = b & 0x0F
        u[1::2] = b >> 4
        u = u[:count]
    else:
        u = b
    return u.astype(np.int16) + l_min
