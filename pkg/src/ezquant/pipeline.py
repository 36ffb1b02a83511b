"""Whole-matrix quantization: outlier isolation, range optimization, packing."""

from __future__ import annotations

import math

import numpy as np

from .optimize import optimize_ranges
from .outliers import detect_outliers, scatter_into, sigma_threshold
from .rtn import channel_errors, channel_levels, initial_scales, pack_levels
from .types import (
    ChannelScales,
    DenseMatrix,
    OutlierSet,
    QuantConfig,
    QuantizedWeight,
    tensor_stats,
)

MODES = ("easyquant", "outliers-only", "rtn")

# channels are processed in blocks of about this many elements to bound memory
BLOCK_ELEMENTS = 1 << 22


def _channel_blocks(rows: int, cols: int):
    step = max(1, BLOCK_ELEMENTS // rows)
    for start in range(0, cols, step):
        yield start, min(cols, start + step)


def _quantize(W: DenseMatrix, cfg: QuantConfig, isolate: bool, optimize: bool) -> QuantizedWeight:
    rows, cols = W.shape
    lo, hi = cfg.l_min, cfg.l_max
    if isolate:
        outliers = detect_outliers(W, cfg)
    else:
        st = tensor_stats(W)
        outliers = OutlierSet.empty(W.shape, st.mean, st.std, sigma_threshold(cfg.sigma_n))
    omask = outliers.mask() if len(outliers) else None

    scales = np.empty(cols, dtype=np.float32)
    levels = np.empty((rows, cols), dtype=np.int16)
    err_rtn = np.empty(cols)
    err_fin = np.empty(cols)
    for a, b in _channel_blocks(rows, cols):
        xt = np.ascontiguousarray(W.data[:, a:b].T, dtype=np.float64)
        normal = None if omask is None else np.ascontiguousarray(~omask[:, a:b].T)
        # errors are evaluated at the float32 scales that get stored
        s0 = initial_scales(xt, normal, hi).astype(np.float32).astype(np.float64)
        e0 = channel_errors(xt, s0, normal, lo, hi)
        s, e = s0, e0
        if optimize:
            res = optimize_ranges(xt, normal, cfg)
            s = res.scales.astype(np.float32).astype(np.float64)
            e = channel_errors(xt, s, normal, lo, hi)
            worse = e > e0
            s = np.where(worse, s0, s)
            e = np.where(worse, e0, e)
        q = channel_levels(xt, s, lo, hi)
        if normal is not None:
            q = np.where(normal, q, 0.0)
        levels[:, a:b] = q.T
        scales[a:b] = s
        err_rtn[a:b] = e0
        err_fin[a:b] = e

    return QuantizedWeight(
        rows=rows,
        cols=cols,
        bits=cfg.bits,
        packed_levels=pack_levels(levels, cfg.bits),
        scales=ChannelScales(scales),
        outliers=outliers,
        rtn_error=math.fsum(err_rtn),
        final_error=math.fsum(err_fin),
    )


def easyquant_tensor(W: DenseMatrix, cfg: QuantConfig) -> QuantizedWeight:
    """Isolate n-sigma outliers, then tune every column's scale on the rest.

    ``rtn_error`` is the masked error at the max-abs starting scales and
    ``final_error`` the masked error at the tuned scales; outlier slots in the
    level grid hold 0.
    """
    return _quantize(W, cfg, isolate=True, optimize=True)


def outliers_only_tensor(W: DenseMatrix, cfg: QuantConfig) -> QuantizedWeight:
    return _quantize(W, cfg, isolate=True, optimize=False)


def rtn_tensor(W: DenseMatrix, cfg: QuantConfig) -> QuantizedWeight:
    """Plain per-column round-to-nearest at max-abs scales, no outliers."""
    return _quantize(W, cfg, isolate=False, optimize=False)


def quantize_tensor(W: DenseMatrix, cfg: QuantConfig, mode: str = "easyquant") -> QuantizedWeight:
    if mode == "easyquant":
        return easyquant_tensor(W, cfg)
    if mode == "outliers-only":
        return outliers_only_tensor(W, cfg)
    if mode == "rtn":
        return rtn_tensor(W, cfg)
    raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")


def dequantize_normals(q: QuantizedWeight) -> np.ndarray:
    """float32 scale * level grid, before the outlier scatter."""
    # |level| <= 128 so the float32 product is the correctly rounded exact product
    return q.levels().astype(np.float32) * q.scales.scales[None, :]


def dequantize_tensor(q: QuantizedWeight) -> DenseMatrix:
    """Scale * level per column, then the stored outlier values written back."""
    return DenseMatrix(scatter_into(dequantize_normals(q), q.outliers))
