"""n-sigma outlier detection, normal-entry masking and outlier scatter."""

from __future__ import annotations

import numpy as np

from .types import DenseMatrix, OutlierSet, QuantConfig, tensor_stats


def sigma_threshold(sigma_n: float) -> float:
    # the threshold is stored as f32 in tensor files; detect with that value so reloads agree
    return float(np.float32(sigma_n))


def is_outlier(values, mean: float, std: float, sigma_n: float) -> np.ndarray:
    """|v - mean| >= sigma_n * std, ties included; nothing qualifies when std == 0."""
    v = np.asarray(values, dtype=np.float64)
    if std == 0:
        return np.zeros(v.shape, dtype=bool)
    return np.abs(v - mean) >= sigma_threshold(sigma_n) * std


def detect_outliers(W: DenseMatrix, cfg: QuantConfig) -> OutlierSet:
    st = tensor_stats(W)
    hit = is_outlier(W.data, st.mean, st.std, cfg.sigma_n)
    # row-major nonzero already yields (row, col) order
    r, c = np.nonzero(hit)
    return OutlierSet(
        W.shape, r, c, W.data[r, c], mean=st.mean, std=st.std,
        sigma_n=sigma_threshold(cfg.sigma_n),
    )


def normal_mask_apply(x, outlier_idx) -> tuple[np.ndarray, np.ndarray]:
    """Non-outlier entries of a channel and their positions."""
    x = np.asarray(x)
    keep = np.ones(x.shape[0], dtype=bool)
    keep[np.asarray(list(outlier_idx), dtype=np.int64)] = False
    pos = np.flatnonzero(keep)
    return x[pos], pos


def scatter_outliers(W_hat: DenseMatrix, outliers: OutlierSet) -> DenseMatrix:
    if outliers.shape != W_hat.shape:
        raise IndexError(f"outlier set for {outliers.shape} applied to {W_hat.shape}")
    if not len(outliers):
        return W_hat
    out = W_hat.data.copy()
    scatter_into(out, outliers)
    return DenseMatrix(out)


def scatter_into(out: np.ndarray, outliers: OutlierSet) -> np.ndarray:
    """In-place scatter of outlier values into a C-contiguous (rows, cols) array."""
    out.reshape(-1)[outliers.row * out.shape[1] + outliers.col] = outliers.value
    return out
