"""Per-channel quantization-range optimization.

The step size of every channel is tuned by Adam on the masked reconstruction
error, using the piecewise-exact gradient
``d/ds sum (s*q_i - x_i)^2 = 2 * sum (s*q_i - x_i) * q_i`` with
``q_i = clamp(round(x_i / s))``. Where the clamp is active ``Q = s * q`` holds
exactly, so the clamped level is the right derivative there too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rtn import _check_scale, channel_errors, channel_levels, initial_scales
from .types import QuantConfig

MIN_SCALE = 1e-12


@dataclass(frozen=True)
class AdamState:
    m: float = 0.0
    v: float = 0.0
    t: int = 0


@dataclass(frozen=True)
class OptimizeTrace:
    steps: np.ndarray
    scales: np.ndarray
    errors: np.ndarray
    best_step: int
    best_scale: float
    best_error: float

    def __len__(self):
        return self.steps.size


@dataclass
class RangeResult:
    """Batched optimizer output, one entry per channel."""

    initial: np.ndarray
    initial_error: np.ndarray
    scales: np.ndarray
    errors: np.ndarray
    selected_step: np.ndarray
    # (steps + 1, channels) when recorded
    trace_scales: np.ndarray | None = None
    trace_errors: np.ndarray | None = None


def _residuals(xt, s, normal, l_min, l_max):
    q = channel_levels(xt, s, l_min, l_max)
    r = s[:, None] * q - xt
    if normal is not None:
        r = np.where(normal, r, 0.0)
    return q, r


def channel_gradients(xt, s, normal, l_min, l_max) -> np.ndarray:
    q, r = _residuals(xt, s, normal, l_min, l_max)
    return 2.0 * np.sum(r * q, axis=1)


def _error_and_gradient(xt, s, normal, l_min, l_max):
    q, r = _residuals(xt, s, normal, l_min, l_max)
    return np.sum(r * r, axis=1), 2.0 * np.sum(r * q, axis=1)


def _adam_update(m, v, t, s, g, cfg: QuantConfig):
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    m = b1 * m + (1.0 - b1) * g
    v = b2 * v + (1.0 - b2) * (g * g)
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    s = np.maximum(s - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps), MIN_SCALE)
    return m, v, s


def optimize_ranges(
    xt: np.ndarray, normal: np.ndarray | None, cfg: QuantConfig, record: bool = False
) -> RangeResult:
    """Run Adam on every channel row of ``xt`` independently.

    ``normal`` is a boolean array like ``xt``; False entries are outliers and
    are left out of the scale init, the gradient and the error.
    """
    xt = np.asarray(xt, dtype=np.float64)
    lo, hi = cfg.l_min, cfg.l_max
    s = initial_scales(xt, normal, hi)
    s0 = s.copy()
    e0, g = _error_and_gradient(xt, s, normal, lo, hi)

    best_s, best_e = s.copy(), e0.copy()
    best_t = np.zeros(s.size, dtype=np.int64)
    fixed = cfg.select == "fixed_step"
    if fixed and cfg.select_step == 0:
        best_s, best_e = s0.copy(), e0.copy()

    ts = te = None
    if record:
        ts = np.empty((cfg.steps + 1, s.size))
        te = np.empty((cfg.steps + 1, s.size))
        ts[0], te[0] = s, e0

    m = np.zeros_like(s)
    v = np.zeros_like(s)
    for t in range(1, cfg.steps + 1):
        m, v, s = _adam_update(m, v, t, s, g, cfg)
        e, g = _error_and_gradient(xt, s, normal, lo, hi)
        if record:
            ts[t], te[t] = s, e
        if fixed:
            if t == cfg.select_step:
                best_s, best_e = s.copy(), e.copy()
                best_t[:] = t
        else:
            better = e < best_e
            best_s = np.where(better, s, best_s)
            best_e = np.where(better, e, best_e)
            best_t = np.where(better, t, best_t)

    # a fixed-step pick never loses to the starting point
    worse = best_e > e0
    best_s = np.where(worse, s0, best_s)
    best_e = np.where(worse, e0, best_e)
    best_t = np.where(worse, 0, best_t)
    return RangeResult(s0, e0, best_s, best_e, best_t, ts, te)


def _channel_inputs(x, mask):
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    normal = None
    if mask is not None and len(mask):
        normal = np.ones_like(x, dtype=bool)
        normal[0, np.asarray(list(mask), dtype=np.int64)] = False
    return x, normal


def range_gradient(x, mask, s: float, cfg: QuantConfig) -> float:
    """d r / d s for one channel, outlier positions in ``mask`` excluded."""
    s = _check_scale(s).reshape(1)
    x, normal = _channel_inputs(x, mask)
    return float(channel_gradients(x, s, normal, cfg.l_min, cfg.l_max)[0])


def adam_step(state: AdamState, s: float, g: float, cfg: QuantConfig) -> tuple[AdamState, float]:
    t = state.t + 1
    m, v, s_new = _adam_update(
        np.array([state.m]), np.array([state.v]), t, np.array([float(s)]), np.array([float(g)]), cfg
    )
    return AdamState(float(m[0]), float(v[0]), t), float(s_new[0])


def optimize_channel_range(x, mask, cfg: QuantConfig) -> tuple[float, OptimizeTrace]:
    x, normal = _channel_inputs(x, mask)
    if normal is not None and not normal.any():
        empty = np.zeros(0)
        return 1.0, OptimizeTrace(empty.astype(np.int64), empty, empty, 0, 1.0, 0.0)
    res = optimize_ranges(x, normal, cfg, record=True)
    trace = OptimizeTrace(
        steps=np.arange(cfg.steps + 1),
        scales=res.trace_scales[:, 0].copy(),
        errors=res.trace_errors[:, 0].copy(),
        best_step=int(res.selected_step[0]),
        best_scale=float(res.scales[0]),
        best_error=float(res.errors[0]),
    )
    return float(res.scales[0]), trace


def scale_grid(s0: float, grid_points: int) -> np.ndarray:
    """Uniform grid over [s0/8, 1.25*s0] plus s0 itself, ascending."""
    return np.union1d(np.linspace(s0 / 8, s0 * 1.25, grid_points), [s0])


def grid_errors(x, mask, cfg: QuantConfig, grid_points: int = 2000):
    """(grid, errors) of the masked reconstruction error over ``scale_grid``."""
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    x, normal = _channel_inputs(x, mask)
    s0 = float(initial_scales(x, normal, cfg.l_max)[0])
    grid = scale_grid(s0, grid_points)
    xs = np.broadcast_to(x, (grid.size, x.shape[1]))
    ns = None if normal is None else np.broadcast_to(normal, xs.shape)
    return grid, channel_errors(xs, grid, ns, cfg.l_min, cfg.l_max)


def brute_force_optimal_scale(x, mask, cfg: QuantConfig, grid_points: int = 2000) -> float:
    grid, err = grid_errors(x, mask, cfg, grid_points)
    # argmin returns the first hit, i.e. the smallest scale among ties
    return float(grid[int(np.argmin(err))])
