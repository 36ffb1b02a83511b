"""Finite-difference check of the analytic range gradient."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .optimize import range_gradient
from .types import QuantConfig


def fd_error(x: np.ndarray, s: float, l_min: int, l_max: int) -> float:
    # kept apart from the quantizer on purpose: plain floor rounding, exact sum
    y = np.minimum(np.maximum(x / s, l_min), l_max)
    q = np.sign(y) * np.floor(np.abs(y) + 0.5)
    return math.fsum((s * q - x) ** 2)


def fd_gradient(x, s: float, cfg: QuantConfig, rel_step: float = 1e-6) -> float:
    h = rel_step * s
    x = np.asarray(x, dtype=np.float64)
    up = fd_error(x, s + h, cfg.l_min, cfg.l_max)
    down = fd_error(x, s - h, cfg.l_min, cfg.l_max)
    return (up - down) / (2 * h)


def half_integer_distance(x, s: float) -> float:
    y = np.asarray(x, dtype=np.float64) / s
    return float(np.min(np.abs(y - np.floor(y) - 0.5)))


def relative_error(a: float, b: float) -> float:
    denom = max(abs(a), abs(b))
    return 0.0 if denom == 0 else abs(a - b) / denom


@dataclass
class GradcheckResult:
    trials: int
    passed: int
    worst: float
    seconds: float
    failures: list = field(default_factory=list)

    @property
    def pass_rate(self) -> float:
        return self.passed / self.trials if self.trials else 1.0


def run_gradcheck(
    trials: int = 1000,
    seed: int = 0,
    cfg: QuantConfig | None = None,
    tol: float = 1e-3,
    min_gap: float = 1e-4,
) -> GradcheckResult:
    """Random channels and scales away from rounding kinks; analytic vs central FD.

    A third of the trials also carry a random outlier mask.
    """
    cfg = cfg or QuantConfig()
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    passed, worst, failures = 0, 0.0, []
    for i in range(trials):
        n = int(rng.integers(16, 513))
        x = rng.standard_normal(n) * float(np.exp(rng.uniform(-4, 1)))
        mask = []
        if i % 3 == 2:
            mask = sorted(rng.choice(n, size=int(rng.integers(1, n // 8 + 2)), replace=False).tolist())
        keep = np.ones(n, dtype=bool)
        keep[mask] = False
        xn = x[keep]
        s0 = np.abs(xn).max() / cfg.l_max
        while True:
            s = s0 * rng.uniform(0.3, 1.2)
            if half_integer_distance(xn, s) > min_gap:
                break
        g = range_gradient(x, mask, s, cfg)
        fd = fd_gradient(xn, s, cfg)
        err = relative_error(g, fd)
        worst = max(worst, err)
        if err < tol:
            passed += 1
        else:
            failures.append((i, n, s, g, fd, err))
    return GradcheckResult(trials, passed, worst, time.perf_counter() - t0, failures)
