"""CPU microbenchmark of dequantization vs. outlier scatter cost."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .outliers import scatter_into
from .pipeline import dequantize_normals
from .rtn import pack_levels
from .types import ChannelScales, OutlierSet, QuantizedWeight

DEFAULT_RATIOS = (0.0001, 0.001, 0.005, 0.01, 0.05, 0.1)


@dataclass
class BenchRow:
    ratio: float
    outliers: int
    dequant_ms: float
    scatter_ms: float

    @property
    def total_ms(self) -> float:
        return self.dequant_ms + self.scatter_ms

    @property
    def overhead_pct(self) -> float:
        return 100.0 * self.scatter_ms / self.total_ms


def _synthetic(rows, cols, rng) -> QuantizedWeight:
    levels = rng.integers(-7, 9, size=rows * cols, dtype=np.int16)
    scales = rng.uniform(0.01, 0.1, size=cols).astype(np.float32)
    return QuantizedWeight(
        rows, cols, 4, pack_levels(levels, 4), ChannelScales(scales), OutlierSet.empty((rows, cols))
    )


def _outliers(rows, cols, ratio, rng) -> OutlierSet:
    n = int(round(ratio * rows * cols))
    flat = np.sort(rng.choice(rows * cols, size=n, replace=False))
    vals = rng.standard_normal(n).astype(np.float32) * 10
    return OutlierSet((rows, cols), flat // cols, flat % cols, vals)


def dequant_bench(rows: int, cols: int, ratios=DEFAULT_RATIOS, repetitions: int = 15, seed: int = 0):
    """Median wall time of unpack+rescale and of the outlier scatter per ratio.

    Ratios are measured interleaved inside each repetition so drift in
    machine load hits all of them alike.
    """
    ratios = [float(r) for r in ratios]
    if any(not 0.0 <= r <= 1.0 for r in ratios):
        raise ValueError("ratios must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    q = _synthetic(rows, cols, rng)
    sets = [_outliers(rows, cols, r, rng) for r in ratios]

    deq = []
    sc = [[] for _ in ratios]
    for _ in range(repetitions):
        t0 = time.perf_counter()
        out = dequantize_normals(q)
        deq.append(time.perf_counter() - t0)
        for i, o in enumerate(sets):
            t0 = time.perf_counter()
            if len(o):
                scatter_into(out, o)
            sc[i].append(time.perf_counter() - t0)

    d = 1e3 * float(np.median(deq))
    return [BenchRow(r, len(o), d, 1e3 * float(np.median(t))) for r, o, t in zip(ratios, sets, sc)]


def format_bench(rows: list[BenchRow]) -> str:
    lines = [f"{'ratio %':>8} {'outliers':>10} {'dequant ms':>11} {'scatter ms':>11} {'overhead %':>11}"]
    for r in rows:
        lines.append(
            f"{100 * r.ratio:>8.3f} {r.outliers:>10d} {r.dequant_ms:>11.3f} "
            f"{r.scatter_ms:>11.4f} {r.overhead_pct:>11.3f}"
        )
    return "\n".join(lines)
