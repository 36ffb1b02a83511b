"""Upper bound on the mean error reduction of the planted-outlier suite.

For every column the brute-force grid optimum replaces Adam, which gives the
best reduction any per-channel scale search can reach on these matrices.
Same seeds and construction as the dominance acceptance test.
"""

import argparse
import time

import numpy as np

from ezquant import DenseMatrix, QuantConfig, detect_outliers, easyquant_tensor
from ezquant.optimize import scale_grid
from ezquant.rtn import channel_errors, initial_scales
from ezquant.synthetic import planted_gaussian


def oracle_reduction(W: DenseMatrix, cfg: QuantConfig, grid_points: int) -> float:
    normal = ~detect_outliers(W, cfg).mask()
    xt = np.ascontiguousarray(W.data.T, dtype=np.float64)
    nt = np.ascontiguousarray(normal.T)
    s0 = initial_scales(xt, nt, cfg.l_max)
    e0 = channel_errors(xt, s0, nt, cfg.l_min, cfg.l_max)
    best = np.empty_like(e0)
    for j in range(xt.shape[0]):
        g = scale_grid(s0[j], grid_points)
        xs = np.broadcast_to(xt[j], (g.size, xt.shape[1]))
        ns = np.broadcast_to(nt[j], xs.shape)
        best[j] = channel_errors(xs, g, ns, cfg.l_min, cfg.l_max).min()
    return 1.0 - best.sum() / e0.sum()


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--tensors", type=int, default=50)
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--grid", type=int, default=400)
    p.add_argument("--adam", action="store_true", help="also report the Adam reduction")
    a = p.parse_args()
    cfg = QuantConfig()
    orc, adam = [], []
    t0 = time.perf_counter()
    for seed in range(a.tensors):
        W = DenseMatrix(planted_gaussian(np.random.default_rng(seed), a.size, a.size)[0])
        orc.append(oracle_reduction(W, cfg, a.grid))
        line = f"seed {seed:>3}  oracle {100 * orc[-1]:6.2f}%"
        if a.adam:
            q = easyquant_tensor(W, cfg)
            adam.append(1 - q.final_error / q.rtn_error)
            line += f"  adam {100 * adam[-1]:6.2f}%"
        print(line, flush=True)
    print(f"mean oracle reduction {100 * np.mean(orc):.2f}% "
          f"(min {100 * np.min(orc):.2f}, max {100 * np.max(orc):.2f})")
    if adam:
        print(f"mean adam reduction   {100 * np.mean(adam):.2f}%")
    print(f"{time.perf_counter() - t0:.1f}s")
