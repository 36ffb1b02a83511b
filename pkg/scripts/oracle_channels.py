"""Per-channel Adam vs. grid-oracle error ratios on unit-Gaussian channels.

Lists the channels whose tuned error exceeds the oracle by more than
``--tol`` and how far longer runs move them.
"""

import argparse
from dataclasses import replace

import numpy as np

from ezquant import QuantConfig
from ezquant.optimize import grid_errors, optimize_channel_range
from ezquant.rtn import channel_errors

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--channels", type=int, default=100)
    p.add_argument("--length", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1.05)
    a = p.parse_args()
    cfg = QuantConfig()
    rng = np.random.default_rng(a.seed)
    ratios = []
    for i in range(a.channels):
        x = rng.standard_normal(a.length)
        s, tr = optimize_channel_range(x, [], cfg)
        e = channel_errors(x[None], np.array([s]), None, cfg.l_min, cfg.l_max)[0]
        grid, errs = grid_errors(x, [], cfg)
        k = int(np.argmin(errs))
        ratios.append(e / errs[k])
        if ratios[-1] > a.tol:
            s_long, _ = optimize_channel_range(x, [], replace(cfg, steps=1000))
            e_long = channel_errors(x[None], np.array([s_long]), None, cfg.l_min, cfg.l_max)[0]
            print(f"channel {i:>3}: s0 {tr.scales[0]:.4f}  adam s {s:.4f} err {e:.3f}  "
                  f"oracle s {grid[k]:.4f} err {errs[k]:.3f}  ratio {ratios[-1]:.4f}  "
                  f"1000 steps ratio {e_long / errs[k]:.4f}")
    r = np.array(ratios)
    print(f"{int(np.sum(r > a.tol))}/{r.size} channels above {a.tol}; "
          f"mean ratio {r.mean():.4f}, worst {r.max():.4f}")
