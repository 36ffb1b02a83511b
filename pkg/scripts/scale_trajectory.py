"""Scale vs. optimization step for a few Gaussian channels (cf. a steps/range table)."""

import argparse

import numpy as np

from ezquant import QuantConfig
from ezquant.optimize import optimize_ranges

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--length", type=int, default=4096)
    p.add_argument("--sigma", type=float, default=0.19)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    xt = np.random.default_rng(a.seed).standard_normal((a.channels, a.length)) * a.sigma
    res = optimize_ranges(xt, None, QuantConfig(steps=a.steps, lr=a.lr), record=True)
    show = sorted({0, 1, 5, 10, 20, 50, 100, 150, a.steps} & set(range(a.steps + 1)))
    print("step " + " ".join(f"{'ch' + str(c):>10}" for c in range(a.channels)))
    for t in show:
        print(f"{t:>4} " + " ".join(f"{res.trace_scales[t, c]:>10.5f}" for c in range(a.channels)))
    print("best " + " ".join(f"{s:>10.5f}" for s in res.scales))
