"""RTN vs. outliers-only vs. EasyQuant on a planted-outlier suite."""

import argparse

import numpy as np

from ezquant import DenseMatrix, QuantConfig, easyquant_tensor, outliers_only_tensor, rtn_tensor
from ezquant.synthetic import planted_gaussian

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--tensors", type=int, default=10)
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--ratio", type=float, default=0.005)
    p.add_argument("--bits", type=int, default=4)
    p.add_argument("--steps", type=int, default=200)
    a = p.parse_args()
    cfg = QuantConfig(bits=a.bits, steps=a.steps)
    print(f"{'seed':>4} {'rtn':>12} {'outliers-only':>14} {'easyquant':>12} {'red %':>7} ordered")
    for seed in range(a.tensors):
        W = DenseMatrix(planted_gaussian(np.random.default_rng(seed), a.size, a.size, a.ratio)[0])
        r = rtn_tensor(W, cfg).final_error
        o = outliers_only_tensor(W, cfg).final_error
        e = easyquant_tensor(W, cfg).final_error
        print(f"{seed:>4} {r:>12.4f} {o:>14.4f} {e:>12.4f} {100 * (1 - e / o):>7.2f} {e < o < r}")
