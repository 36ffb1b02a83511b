"""Empirical vs. analytic two-sided Gaussian tail fraction per sigma threshold."""

import argparse
import math

import numpy as np

from ezquant import DenseMatrix, QuantConfig, detect_outliers

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--elements", type=int, default=10**6)
    p.add_argument("--sigmas", default="1,2,2.5,3,4,6")
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    n = int(math.isqrt(a.elements))
    W = DenseMatrix(np.random.default_rng(a.seed).standard_normal((n, a.elements // n)))
    print(f"{'n':>5} {'empirical %':>12} {'analytic %':>11}")
    for s in (float(v) for v in a.sigmas.split(",")):
        got = len(detect_outliers(W, QuantConfig(sigma_n=s))) / W.data.size
        print(f"{s:>5g} {100 * got:>12.5f} {100 * math.erfc(s / math.sqrt(2)):>11.5f}")
