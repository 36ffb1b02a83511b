"""Dequantization vs. outlier-scatter timing across outlier ratios."""

import argparse

from ezquant.bench import DEFAULT_RATIOS, dequant_bench, format_bench

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--rows", type=int, default=4096)
    p.add_argument("--cols", type=int, default=4096)
    p.add_argument("--reps", type=int, default=15)
    a = p.parse_args()
    print(format_bench(dequant_bench(a.rows, a.cols, DEFAULT_RATIOS, a.reps)))
