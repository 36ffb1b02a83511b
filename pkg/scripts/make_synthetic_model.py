"""Write a toy transformer-shaped model (planted-outlier matrices + manifest)."""

import argparse

from ezquant.synthetic import synthetic_model

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out")
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--rows", type=int, default=512)
    p.add_argument("--cols", type=int, default=512)
    p.add_argument("--ratio", type=float, default=0.005)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vectors", action="store_true", help="also emit 1-D norm weights")
    a = p.parse_args()
    path = synthetic_model(a.out, a.layers, (a.rows, a.cols), a.ratio, a.seed, a.vectors)
    print(path)
