"""Read a Gram matrix CSV written by ``karma gram`` and report symmetry and spectrum.

    karma gram --data data.csv --gamma 3 --out gram.csv
    python scripts/check_gram_psd.py gram.csv
"""
import argparse
import sys

import numpy as np


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("path")
    p.add_argument("--tol", type=float, default=1e-9, help="allowed -lambda_min / lambda_max")
    args = p.parse_args()
    G = np.loadtxt(args.path, delimiter=",", ndmin=2)
    symmetric = bool(np.array_equal(G, G.T))
    ev = np.linalg.eigvalsh((G + G.T) / 2)
    top = max(ev.max(), 0.0)
    ratio = -ev.min() / top if top > 0 else 0.0
    ok = symmetric and ratio <= args.tol
    print(f"n={G.shape[0]} symmetric={symmetric} lambda_min={ev.min():.6g} lambda_max={ev.max():.6g} "
          f"psd={'yes' if ok else 'no'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
