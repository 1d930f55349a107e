"""Measured online regret against the theoretical bound over seeded streams.

    python scripts/regret_sweep.py --seeds 20 --T 1000 --curve-dir curves/
"""
import argparse
import csv
import pathlib
import time

from karma.datagen import GeneratorConfig, generate
from karma.evaluation import RegretConfig, regret_harness


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--T", type=int, default=1000)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--rank", type=int, default=2)
    p.add_argument("--lambda0", type=float, default=0.3)
    p.add_argument("--keep-prob", type=float, default=0.6)
    p.add_argument("--margin", type=float, default=0.05)
    p.add_argument("--loss", choices=["hinge", "logistic"], default="hinge")
    p.add_argument("--curve-dir", help="write one regret curve CSV per seed here")
    args = p.parse_args()
    if args.curve_dir:
        pathlib.Path(args.curve_dir).mkdir(parents=True, exist_ok=True)
    print("seed  lambda  gamma  rho         regret      bound       ratio     seconds")
    for seed in range(args.seeds):
        stream, truth = generate(GeneratorConfig(d=args.d, rank=args.rank, lambda0=args.lambda0, n=args.T,
                                                 keep_prob=args.keep_prob, margin=args.margin, seed=seed))
        start = time.perf_counter()
        rec = regret_harness(stream, truth, RegretConfig(loss=args.loss))
        pr = rec.params
        print(f"{seed:<5} {pr['lambda']:<7.3f} {pr['gamma']:<6} {pr['rho']:<11.4g} {rec.regret:<11.4g} "
              f"{rec.bound:<11.4g} {rec.regret / rec.bound:<9.3g} {time.perf_counter() - start:.2f}")
        if args.curve_dir:
            with open(pathlib.Path(args.curve_dir) / f"regret_seed{seed}.csv", "w", newline="") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(["round", "algorithm_loss", "comparator_loss", "regret"])
                w.writerows(rec.curve.tolist())


if __name__ == "__main__":
    main()
