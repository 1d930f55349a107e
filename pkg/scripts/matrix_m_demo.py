"""Train on the three-type matrix-M fixture and show the averaged model's predictions per round.

    python scripts/matrix_m_demo.py --gamma 2 --rho 0.1 --rounds 30
"""
import argparse

import numpy as np

from karma.core import LossSpec
from karma.datagen import matrix_m_fixture
from karma.learner import KarmaModel


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--gamma", type=int, default=2)
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--rounds", type=int, default=30)
    args = p.parse_args()
    types = matrix_m_fixture()
    labels = np.array([e.label for e in types])
    hinge = LossSpec()
    model = KarmaModel(4, args.gamma, args.rho, hinge)
    for t in range(1, args.rounds + 1):
        model.step(types[(t - 1) % 3], key=(t - 1) % 3)
        preds = model.predict_many([e.input for e in types], use_average=True)
        loss = float(np.sum(hinge.value(preds, labels)))
        print(f"round {t:3d}  predictions " + " ".join(f"{v:+8.3f}" for v in preds) + f"  hinge {loss:.4f}")


if __name__ == "__main__":
    main()
