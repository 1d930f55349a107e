"""KARMA: online regularized kernel subgradient descent on vectors with missing entries.

The iterate is kept implicitly as ``v = sum_i alpha_i phi(x_i)`` over stored
support vectors. Round t predicts with v_t, suffers the loss, shrinks every
coefficient by (1 - eta_t rho) and appends ``-eta_t * loss'(prediction, y_t)``.

With the default step size eta_t = 1/(rho t) the shrink factors telescope, so
the coefficient of an example first seen at round i is ``beta_i / t`` with
``beta_i = -loss'_i / rho``. The running average of the iterates
v_1 (= 0), ..., v_T then has the closed form

    avg_i = beta_i * (H_{T-1} - H_{i-1}) / T,     H_k = 1 + 1/2 + ... + 1/k,

which the model maintains in O(1) per round. Any other schedule falls back to
explicit O(t) rescaling.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np

from .core import (DimensionMismatch, LabeledExample, LossSpec, ObservedVector,
                   TrainingDiverged, check_dims, gamma_dims, stack)
from .kernel import gram, gram_from_dense, overlap_factor

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


class NormBoundViolation(AssertionError):
    pass


class KarmaModel:
    def __init__(self, dim: int, gamma: int, rho: float, loss: LossSpec | None = None,
                 eta_schedule: Callable[[int], float] | None = None, use_average: bool = False):
        if gamma < 1:
            raise ValueError("gamma must be >= 1")
        if not rho > 0:
            raise ValueError("rho must be positive")
        self.dim = int(dim)
        self.gamma = int(gamma)
        self.rho = float(rho)
        self.loss = loss or LossSpec()
        self.eta_schedule = eta_schedule
        self.use_average = use_average
        self.t = 0
        self.max_abs_x = 0.0
        self._harmonic = 0.0          # H_t after t rounds
        self._n = 0
        self._mask = np.zeros((8, self.dim), dtype=bool)
        self._vals = np.zeros((8, self.dim))
        self._support: list[ObservedVector] = []
        self._keys: dict[Hashable, int] = {}
        # default schedule: summed betas and summed beta * H_{tau-1}
        self._beta = np.zeros(8)
        self._cbeta = np.zeros(8)
        # custom schedule: explicit coefficients and their running sum
        self._alpha = np.zeros(8)
        self._alpha_sum = np.zeros(8)
        # coefficients exactly as read from a model file, until the next step
        self._loaded: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def telescoped(self) -> bool:
        return self.eta_schedule is None

    def eta(self, t: int) -> float:
        if self.eta_schedule is None:
            return 1.0 / (self.rho * t)
        return float(self.eta_schedule(t))

    @property
    def support(self) -> list[ObservedVector]:
        return list(self._support)

    @property
    def alpha(self) -> np.ndarray:
        """Coefficients of the current iterate v_{t+1}."""
        if self._loaded is not None:
            return self._loaded[0].copy()
        if self.telescoped:
            return self._beta[:self._n] / self.t if self.t else np.zeros(0)
        return self._alpha[:self._n].copy()

    @property
    def avg_alpha(self) -> np.ndarray:
        """Coefficients of (1/t) * (v_1 + ... + v_t)."""
        if self._loaded is not None:
            return self._loaded[1].copy()
        if self.t == 0:
            return np.zeros(self._n)
        if self.telescoped:
            h_prev = self._harmonic - 1.0 / self.t
            return (self._beta[:self._n] * h_prev - self._cbeta[:self._n]) / self.t
        return self._alpha_sum[:self._n] / self.t

    def coefficients(self, use_average: bool | None = None) -> np.ndarray:
        if use_average is None:
            use_average = self.use_average
        return self.avg_alpha if use_average else self.alpha

    def _kernel_row(self, x: ObservedVector) -> np.ndarray:
        if x.dim != self.dim:
            raise DimensionMismatch(f"model dim {self.dim}, input dim {x.dim}")
        n = self._n
        overlap = self._mask[:n].astype(np.float64) @ x.mask.astype(np.float64)
        return overlap_factor(overlap, self.gamma) * (self._vals[:n] @ x.zero_filled())

    def predict(self, x: ObservedVector, use_average: bool | None = None) -> float:
        if self._n == 0:
            if x.dim != self.dim:
                raise DimensionMismatch(f"model dim {self.dim}, input dim {x.dim}")
            return 0.0
        return float(self._kernel_row(x) @ self.coefficients(use_average))

    def predict_many(self, xs: Sequence[ObservedVector], use_average: bool | None = None) -> np.ndarray:
        check_dims(xs, self.dim)
        if not xs or self._n == 0:
            return np.zeros(len(xs))
        mq, xq = stack(xs, self.dim)
        K = gram_from_dense(mq, xq, self._mask[:self._n], self._vals[:self._n], self.gamma)
        return K @ self.coefficients(use_average)

    def _grow(self):
        cap = 2 * self._mask.shape[0]
        for name in ("_mask", "_vals"):
            old = getattr(self, name)
            new = np.zeros((cap, self.dim), dtype=old.dtype)
            new[:old.shape[0]] = old
            setattr(self, name, new)
        for name in ("_beta", "_cbeta", "_alpha", "_alpha_sum"):
            old = getattr(self, name)
            new = np.zeros(cap)
            new[:old.size] = old
            setattr(self, name, new)

    def _slot(self, x: ObservedVector, key: Hashable | None) -> int:
        if key is not None and key in self._keys:
            return self._keys[key]
        if self._n == self._mask.shape[0]:
            self._grow()
        i = self._n
        self._mask[i, x.observed] = True
        self._vals[i, x.observed] = x.values
        self._support.append(x)
        self._n += 1
        if key is not None:
            self._keys[key] = i
        return i

    def step(self, example: LabeledExample, key: Hashable | None = None) -> tuple[float, float]:
        """One round. Returns (prediction, loss) of the pre-update iterate.

        ``key`` identifies repeated presentations of the same example so their
        coefficients share one support slot.
        """
        x, y = example.input, example.label
        with np.errstate(over="ignore", invalid="ignore"):
            p = self.predict(x, use_average=False)
            g = float(self.loss.subgradient(p, y))
            loss = float(self.loss.value(p, y))
        if not (math.isfinite(p) and math.isfinite(g) and math.isfinite(loss)):
            raise TrainingDiverged(f"non-finite prediction {p}, loss {loss} or subgradient {g} "
                                   f"at round {self.t + 1}")
        self._loaded = None
        t = self.t + 1
        eta = self.eta(t)
        n = self._n
        if self.telescoped:
            beta = -g / self.rho
            if beta != 0.0:
                i = self._slot(x, key)
                self._beta[i] += beta
                self._cbeta[i] += beta * self._harmonic
            self._harmonic += 1.0 / t
        else:
            with np.errstate(over="ignore", invalid="ignore"):
                self._alpha_sum[:n] += self._alpha[:n]
                self._alpha[:n] *= 1.0 - eta * self.rho
                a = -eta * g
                if a != 0.0:
                    i = self._slot(x, key)
                    self._alpha[i] += a
            if not np.all(np.isfinite(self._alpha[:self._n])):
                raise TrainingDiverged(f"non-finite coefficients at round {t}")
        self.t = t
        self.max_abs_x = max(self.max_abs_x, x.max_abs())
        return p, loss

    def support_gram(self) -> np.ndarray:
        return gram(self._support, self.gamma)

    def iterate_norm(self, use_average: bool = False) -> float:
        """|v| computed as sqrt(c^T G c) over the support."""
        if self._n == 0:
            return 0.0
        c = self.coefficients(use_average)
        return math.sqrt(max(float(c @ self.support_gram() @ c), 0.0))

    def norm_bound(self, X: float | None = None) -> float:
        """L * X * sqrt(Gamma) / rho, valid for every iterate of the default schedule.

        Each update is the convex combination (1 - 1/t) v_t + (1/t)(-loss' phi / rho),
        and |loss' phi| <= L X sqrt(Gamma).
        """
        X = self.max_abs_x if X is None else X
        return self.loss.lipschitz * X * math.sqrt(gamma_dims(self.dim, self.gamma).Gamma) / self.rho

    # persistence

    def to_dict(self) -> dict:
        alpha, avg = self.alpha, self.avg_alpha
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "d": self.dim,
            "gamma": self.gamma,
            "rho": self.rho,
            "loss": self.loss.kind,
            "L": self.loss.lipschitz,
            "t": self.t,
            "use_average": self.use_average,
            "schedule": "default" if self.telescoped else "custom",
            "support": [
                {"observed": v.observed.tolist(), "values": v.values.tolist(),
                 "alpha": float(a), "avg_alpha": float(b)}
                for v, a, b in zip(self._support, alpha, avg)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict, eta_schedule: Callable[[int], float] | None = None) -> "KarmaModel":
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {d.get('format_version')!r}")
        loss = LossSpec(d["loss"], float(d["L"]))
        m = cls(d["d"], d["gamma"], d["rho"], loss, eta_schedule, bool(d.get("use_average", False)))
        t = int(d["t"])
        m.t = t
        m._harmonic = math.fsum(1.0 / k for k in range(1, t + 1))
        alphas, avgs = [], []
        for entry in d["support"]:
            v = ObservedVector(m.dim, entry["observed"], entry["values"])
            i = m._slot(v, None)
            a, b = float(entry["alpha"]), float(entry["avg_alpha"])
            alphas.append(a)
            avgs.append(b)
            m.max_abs_x = max(m.max_abs_x, v.max_abs())
            if m.telescoped:
                m._beta[i] = a * t
                m._cbeta[i] = a * t * (m._harmonic - 1.0 / t) - b * t if t else 0.0
            else:
                m._alpha[i] = a
                m._alpha_sum[i] = b * t
        m._loaded = (np.array(alphas), np.array(avgs))
        return m


def save_model(model: KarmaModel, path) -> None:
    with open(path, "w") as f:
        json.dump(model.to_dict(), f, indent=1)
        f.write("\n")


def load_model(path) -> KarmaModel:
    with open(path) as f:
        return KarmaModel.from_dict(json.load(f))


@dataclass
class TrainTrace:
    losses: list[float] = field(default_factory=list)
    predictions: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.losses)

    @property
    def cumulative_loss(self) -> np.ndarray:
        return np.cumsum(self.losses)

    def append(self, prediction: float, loss: float):
        self.predictions.append(prediction)
        self.losses.append(loss)


@dataclass
class KarmaConfig:
    gamma: int = 2
    rho: float = 0.1
    loss: str = "hinge"
    lipschitz: float = 1.0
    rounds: int | None = None       # batch mode: total rounds T; None means one pass
    seed: int = 0
    check_norms: bool = False

    def loss_spec(self) -> LossSpec:
        return LossSpec.make(self.loss, self.lipschitz if self.loss == "squared" else None)

    def to_dict(self) -> dict:
        return asdict(self)


def auto_rho(L: float, X: float, Gamma: float, B: float, T: int) -> float:
    """rho = L X sqrt(Gamma) / sqrt(B T), the regret-balancing choice."""
    return L * X * math.sqrt(Gamma) / math.sqrt(B * T)


def theory_gamma(lam: float, T: int) -> int:
    """Smallest integer gamma >= log(T) / lambda."""
    return max(1, math.ceil(math.log(T) / lam))


def train_online(stream: Sequence[LabeledExample], config: KarmaConfig | None = None,
                 eta_schedule: Callable[[int], float] | None = None,
                 X: float | None = None) -> tuple[KarmaModel, TrainTrace]:
    """Run the online learner over ``stream`` in order."""
    config = config or KarmaConfig()
    trace = TrainTrace()
    dim = check_dims([e.input for e in stream])
    model = KarmaModel(dim or 1, config.gamma, config.rho, config.loss_spec(), eta_schedule)
    for ex in stream:
        p, loss = model.step(ex)
        trace.append(p, loss)
        if config.check_norms:
            _assert_norm(model, X)
    return model, trace


def _assert_norm(model: KarmaModel, X: float | None):
    if model.loss.kind == "squared" or not model.telescoped:
        return
    norm = model.iterate_norm()
    bound = model.norm_bound(X)
    if norm > bound * (1 + 1e-9) + 1e-12:
        raise NormBoundViolation(f"|v_{model.t + 1}| = {norm} exceeds L X sqrt(Gamma) / rho = {bound}")


def batch_order(m: int, rounds: int, seed: int) -> np.ndarray:
    """In-order for rounds <= m; beyond one pass, each epoch is a fresh seeded shuffle."""
    if rounds <= m:
        return np.arange(rounds)
    rng = np.random.default_rng(seed)
    epochs = [np.arange(m)] + [rng.permutation(m) for _ in range(-(-rounds // m) - 1)]
    return np.concatenate(epochs)[:rounds]


def train_batch(sample: Sequence[LabeledExample], config: KarmaConfig | None = None,
                eta_schedule: Callable[[int], float] | None = None,
                trace: TrainTrace | None = None) -> KarmaModel:
    """Run the online learner for ``config.rounds`` rounds over ``sample`` and
    return the model with averaged coefficients active.

    Repeated presentations of one example accumulate into one support slot.
    """
    config = config or KarmaConfig()
    if not sample:
        raise ValueError("batch training needs a nonempty sample")
    dim = check_dims([e.input for e in sample])
    rounds = config.rounds or len(sample)
    model = KarmaModel(dim, config.gamma, config.rho, config.loss_spec(), eta_schedule)
    for i in batch_order(len(sample), rounds, config.seed):
        p, loss = model.step(sample[i], key=int(i))
        if trace is not None:
            trace.append(p, loss)
        if config.check_norms:
            _assert_norm(model, None)
    model.use_average = True
    log.info("trained gamma=%d rho=%g for %d rounds, %d support vectors",
             model.gamma, model.rho, model.t, model._n)
    return model


def regularized_objective(model: KarmaModel, sample: Sequence[LabeledExample],
                          C: float | None = None, use_average: bool = True) -> float:
    """(1/2)|v|^2 + (C/m) sum_i loss(v . phi(x_i), y_i), with C = 1/rho by default."""
    C = 1.0 / model.rho if C is None else C
    norm = model.iterate_norm(use_average)
    preds = model.predict_many([e.input for e in sample], use_average)
    labels = np.array([e.label for e in sample])
    return 0.5 * norm ** 2 + C * float(np.mean(model.loss.value(preds, labels)))
