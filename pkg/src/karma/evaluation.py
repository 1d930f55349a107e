"""Metrics, imputation baselines, holdout selection of gamma, and the regret harness."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .core import CapExceeded, DimensionMismatch, LabeledExample, LossSpec, ObservedVector, check_dims, gamma_dims
from .datagen import GroundTruth
from .learner import KarmaConfig, KarmaModel, auto_rho, batch_order, theory_gamma, train_batch, train_online
from .reference import DensePredictorF0, improper_weights, predict_f0
from .regularity import check_regularity

log = logging.getLogger(__name__)


class Predictor(Protocol):
    def predict_many(self, xs: Sequence[ObservedVector]) -> np.ndarray: ...


@dataclass
class Metrics:
    mean_loss: float
    error_rate: float
    n: int

    def to_dict(self):
        return {"mean_loss": self.mean_loss, "error_rate": self.error_rate, "n": self.n}


def predictions(model, data: Sequence[LabeledExample]) -> np.ndarray:
    xs = [e.input for e in data]
    if hasattr(model, "predict_many"):
        return np.asarray(model.predict_many(xs), dtype=np.float64)
    return np.array([model(x) for x in xs], dtype=np.float64)


def evaluate(model, data: Sequence[LabeledExample], loss: LossSpec) -> Metrics:
    """Mean loss and 0/1 error. A prediction of exactly 0 counts as an error."""
    if not data:
        raise ValueError("cannot evaluate on an empty dataset")
    p = predictions(model, data)
    y = np.array([e.label for e in data])
    return Metrics(float(np.mean(loss.value(p, y))), float(np.mean(y * p <= 0)), len(data))


class DenseLinearModel:
    """Linear model on imputed vectors: missing coordinates take ``fill`` values."""

    def __init__(self, w: np.ndarray, w_avg: np.ndarray, fill: np.ndarray, use_average: bool = True):
        self.w = w
        self.w_avg = w_avg
        self.fill = fill
        self.use_average = use_average

    def impute(self, x: ObservedVector) -> np.ndarray:
        if x.dim != self.fill.size:
            raise DimensionMismatch(f"model dim {self.fill.size}, input dim {x.dim}")
        return x.filled(self.fill)

    def predict(self, x: ObservedVector, use_average: bool | None = None) -> float:
        avg = self.use_average if use_average is None else use_average
        return float((self.w_avg if avg else self.w) @ self.impute(x))

    def predict_many(self, xs: Sequence[ObservedVector], use_average: bool | None = None) -> np.ndarray:
        return np.array([self.predict(x, use_average) for x in xs])


def train_dense(sample: Sequence[LabeledExample], fill: np.ndarray, config: KarmaConfig,
                online_predictions: list | None = None) -> DenseLinearModel:
    """Same regularized subgradient recursion as the kernel learner, in R^d."""
    loss = config.loss_spec()
    rounds = config.rounds or len(sample)
    w = np.zeros(fill.size)
    w_sum = np.zeros(fill.size)
    X = np.array([e.input.filled(fill) for e in sample])
    for t, i in enumerate(batch_order(len(sample), rounds, config.seed), start=1):
        w_sum += w
        p = float(w @ X[i])
        if online_predictions is not None:
            online_predictions.append(p)
        g = float(loss.subgradient(p, sample[i].label))
        eta = 1.0 / (config.rho * t)
        w = (1.0 - eta * config.rho) * w - eta * g * X[i]
    return DenseLinearModel(w, w_sum / rounds, fill)


def zero_impute_baseline(train: Sequence[LabeledExample], config: KarmaConfig | None = None,
                         online_predictions: list | None = None) -> DenseLinearModel:
    if not train:
        raise ValueError("baseline needs a nonempty training set")
    d = check_dims([e.input for e in train])
    return train_dense(train, np.zeros(d), config or KarmaConfig(gamma=1), online_predictions)


def observed_means(train: Sequence[LabeledExample]) -> np.ndarray:
    """Per-coordinate mean over the examples observing it; 0 where never observed."""
    d = check_dims([e.input for e in train])
    total, count = np.zeros(d), np.zeros(d)
    for e in train:
        total[e.input.observed] += e.input.values
        count[e.input.observed] += 1
    return np.divide(total, count, out=np.zeros(d), where=count > 0)


def mean_impute_baseline(train: Sequence[LabeledExample], config: KarmaConfig | None = None) -> DenseLinearModel:
    if not train:
        raise ValueError("baseline needs a nonempty training set")
    return train_dense(train, observed_means(train), config or KarmaConfig(gamma=1))


@dataclass
class EvalReport:
    selected_gamma: int
    holdout_losses: dict[int, float]
    metrics: dict[str, Metrics] = field(default_factory=dict)
    models: dict[int, KarmaModel] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "selected_gamma": self.selected_gamma,
            "holdout_losses": {str(g): v for g, v in self.holdout_losses.items()},
            "metrics": {k: m.to_dict() for k, m in self.metrics.items()},
        }


def holdout_select_gamma(train: Sequence[LabeledExample], holdout: Sequence[LabeledExample],
                         gamma_grid: Sequence[int], config: KarmaConfig | None = None) -> tuple[int, EvalReport]:
    """Train one averaged model per gamma and keep the lowest holdout loss.

    Ties go to the smaller gamma. Because 1 is in the grid, the selected model
    never does worse on the holdout than zero-imputation (gamma = 1).
    """
    config = config or KarmaConfig()
    grid = sorted(set(int(g) for g in gamma_grid))
    if not grid or 1 not in grid:
        raise ValueError("gamma grid must be nonempty and contain 1")
    if not holdout:
        raise ValueError("holdout set is empty")
    loss = config.loss_spec()
    report = EvalReport(1, {})
    for g in grid:
        cfg = KarmaConfig(**{**config.to_dict(), "gamma": g})
        model = train_batch(train, cfg)
        m = evaluate(model, holdout, loss)
        report.models[g] = model
        report.metrics[f"gamma={g}"] = m
        report.holdout_losses[g] = m.mean_loss
        log.info("gamma=%d holdout loss %.6g error %.4f", g, m.mean_loss, m.error_rate)
    best = min(grid, key=lambda g: (report.holdout_losses[g], g))
    report.selected_gamma = best
    return best, report


def split_holdout(data: Sequence[LabeledExample], fraction: float, seed: int):
    """Seeded disjoint (train, holdout) split."""
    if not 0 < fraction < 1:
        raise ValueError("holdout fraction must lie in (0, 1)")
    n = len(data)
    k = max(1, int(round(fraction * n)))
    if k >= n:
        raise ValueError("holdout would leave no training data")
    perm = np.random.default_rng(seed).permutation(n)
    hold = set(perm[:k].tolist())
    return ([e for i, e in enumerate(data) if i not in hold],
            [e for i, e in enumerate(data) if i in hold])


@dataclass
class RegretRecord:
    algorithm_loss: float
    comparator_loss: float
    regret: float
    bound: float
    params: dict
    curve: np.ndarray = field(repr=False, default_factory=lambda: np.zeros((0, 4)))

    @property
    def within_bound(self) -> bool:
        return self.regret <= self.bound

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "algorithm_loss": self.algorithm_loss,
            "comparator_loss": self.comparator_loss,
            "regret": self.regret,
            "bound": self.bound,
            "within_bound": self.within_bound,
            "params": self.params,
        }


def regret_bound(L: float, X: float, Gamma: float, rho: float, B: float, T: int, lam: float, gamma: int) -> float:
    """2 L^2 X^2 Gamma (1 + log T) / rho + rho T B / 2 + exp(-lambda gamma) L T / lambda."""
    if T == 0:
        return 0.0
    return (2 * L ** 2 * X ** 2 * Gamma * (1 + math.log(T)) / rho
            + rho * T * B / 2
            + math.exp(-lam * gamma) * L * T / lam)


def f0_features(xs: Sequence[ObservedVector], subspace) -> np.ndarray:
    """Rows u_x with predict_f0(w, x) = w . u_x: the pseudo-inverse reconstruction zero-padded to R^d."""
    U = np.zeros((len(xs), subspace.dim))
    for i, x in enumerate(xs):
        if x.observed.size:
            Qoo = subspace.projection[np.ix_(x.observed, x.observed)]
            U[i, x.observed] = np.linalg.pinv(Qoo, rcond=1e-10, hermitian=True) @ x.values
    return U


def best_unit_ball_weights(U: np.ndarray, labels: np.ndarray, loss: LossSpec,
                           w0: np.ndarray | None = None, iters: int = 2000) -> tuple[np.ndarray, float]:
    """Approximately minimize sum_i loss(w . U_i, y_i) over |w| <= 1 by projected
    subgradient descent; returns the best iterate seen and its total loss."""
    d = U.shape[1]
    w = np.zeros(d) if w0 is None else np.array(w0, dtype=np.float64)
    best_w, best = w.copy(), float(np.sum(loss.value(U @ w, labels)))
    scale = max(float(np.linalg.norm(U, axis=1).max(initial=0.0)) * loss.lipschitz * math.sqrt(len(U)), 1e-300)
    for t in range(1, iters + 1):
        p = U @ w
        g = U.T @ loss.subgradient(p, labels)
        w = w - (2.0 / (scale * math.sqrt(t))) * g
        n = np.linalg.norm(w)
        if n > 1:
            w /= n
        total = float(np.sum(loss.value(U @ w, labels)))
        if total < best:
            best_w, best = w.copy(), total
    return best_w, best


@dataclass
class RegretConfig:
    loss: str = "hinge"
    lipschitz: float = 1.0
    gamma: int | None = None       # None: ceil(log T / lambda)
    rho: float | None = None       # None: L X sqrt(Gamma) / sqrt(B T)
    B: float | None = None         # None: |improper weights|^2 if small, else Gamma |w|^2
    embed_cap: int = 10 ** 6
    optimize_comparator: bool = True   # also search |w| <= 1 for a lower-loss comparator


def regret_harness(stream: Sequence[LabeledExample], truth: GroundTruth | None,
                   config: RegretConfig | None = None) -> RegretRecord:
    """Run the online learner and compare against the known realizable predictor.

    The comparator is f0 with Q = P_E and either w = P_E w* or, if lower in total
    loss, the best |w| <= 1 found by projected subgradient descent. Its loss is at
    least the best loss over the comparator class, so the reported regret is a
    lower estimate of the regret against the best comparator in hindsight.
    """
    if truth is None:
        raise ValueError("regret harness needs ground truth (subspace and w*)")
    config = config or RegretConfig()
    loss = LossSpec.make(config.loss, config.lipschitz if config.loss == "squared" else None)
    T = len(stream)
    if T == 0:
        return RegretRecord(0.0, 0.0, 0.0, 0.0, {"T": 0})
    xs = [e.input for e in stream]
    d = check_dims(xs, truth.subspace.dim)
    report = check_regularity(xs, truth.subspace)
    lam = report.lambda_
    if lam <= 0:
        raise ValueError("stream is not lambda-regular for the given subspace (lambda = 0)")
    X = max(x.max_abs() for x in xs)
    gamma = config.gamma or theory_gamma(lam, T)
    Gamma = gamma_dims(d, gamma).Gamma
    w = truth.subspace.projection @ truth.wstar
    B = config.B
    if B is None:
        try:
            v = improper_weights(w, truth.subspace.complement(), gamma, cap=config.embed_cap)
            B = float(v.vector @ v.vector)
        except CapExceeded:
            B = Gamma * float(w @ w)
    rho = config.rho or auto_rho(loss.lipschitz, X, Gamma, B, T)

    model, trace = train_online(stream, KarmaConfig(gamma=gamma, rho=rho, loss=config.loss,
                                                    lipschitz=config.lipschitz))
    labels = np.array([e.label for e in stream])
    comp_w = w
    if config.optimize_comparator:
        U = f0_features(xs, truth.subspace)
        opt_w, opt_total = best_unit_ball_weights(U, labels, loss, w0=w / max(1.0, np.linalg.norm(w)))
        if opt_total < float(np.sum(loss.value(U @ w, labels))):
            comp_w = opt_w
    comp = DensePredictorF0(comp_w, truth.subspace)
    comp_pred = np.array([predict_f0(comp, x) for x in xs])
    comp_loss = loss.value(comp_pred, labels)
    alg_loss = np.array(trace.losses)
    t = np.arange(1, T + 1)
    curve = np.column_stack([t, np.cumsum(alg_loss), np.cumsum(comp_loss),
                             np.cumsum(alg_loss) - np.cumsum(comp_loss)])
    bound = regret_bound(loss.lipschitz, X, Gamma, rho, B, T, lam, gamma)
    params = {"T": T, "d": d, "gamma": gamma, "Gamma": Gamma, "lambda": lam, "X": X,
              "L": loss.lipschitz, "rho": rho, "B": B, "loss": loss.kind,
              "comparator_w": comp_w.tolist()}
    return RegretRecord(float(alg_loss.sum()), float(comp_loss.sum()),
                        float(alg_loss.sum() - comp_loss.sum()), bound, params, curve)
