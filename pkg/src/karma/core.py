"""Shared value types: vectors with missing coordinates, labeled examples, losses."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

LOSS_KINDS = ("hinge", "logistic", "squared")


class DimensionMismatch(ValueError):
    pass


class CapExceeded(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class ObservedVector:
    """A d-dimensional vector of which only the coordinates in ``observed`` are known.

    Missing coordinates are absent, not NaN. ``observed`` is strictly increasing
    and may be empty.
    """

    __slots__ = ("dim", "observed", "values")

    def __init__(self, dim: int, observed: Iterable[int] = (), values: Iterable[float] = ()):
        observed = np.asarray(list(observed), dtype=np.int64).reshape(-1)
        values = np.asarray(list(values), dtype=np.float64).reshape(-1)
        dim = int(dim)
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        if observed.shape != values.shape:
            raise ValueError(
                f"{observed.size} observed indices but {values.size} values")
        if observed.size:
            if observed[0] < 0 or observed[-1] >= dim:
                raise ValueError(f"observed index out of range [0, {dim})")
            if np.any(np.diff(observed) <= 0):
                raise ValueError("observed indices must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("observed values must be finite")
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "observed", _frozen(observed))
        object.__setattr__(self, "values", _frozen(values))

    def __setattr__(self, name, value):
        raise AttributeError("ObservedVector is immutable")

    @classmethod
    def from_dense(cls, x: Sequence[float], mask: Sequence[bool] | None = None) -> "ObservedVector":
        """Build from a full vector and a keep-mask. NaN entries count as missing."""
        x = np.asarray(x, dtype=np.float64)
        keep = ~np.isnan(x)
        if mask is not None:
            keep &= np.asarray(mask, dtype=bool)
        idx = np.flatnonzero(keep)
        return cls(x.size, idx, x[idx])

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.dim, dtype=bool)
        m[self.observed] = True
        return m

    def zero_filled(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.observed] = self.values
        return out

    def filled(self, fill: np.ndarray) -> np.ndarray:
        out = np.array(fill, dtype=np.float64, copy=True)
        out[self.observed] = self.values
        return out

    def norm(self) -> float:
        """Euclidean norm of the observed part, i.e. of P_o x."""
        return float(np.linalg.norm(self.values))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def scaled(self, factor: float) -> "ObservedVector":
        return ObservedVector(self.dim, self.observed, self.values * factor)

    def __len__(self):
        return int(self.observed.size)

    def __eq__(self, other):
        if not isinstance(other, ObservedVector):
            return NotImplemented
        return (self.dim == other.dim
                and np.array_equal(self.observed, other.observed)
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.dim, self.observed.tobytes(), self.values.tobytes()))

    def __repr__(self):
        pairs = ", ".join(f"{i}: {v:g}" for i, v in zip(self.observed, self.values))
        return f"ObservedVector(dim={self.dim}, {{{pairs}}})"

    def __reduce__(self):
        return (ObservedVector, (self.dim, self.observed.tolist(), self.values.tolist()))


@dataclass(frozen=True)
class LabeledExample:
    input: ObservedVector
    label: float

    def __post_init__(self):
        if not math.isfinite(self.label):
            raise ValueError(f"label must be finite, got {self.label}")
        object.__setattr__(self, "label", float(self.label))

    @property
    def dim(self) -> int:
        return self.input.dim


def check_dims(vectors: Iterable[ObservedVector], dim: int | None = None) -> int | None:
    """Return the common dimension of ``vectors``; raise DimensionMismatch otherwise."""
    for v in vectors:
        if dim is None:
            dim = v.dim
        elif v.dim != dim:
            raise DimensionMismatch(f"dimension mismatch: expected {dim}, got {v.dim}")
    return dim


def stack(vectors: Sequence[ObservedVector], dim: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Dense (mask, zero-filled values) arrays of shape (n, d)."""
    dim = check_dims(vectors, dim)
    if dim is None:
        raise ValueError("cannot stack an empty list without a dimension")
    mask = np.zeros((len(vectors), dim), dtype=bool)
    vals = np.zeros((len(vectors), dim))
    for i, v in enumerate(vectors):
        mask[i, v.observed] = True
        vals[i, v.observed] = v.values
    return mask, vals


@dataclass(frozen=True)
class LossSpec:
    """Convex L-Lipschitz loss in the prediction. Works on scalars and arrays.

    For ``squared`` the loss is not globally Lipschitz, so ``lipschitz`` is a
    user-declared bound on the operating range and is not enforced.
    """
    kind: str = "hinge"
    lipschitz: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.kind!r}; expected one of {LOSS_KINDS}")
        if not self.lipschitz > 0:
            raise ValueError("lipschitz constant must be positive")
        if self.kind != "squared" and self.lipschitz != 1.0:
            raise ValueError(f"{self.kind} loss has Lipschitz constant 1")

    @classmethod
    def make(cls, kind: str, clip: float | None = None) -> "LossSpec":
        if kind == "squared":
            if clip is None:
                raise ValueError("squared loss needs a declared Lipschitz bound")
            return cls(kind, float(clip))
        return cls(kind, 1.0)

    def value(self, p, y):
        if self.kind == "hinge":
            return np.maximum(0.0, 1.0 - np.multiply(y, p))
        if self.kind == "logistic":
            return np.logaddexp(0.0, -np.multiply(y, p))
        return np.square(np.subtract(p, y))

    def subgradient(self, p, y):
        if self.kind == "hinge":
            # 0 at the kink y*p == 1
            return np.where(np.multiply(y, p) < 1.0, -np.asarray(y, dtype=float), 0.0)
        if self.kind == "logistic":
            # -y * sigmoid(-y p), written to avoid overflow
            return -np.multiply(y, np.exp(-np.logaddexp(0.0, np.multiply(y, p))))
        return 2.0 * np.subtract(p, y)


def loss_value(spec: LossSpec, prediction: float, label: float) -> float:
    return float(spec.value(prediction, label))


def loss_subgradient(spec: LossSpec, prediction: float, label: float) -> float:
    return float(spec.subgradient(prediction, label))


@dataclass(frozen=True)
class GammaDims:
    """Size of the depth-``gamma`` sequence embedding over ``d`` coordinates."""
    d: int
    gamma: int
    Gamma_int: int
    Gamma: float
    exact: bool


def gamma_dims(d: int, gamma: int) -> GammaDims:
    if d < 1 or gamma < 1:
        raise ValueError(f"need d >= 1 and gamma >= 1, got d={d}, gamma={gamma}")
    total = gamma if d == 1 else (d ** (gamma + 1) - d) // (d - 1)
    try:
        as_float = float(total)
    except OverflowError:
        as_float = math.inf
    return GammaDims(d, gamma, total, as_float, total <= 2 ** 53)
