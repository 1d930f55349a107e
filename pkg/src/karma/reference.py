"""Dense comparators that know the hidden subspace.

``predict_f0`` is a linear rule applied after pseudo-inverse reconstruction from
the observed coordinates; ``predict_fgamma`` replaces the pseudo-inverse by a
truncated Neumann series. ``improper_weights`` writes the latter as a single
weight vector over the sequence embedding. None of these are ever trained.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DimensionMismatch, ObservedVector
from .kernel import DEFAULT_EMBED_CAP, ExplicitEmbedding, check_cap


def orthonormalize(basis: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Modified Gram-Schmidt with one reorthogonalization pass.

    Raises if a column is (numerically) in the span of the previous ones.
    """
    A = np.array(basis, dtype=np.float64, copy=True)
    if A.ndim == 1:
        A = A[:, None]
    d, r = A.shape
    out = np.zeros((d, r))
    for j in range(r):
        v = A[:, j].copy()
        scale = np.linalg.norm(v)
        for _ in range(2):
            for i in range(j):
                v -= (out[:, i] @ v) * out[:, i]
        nv = np.linalg.norm(v)
        if scale == 0 or nv <= tol * scale:
            raise ValueError(f"basis column {j} is linearly dependent on the previous columns")
        out[:, j] = v / nv
    return out


@dataclass(frozen=True)
class SubspaceSpec:
    """An r-dimensional subspace E of R^d, with orthonormal basis and projection P_E."""
    basis: np.ndarray
    projection: np.ndarray = field(repr=False)

    @classmethod
    def from_basis(cls, basis) -> "SubspaceSpec":
        U = orthonormalize(basis)
        Q = U @ U.T
        Q = (Q + Q.T) / 2
        U.setflags(write=False)
        Q.setflags(write=False)
        return cls(U, Q)

    @classmethod
    def random(cls, d: int, r: int, rng: np.random.Generator) -> "SubspaceSpec":
        if not 1 <= r <= d:
            raise ValueError(f"rank must satisfy 1 <= r <= d, got r={r}, d={d}")
        return cls.from_basis(rng.standard_normal((d, r)))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def complement(self) -> np.ndarray:
        """I - P_E."""
        return np.eye(self.dim) - self.projection


def restrict(A: np.ndarray, o) -> np.ndarray:
    """A_{o,o} = P_o A P_o^T."""
    o = np.asarray(o, dtype=np.int64)
    return A[np.ix_(o, o)]


@dataclass(frozen=True)
class DensePredictorF0:
    w: np.ndarray
    subspace: SubspaceSpec
    pinv_tolerance: float = 1e-10

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.shape != (self.subspace.dim,):
            raise DimensionMismatch(f"w has shape {w.shape}, subspace dim is {self.subspace.dim}")
        if np.linalg.norm(w) > 1 + 1e-12:
            raise ValueError(f"|w| = {np.linalg.norm(w)} exceeds 1")
        object.__setattr__(self, "w", w)

    def __call__(self, x: ObservedVector) -> float:
        return predict_f0(self, x)


def predict_f0(p: DensePredictorF0, x: ObservedVector) -> float:
    if x.dim != p.subspace.dim:
        raise DimensionMismatch(f"input dim {x.dim} vs subspace dim {p.subspace.dim}")
    o = x.observed
    if o.size == 0:
        return 0.0
    Qoo = restrict(p.subspace.projection, o)
    # relative cutoff: singular values below tol * sigma_max are dropped
    pinv = np.linalg.pinv(Qoo, rcond=p.pinv_tolerance, hermitian=True)
    return float(p.w[o] @ (pinv @ x.values))


@dataclass(frozen=True)
class DensePredictorFGamma:
    w: np.ndarray
    Qmat: np.ndarray
    gamma: int

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        Q = np.asarray(self.Qmat, dtype=np.float64)
        if Q.shape != (w.size, w.size):
            raise DimensionMismatch(f"Q has shape {Q.shape}, w has length {w.size}")
        if not np.allclose(Q @ Q, Q, atol=1e-8, rtol=0):
            raise ValueError("Q is not idempotent")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "Qmat", Q)

    def __call__(self, x: ObservedVector) -> float:
        return predict_fgamma(self, x)


def predict_fgamma(p: DensePredictorFGamma, x: ObservedVector) -> float:
    """(P_o w) . sum_{j<gamma} (Q_oo)^j (P_o x), by repeated mat-vec products."""
    if x.dim != p.w.size:
        raise DimensionMismatch(f"input dim {x.dim} vs predictor dim {p.w.size}")
    o = x.observed
    if o.size == 0:
        return 0.0
    Qoo = restrict(p.Qmat, o)
    term = x.values.copy()
    acc = term.copy()
    for _ in range(p.gamma - 1):
        term = Qoo @ term
        acc += term
    return float(p.w[o] @ acc)


def improper_weights(w, Qmat, gamma: int, cap: int = DEFAULT_EMBED_CAP) -> ExplicitEmbedding:
    """Weights v over sequences with v . phi(x_o) = f^gamma_{w,Q}(x_o).

    v_s = w[s0] * Q[s0,s1] * ... * Q[s_{k-2}, s_{k-1}].
    """
    w = np.asarray(w, dtype=np.float64)
    Q = np.asarray(Qmat, dtype=np.float64)
    dims = check_cap(w.size, gamma, cap)
    level = w.copy()
    levels = [level]
    for _ in range(gamma - 1):
        d = w.size
        # extend each sequence by k: multiply by Q[last element, k]
        level = (level.reshape(-1, d)[:, :, None] * Q[None, :, :]).reshape(-1)
        levels.append(level)
    return ExplicitEmbedding(dims, np.concatenate(levels))
