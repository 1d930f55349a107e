"""Closed-form missing-data kernel, its explicit sequence embedding, and Gram matrices.

The embedding indexes coordinates by every nonempty sequence ``s`` of length at
most ``gamma`` over ``{0..d-1}``; coordinate ``s`` carries ``x[s[-1]]`` when every
element of ``s`` is observed and 0 otherwise. Two embedded vectors therefore
share ``m**(l-1)`` sequences of length ``l`` ending at each common coordinate,
where ``m`` is the overlap size, which gives

    k(a, b) = (1 + m + ... + m**(gamma-1)) * sum_{k in o_a & o_b} a_k b_k.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import CapExceeded, DimensionMismatch, GammaDims, ObservedVector, gamma_dims, stack

DEFAULT_EMBED_CAP = 10 ** 6


def overlap_factor(m, gamma: int):
    """Geometric sum 1 + m + ... + m**(gamma-1), elementwise, via Horner.

    Avoids the removable singularity of (m**gamma - 1)/(m - 1) at m = 1.
    Overflows to +inf for huge m**gamma.
    """
    m = np.asarray(m, dtype=np.float64)
    f = np.ones_like(m)
    with np.errstate(over="ignore"):
        for _ in range(gamma - 1):
            f = f * m + 1.0
    return f if f.ndim else float(f)


def kernel(a: ObservedVector, b: ObservedVector, gamma: int, normalized: bool = False) -> float:
    if a.dim != b.dim:
        raise DimensionMismatch(f"kernel of vectors with dims {a.dim} and {b.dim}")
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    if normalized:
        kab = kernel(a, b, gamma)
        den = np.sqrt(kernel(a, a, gamma) * kernel(b, b, gamma))
        return kab / den if den > 0 else 0.0
    common, ia, ib = np.intersect1d(a.observed, b.observed, assume_unique=True,
                                    return_indices=True)
    m = common.size
    if m == 0:
        return 0.0
    s = float(np.dot(a.values[ia], b.values[ib]))
    return overlap_factor(m, gamma) * s


def cross_gram(rows: Sequence[ObservedVector], cols: Sequence[ObservedVector], gamma: int,
               dim: int | None = None) -> np.ndarray:
    """K[i, j] = kernel(rows[i], cols[j], gamma), computed in bulk from dense masks."""
    dim = _common_dim(rows, cols, dim)
    if not rows or not cols:
        return np.zeros((len(rows), len(cols)))
    ma, xa = stack(rows, dim)
    mb, xb = stack(cols, dim)
    return gram_from_dense(ma, xa, mb, xb, gamma)


def gram_from_dense(ma, xa, mb, xb, gamma: int) -> np.ndarray:
    overlap = ma.astype(np.float64) @ mb.T.astype(np.float64)
    return overlap_factor(overlap, gamma) * (xa @ xb.T)


def gram(vectors: Sequence[ObservedVector], gamma: int, normalized: bool = False) -> np.ndarray:
    """Symmetric Gram matrix; the upper triangle is mirrored so G == G.T exactly."""
    if not vectors:
        return np.zeros((0, 0))
    G = cross_gram(vectors, vectors, gamma)
    G = np.triu(G) + np.triu(G, 1).T
    if normalized:
        diag = np.sqrt(np.diag(G))
        with np.errstate(divide="ignore", invalid="ignore"):
            G = np.where(np.outer(diag, diag) > 0, G / np.outer(diag, diag), 0.0)
    return G


def _common_dim(rows, cols, dim):
    for v in itertools.chain(rows, cols):
        if dim is None:
            dim = v.dim
        elif v.dim != dim:
            raise DimensionMismatch(f"dimension mismatch: expected {dim}, got {v.dim}")
    return dim


@lru_cache(maxsize=32)
def sequences(d: int, gamma: int) -> tuple[tuple[int, ...], ...]:
    """All sequences of length 1..gamma over range(d), ordered by (length, elements)."""
    out = []
    for length in range(1, gamma + 1):
        out.extend(itertools.product(range(d), repeat=length))
    return tuple(out)


@dataclass(frozen=True)
class ExplicitEmbedding:
    """A vector in R^Gamma with coordinates ordered as in :func:`sequences`."""
    dims: GammaDims
    vector: np.ndarray

    @property
    def coords(self) -> dict[tuple[int, ...], float]:
        return dict(zip(sequences(self.dims.d, self.dims.gamma), self.vector.tolist()))

    def __getitem__(self, s: tuple[int, ...]) -> float:
        return float(self.vector[sequence_index(s, self.dims.d)])

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))


def sequence_index(s: Sequence[int], d: int) -> int:
    """Position of sequence ``s`` in the (length, lexicographic) ordering."""
    offset = sum(d ** l for l in range(1, len(s)))
    pos = 0
    for e in s:
        pos = pos * d + e
    return offset + pos


def check_cap(d: int, gamma: int, cap: int = DEFAULT_EMBED_CAP) -> GammaDims:
    dims = gamma_dims(d, gamma)
    if dims.Gamma_int > cap:
        raise CapExceeded(f"explicit embedding needs Gamma={dims.Gamma_int} coordinates, cap is {cap}")
    return dims


def embed(x: ObservedVector, gamma: int, cap: int = DEFAULT_EMBED_CAP) -> ExplicitEmbedding:
    """Explicit embedding, built one sequence length at a time by outer products."""
    dims = check_cap(x.dim, gamma, cap)
    mask = x.mask.astype(np.float64)
    xz = x.zero_filled()
    levels = [xz]
    inside = mask  # indicator that a sequence of the current length lies in o
    for _ in range(gamma - 1):
        levels.append(np.multiply.outer(inside, xz).reshape(-1))
        inside = np.multiply.outer(inside, mask).reshape(-1)
    return ExplicitEmbedding(dims, np.concatenate(levels))


def embedding_inner_product(a: ExplicitEmbedding, b: ExplicitEmbedding) -> float:
    if a.dims != b.dims:
        raise DimensionMismatch(f"embeddings of different shapes: {a.dims} vs {b.dims}")
    return float(np.dot(a.vector, b.vector))
