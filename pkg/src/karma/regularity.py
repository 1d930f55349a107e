"""Certify lambda-regularity of a sample against a candidate subspace."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import DimensionMismatch, ObservedVector, check_dims
from .reference import SubspaceSpec, restrict

Pattern = tuple[int, ...]


def numerical_rank(sv: np.ndarray, shape: tuple[int, int]) -> int:
    if sv.size == 0 or sv[0] == 0:
        return 0
    tol = max(shape) * np.finfo(float).eps * sv[0]
    return int(np.sum(sv > tol))


def _sv(A: np.ndarray) -> np.ndarray:
    if A.size == 0:
        return np.zeros(0)
    return np.linalg.svd(A, compute_uv=False)


def rank(A: np.ndarray) -> int:
    return numerical_rank(_sv(A), A.shape)


@dataclass(frozen=True)
class PatternDiagnostics:
    pattern: Pattern
    count: int
    singular_values: tuple[float, ...]    # positive singular values of P_o P_E, descending
    rank: int
    kernel_ok: bool

    @property
    def lambda_o(self) -> float:
        return self.singular_values[-1] if self.singular_values else 0.0


def pattern_diagnostics(pattern: Sequence[int], subspace: SubspaceSpec, count: int = 1) -> PatternDiagnostics:
    o = np.asarray(pattern, dtype=np.int64)
    A = subspace.projection[o, :]          # P_o P_E
    sv = _sv(A)
    rk = numerical_rank(sv, A.shape)
    return PatternDiagnostics(tuple(int(i) for i in o), count,
                              tuple(float(s) for s in sv[:rk]), rk, rk == subspace.rank)


def rank_triple(pattern: Sequence[int], Q: np.ndarray) -> tuple[int, int, int]:
    """Independently computed rank(P_o Q), rank(Q P_o^T), rank(P_o Q P_o^T)."""
    o = np.asarray(pattern, dtype=np.int64)
    return rank(Q[o, :]), rank(Q[:, o]), rank(restrict(Q, o))


def image_distance(A: np.ndarray, B: np.ndarray) -> float:
    """Spectral-norm distance between the orthogonal projectors onto Im(A) and Im(B)."""
    def proj(M):
        if M.size == 0:
            return np.zeros((M.shape[0], M.shape[0]))
        U, s, _ = np.linalg.svd(M, full_matrices=False)
        U = U[:, :numerical_rank(s, M.shape)]
        return U @ U.T
    return float(np.linalg.norm(proj(A) - proj(B), 2))


def distinct_patterns(data: Sequence[ObservedVector]) -> list[tuple[Pattern, int]]:
    counts = Counter(tuple(int(i) for i in v.observed) for v in data)
    return sorted(counts.items())


@dataclass
class RegularityReport:
    lambda_: float
    norm_ok: bool
    support_ok: bool | None          # None: no full vectors, condition unchecked
    kernel_ok: bool
    per_pattern: dict[Pattern, PatternDiagnostics] = field(default_factory=dict)
    max_observed_norm: float = 0.0
    rank: int = 0
    n: int = 0

    @property
    def regular(self) -> bool:
        return self.norm_ok and self.kernel_ok and self.support_ok is not False

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "lambda": self.lambda_,
            "norm_ok": self.norm_ok,
            "support_ok": "unchecked" if self.support_ok is None else self.support_ok,
            "kernel_ok": self.kernel_ok,
            "rank": self.rank,
            "n": self.n,
            "max_observed_norm": self.max_observed_norm,
            "patterns": [
                {"observed": list(p.pattern), "count": p.count, "rank": p.rank,
                 "kernel_ok": p.kernel_ok, "singular_values": list(p.singular_values)}
                for p in self.per_pattern.values()
            ],
        }

    def to_text(self) -> str:
        support = "unchecked" if self.support_ok is None else str(self.support_ok)
        lines = [
            f"samples            {self.n}",
            f"subspace rank      {self.rank}",
            f"lambda             {self.lambda_:.6g}",
            f"norm_ok            {self.norm_ok}  (max |P_o x| = {self.max_observed_norm:.6g})",
            f"support_ok         {support}",
            f"kernel_ok          {self.kernel_ok}",
            "",
            f"{'pattern':<30} {'count':>6} {'rank':>5} {'sigma_min':>12}",
        ]
        for p in self.per_pattern.values():
            pat = ",".join(map(str, p.pattern)) or "(empty)"
            if len(pat) > 30:
                pat = pat[:27] + "..."
            lines.append(f"{pat:<30} {p.count:>6} {p.rank:>5} {p.lambda_o:>12.6g}")
        return "\n".join(lines) + "\n"


def check_regularity(data: Sequence[ObservedVector], subspace: SubspaceSpec, tol: float = 1e-9,
                     full_vectors: np.ndarray | None = None) -> RegularityReport:
    """Check the four regularity conditions on a sample.

    ``lambda_`` is the smallest positive singular value of P_o P_E over the observed
    patterns, or 0 when some pattern loses rank. Membership x in E needs the
    unmasked vectors and is reported as unchecked without them.
    """
    if len(data) == 0:
        raise ValueError("regularity check needs at least one sample")
    check_dims(data, subspace.dim)
    norms = np.array([v.norm() for v in data])
    norm_ok = bool(np.all(norms <= 1 + tol))

    support_ok = None
    if full_vectors is not None:
        X = np.atleast_2d(np.asarray(full_vectors, dtype=np.float64))
        if X.shape != (len(data), subspace.dim):
            raise DimensionMismatch(f"full vectors have shape {X.shape}, expected {(len(data), subspace.dim)}")
        resid = np.linalg.norm(X - X @ subspace.projection, axis=1)
        support_ok = bool(np.all(resid <= tol * np.maximum(np.linalg.norm(X, axis=1), 1e-300)))

    per_pattern = {}
    for pat, cnt in distinct_patterns(data):
        per_pattern[pat] = pattern_diagnostics(pat, subspace, cnt)
    kernel_ok = all(p.kernel_ok for p in per_pattern.values())
    lam = min(p.lambda_o for p in per_pattern.values()) if kernel_ok else 0.0
    return RegularityReport(lam, norm_ok, support_ok, kernel_ok, per_pattern,
                            float(norms.max()), subspace.rank, len(data))
