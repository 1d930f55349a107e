import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from karma.core import DimensionMismatch, ObservedVector
from karma.reference import SubspaceSpec, restrict
from karma.regularity import (check_regularity, distinct_patterns, image_distance, pattern_diagnostics,
                              rank_triple)


def test_pattern_worked_example():
    E = SubspaceSpec.from_basis(np.array([[1.0], [1.0]]))
    diag = pattern_diagnostics([0], E)
    # P_o P_E = [0.5, 0.5], singular value 1/sqrt(2)
    assert diag.rank == 1 and diag.kernel_ok
    assert diag.lambda_o == pytest.approx(2 ** -0.5, abs=1e-15)


def test_rank_deficient_pattern_gives_lambda_zero():
    E = SubspaceSpec.from_basis(np.eye(3)[:, :2])
    data = [ObservedVector(3, [0], [0.5]), ObservedVector(3, [0, 1], [0.3, 0.4])]
    rep = check_regularity(data, E)
    assert not rep.kernel_ok and rep.lambda_ == 0.0 and not rep.regular
    assert rep.per_pattern[(0,)].rank == 1
    assert rep.per_pattern[(0, 1)].lambda_o == pytest.approx(1.0)


def test_norm_and_support_conditions():
    E = SubspaceSpec.from_basis(np.array([[1.0], [0.0]]))
    ok = [ObservedVector(2, [0, 1], [0.5, 0.0])]
    assert check_regularity(ok, E).support_ok is None
    rep = check_regularity(ok, E, full_vectors=[[0.5, 0.0]])
    assert rep.regular and rep.support_ok
    assert not check_regularity(ok, E, full_vectors=[[0.5, 0.1]]).support_ok
    big = [ObservedVector(2, [0], [1.5])]
    assert not check_regularity(big, E).norm_ok
    with pytest.raises(ValueError):
        check_regularity([], E)
    with pytest.raises(DimensionMismatch):
        check_regularity([ObservedVector(3)], E)
    with pytest.raises(DimensionMismatch):
        check_regularity(ok, E, full_vectors=[[0.5, 0.0, 0.0]])


def test_distinct_patterns_counts():
    data = [ObservedVector(3, [0], [1.0]), ObservedVector(3, [0], [2.0]), ObservedVector(3, [1, 2], [1.0, 1.0])]
    assert distinct_patterns(data) == [((0,), 2), ((1, 2), 1)]


def test_report_serializations():
    E = SubspaceSpec.from_basis(np.array([[1.0], [1.0], [0.0]]))
    rep = check_regularity([ObservedVector(3, [0, 2], [0.5, 0.0]), ObservedVector(3)], E)
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["format_version"] == 1 and d["support_ok"] == "unchecked"
    assert len(d["patterns"]) == 2
    assert "(empty)" in rep.to_text()


def pattern_lambda_by_eigenvalues(E, o):
    """Independent route: the squared singular values of P_o P_E are the eigenvalues of Q_oo."""
    if len(o) == 0:
        return 0, 0.0
    ev = np.linalg.eigvalsh(restrict(E.projection, o))
    pos = ev[ev > 1e-10]
    return pos.size, float(np.sqrt(pos.min())) if pos.size else 0.0


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_lambda_matches_eigenvalue_route(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 8))
    r = int(rng.integers(1, d + 1))
    E = SubspaceSpec.random(d, r, rng)
    data = [ObservedVector(d, o, np.zeros(o.size))
            for o in (np.flatnonzero(rng.random(d) < 0.7) for _ in range(5))]
    rep = check_regularity(data, E)
    oracle = []
    for pat, _ in distinct_patterns(data):
        rk, lam = pattern_lambda_by_eigenvalues(E, pat)
        assert rk == rep.per_pattern[pat].rank
        oracle.append(lam if rk == r else 0.0)
    expected = min(oracle)
    if expected > 1e-4:
        assert rep.lambda_ == pytest.approx(expected, rel=1e-8)
    elif expected == 0.0:
        assert rep.lambda_ == 0.0


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_rank_conditions_agree(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 8))
    r = int(rng.integers(1, d + 1))
    Q = SubspaceSpec.random(d, r, rng).projection
    o = np.flatnonzero(rng.random(d) < 0.6)
    a, b, c = rank_triple(o, Q)
    assert a == b == c
    if o.size:
        # the images of P_o Q and P_o Q P_o^T coincide inside R^|o|
        assert image_distance(Q[o, :], restrict(Q, o)) < 1e-8
