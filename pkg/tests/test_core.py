import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from karma.core import (GammaDims, LabeledExample, LossSpec, ObservedVector, gamma_dims,
                        loss_subgradient, loss_value, stack)

HINGE = LossSpec("hinge")
LOGISTIC = LossSpec("logistic")
SQUARED = LossSpec("squared", 4.0)


def test_observed_vector_invariants():
    v = ObservedVector(4, [0, 2], [1.0, -0.5])
    assert v.mask.tolist() == [True, False, True, False]
    assert v.zero_filled().tolist() == [1.0, 0.0, -0.5, 0.0]
    assert len(ObservedVector(3)) == 0
    with pytest.raises(ValueError):
        ObservedVector(3, [0, 3], [1.0, 2.0])
    with pytest.raises(ValueError):
        ObservedVector(3, [1, 0], [1.0, 2.0])
    with pytest.raises(ValueError):
        ObservedVector(3, [0, 0], [1.0, 2.0])
    with pytest.raises(ValueError):
        ObservedVector(3, [0], [1.0, 2.0])
    with pytest.raises(AttributeError):
        v.dim = 5
    with pytest.raises(ValueError):
        v.values[0] = 3.0


def test_from_dense_treats_nan_as_missing():
    v = ObservedVector.from_dense([1.0, np.nan, 2.0], [True, True, False])
    assert v.observed.tolist() == [0]
    assert v.values.tolist() == [1.0]


def test_labels_must_be_finite():
    with pytest.raises(ValueError):
        LabeledExample(ObservedVector(2), math.inf)


def test_stack():
    m, x = stack([ObservedVector(3, [1], [2.0]), ObservedVector(3)])
    assert m.tolist() == [[False, True, False], [False, False, False]]
    assert x.tolist() == [[0.0, 2.0, 0.0], [0.0, 0.0, 0.0]]


@pytest.mark.parametrize("spec,p,y,expected", [
    (HINGE, 1.0, 1.0, 0.0),
    (HINGE, 0.0, 1.0, 1.0),
    (SQUARED, 0.5, 1.0, 0.25),
    (LOGISTIC, 0.0, 1.0, math.log(2)),
])
def test_loss_values(spec, p, y, expected):
    assert loss_value(spec, p, y) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("p,y,expected", [(0.0, 1.0, -1.0), (2.0, 1.0, 0.0), (1.0, 1.0, 0.0)])
def test_hinge_subgradient(p, y, expected):
    assert loss_subgradient(HINGE, p, y) == expected


def test_hinge_kink_value_is_a_subgradient():
    # the subdifferential of max(0, 1 - p) at p = 1 is [-1, 0]
    g = loss_subgradient(HINGE, 1.0, 1.0)
    assert -1.0 <= g <= 0.0
    for q in np.linspace(-3, 3, 61):
        assert loss_value(HINGE, q, 1.0) >= loss_value(HINGE, 1.0, 1.0) + g * (q - 1.0) - 1e-15


def test_squared_needs_declared_bound():
    with pytest.raises(ValueError):
        LossSpec.make("squared")
    assert LossSpec.make("squared", 3.0).lipschitz == 3.0
    with pytest.raises(ValueError):
        LossSpec("hinge", 2.0)


finite = st.floats(-20, 20, allow_nan=False)


@given(spec=st.sampled_from([HINGE, LOGISTIC, SQUARED]), a=finite, b=finite,
       y=st.sampled_from([-1.0, 1.0]), lam=st.floats(0, 1))
def test_losses_are_convex(spec, a, b, y, lam):
    mid = lam * a + (1 - lam) * b
    lhs = loss_value(spec, mid, y)
    rhs = lam * loss_value(spec, a, y) + (1 - lam) * loss_value(spec, b, y)
    assert lhs <= rhs + 1e-9 * (1 + abs(rhs))


@given(spec=st.sampled_from([HINGE, LOGISTIC]), p=st.floats(-1e6, 1e6), y=st.sampled_from([-1.0, 1.0]))
def test_subgradient_bounded_by_lipschitz(spec, p, y):
    assert abs(loss_subgradient(spec, p, y)) <= spec.lipschitz


@given(p=st.floats(-2, 2), y=st.floats(-1, 1))
def test_squared_subgradient_bounded_on_operating_range(p, y):
    # |2(p - y)| <= 6 when |p| <= 2 and |y| <= 1
    assert abs(loss_subgradient(LossSpec("squared", 6.0), p, y)) <= 6.0


@given(spec=st.sampled_from([HINGE, LOGISTIC, SQUARED]), p=finite, q=finite, y=st.sampled_from([-1.0, 1.0]))
def test_subgradient_inequality(spec, p, q, y):
    g = loss_subgradient(spec, p, y)
    assert loss_value(spec, q, y) >= loss_value(spec, p, y) + g * (q - p) - 1e-9 * (1 + abs(q - p))


@pytest.mark.parametrize("d,gamma,expected", [(2, 2, 6), (5, 1, 5), (4, 3, 84), (1, 7, 7)])
def test_gamma_dims_examples(d, gamma, expected):
    g = gamma_dims(d, gamma)
    assert g.Gamma_int == expected and g.Gamma == expected and g.exact


def test_gamma_dims_matches_explicit_sum():
    for d in range(1, 11):
        for gamma in range(1, 7):
            assert gamma_dims(d, gamma).Gamma_int == sum(d ** k for k in range(1, gamma + 1))


def test_gamma_dims_huge_is_flagged_inexact():
    g = gamma_dims(10, 30)
    assert not g.exact
    assert g.Gamma == pytest.approx(sum(10.0 ** k for k in range(1, 31)), rel=1e-12)
    assert isinstance(gamma_dims(10, 400), GammaDims)
    assert gamma_dims(10, 400).Gamma == math.inf
