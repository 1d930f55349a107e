import numpy as np
import pytest
from hypothesis import strategies as st

from karma.core import LabeledExample, ObservedVector


@st.composite
def observed_vectors(draw, dim=None, max_dim=5, elements=st.floats(-1, 1, allow_nan=False)):
    d = dim if dim is not None else draw(st.integers(1, max_dim))
    mask = draw(st.lists(st.booleans(), min_size=d, max_size=d))
    idx = [i for i, m in enumerate(mask) if m]
    vals = draw(st.lists(elements, min_size=len(idx), max_size=len(idx)))
    return ObservedVector(d, idx, vals)


@st.composite
def vector_pairs(draw, max_dim=5):
    d = draw(st.integers(1, max_dim))
    return draw(observed_vectors(dim=d)), draw(observed_vectors(dim=d))


def random_vector(rng, d, keep=0.6, scale=1.0):
    x = rng.uniform(-scale, scale, d)
    return ObservedVector.from_dense(x, rng.random(d) < keep)


def random_stream(rng, n, d, keep=0.6, scale=1.0):
    return [LabeledExample(random_vector(rng, d, keep, scale), float(rng.choice([-1.0, 1.0])))
            for _ in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
