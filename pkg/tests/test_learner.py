import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from karma.core import LabeledExample, LossSpec, ObservedVector, TrainingDiverged
from karma.kernel import embed
from karma.learner import (KarmaConfig, KarmaModel, NormBoundViolation, auto_rho, batch_order, load_model,
                           regularized_objective, save_model, theory_gamma, train_batch, train_online)

from conftest import random_stream
from oracles import DenseShadow, brute_embedding


def implicit_vector(model, coeffs, gamma):
    if not len(coeffs):
        return 0.0
    return sum(c * brute_embedding(x, gamma) for c, x in zip(coeffs, model.support))


def test_first_two_rounds_worked_example():
    x = ObservedVector(2, [0], [0.5])
    m = KarmaModel(2, 2, 0.5)
    assert m.step(LabeledExample(x, 1.0)) == (0.0, 1.0)
    # v_2 = (1/rho) phi(x): alpha 2, k(x, x) = 2 * 0.25
    assert m.alpha.tolist() == [2.0]
    assert m.predict(x) == pytest.approx(1.0, abs=1e-15)
    assert m.avg_alpha.tolist() == [0.0]
    p, loss = m.step(LabeledExample(x, 1.0))
    assert p == pytest.approx(1.0) and loss == pytest.approx(0.0, abs=1e-15)
    assert m.alpha == pytest.approx([1.0])
    assert m.avg_alpha == pytest.approx([1.0])


def shadow_check(stream, gamma, rho, loss, eta=None):
    d = stream[0].input.dim
    m = KarmaModel(d, gamma, rho, loss, eta)
    sh = DenseShadow(d, gamma, rho, loss, eta)
    for ex in stream:
        p, _ = m.step(ex)
        q = sh.step(ex.input, ex.label)
        assert abs(p - q) <= 1e-9 * (1 + abs(q))
    v = implicit_vector(m, m.alpha, gamma)
    vbar = implicit_vector(m, m.avg_alpha, gamma)
    assert np.allclose(v, sh.v, rtol=1e-9, atol=1e-9)
    assert np.allclose(vbar, sh.average, rtol=1e-9, atol=1e-9)
    assert m.iterate_norm() == pytest.approx(np.linalg.norm(sh.v), rel=1e-8, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), gamma=st.integers(1, 3), rho=st.floats(0.05, 3.0),
       kind=st.sampled_from(["hinge", "logistic"]))
def test_matches_dense_shadow_default_schedule(seed, gamma, rho, kind):
    rng = np.random.default_rng(seed)
    stream = random_stream(rng, 25, 3)
    shadow_check(stream, gamma, rho, LossSpec(kind))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), gamma=st.integers(1, 3))
def test_matches_dense_shadow_custom_schedule(seed, gamma):
    rng = np.random.default_rng(seed)
    stream = random_stream(rng, 25, 3)
    shadow_check(stream, gamma, 0.5, LossSpec("hinge"), eta=lambda t: 0.3 / math.sqrt(t))


def test_squared_loss_matches_shadow():
    rng = np.random.default_rng(7)
    stream = [LabeledExample(e.input, 0.3 * e.label) for e in random_stream(rng, 30, 3, scale=0.5)]
    shadow_check(stream, 2, 1.0, LossSpec("squared", 10.0))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), gamma=st.integers(1, 2), rho=st.floats(0.01, 4.0),
       d=st.integers(1, 3))
def test_iterate_norm_within_lipschitz_over_rho(seed, gamma, rho, d):
    rng = np.random.default_rng(seed)
    stream = random_stream(rng, 40, d)
    X = max(e.input.max_abs() for e in stream) or 1.0
    cfg = KarmaConfig(gamma=gamma, rho=rho, check_norms=True)
    train_online(stream, cfg, X=X)    # raises NormBoundViolation on failure


def test_norm_check_fires_when_bound_is_wrong():
    rng = np.random.default_rng(0)
    stream = random_stream(rng, 10, 2, keep=1.0)
    with pytest.raises(NormBoundViolation):
        train_online(stream, KarmaConfig(gamma=2, rho=1.0, check_norms=True), X=1e-6)


def test_zero_loss_rounds_add_no_support():
    x = ObservedVector(2, [0, 1], [0.6, 0.8])
    m = KarmaModel(2, 1, 0.1)
    for _ in range(5):
        m.step(LabeledExample(x, 1.0))
    assert len(m.support) <= 5
    m2 = KarmaModel(2, 1, 0.1)
    m2.step(LabeledExample(x, 1.0))
    m2.step(LabeledExample(ObservedVector(2, [0], [1.0]), 1.0))
    # second round: prediction 0.6 * 10 = 6 >= 1, no loss, nothing stored
    assert len(m2.support) == 1


def test_repeated_keys_share_a_slot():
    rng = np.random.default_rng(1)
    sample = random_stream(rng, 6, 3)
    model = train_batch(sample, KarmaConfig(gamma=2, rho=0.1, rounds=60))
    assert len(model.support) <= 6
    assert model.use_average and model.t == 60


def test_batch_order():
    assert batch_order(5, 3, 0).tolist() == [0, 1, 2]
    order = batch_order(4, 10, 9)
    assert order[:4].tolist() == [0, 1, 2, 3]
    assert sorted(order[4:8].tolist()) == [0, 1, 2, 3]
    assert len(order) == 10
    assert np.array_equal(batch_order(4, 10, 9), order)


def test_batch_equals_online_with_same_order():
    rng = np.random.default_rng(2)
    sample = random_stream(rng, 8, 3)
    cfg = KarmaConfig(gamma=2, rho=0.3, rounds=20, seed=4)
    model = train_batch(sample, cfg)
    order = batch_order(8, 20, 4)
    sh = DenseShadow(3, 2, 0.3)
    for i in order:
        sh.step(sample[i].input, sample[i].label)
    for e in sample:
        assert model.predict(e.input) == pytest.approx(float(sh.average @ brute_embedding(e.input, 2)),
                                                        rel=1e-9, abs=1e-12)


def test_predict_many_matches_predict():
    rng = np.random.default_rng(3)
    sample = random_stream(rng, 30, 5)
    model, _ = train_online(sample, KarmaConfig(gamma=3, rho=0.2))
    xs = [e.input for e in sample]
    many = model.predict_many(xs)
    for x, p in zip(xs, many):
        assert p == pytest.approx(model.predict(x), rel=1e-12, abs=1e-14)
    assert model.predict_many([]).shape == (0,)


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    sample = random_stream(rng, 20, 4)
    model = train_batch(sample, KarmaConfig(gamma=2, rho=0.2, rounds=50))
    save_model(model, tmp_path / "m.json")
    loaded = load_model(tmp_path / "m.json")
    xs = [e.input for e in sample]
    assert np.array_equal(loaded.predict_many(xs), model.predict_many(xs))
    assert loaded.use_average and loaded.t == 50


@pytest.mark.parametrize("eta", [None, lambda t: 1.0 / math.sqrt(t)])
def test_resume_after_load_continues_the_run(tmp_path, eta):
    rng = np.random.default_rng(5)
    stream = random_stream(rng, 40, 3)
    full = KarmaModel(3, 2, 0.4, eta_schedule=eta)
    for e in stream:
        full.step(e)
    half = KarmaModel(3, 2, 0.4, eta_schedule=eta)
    for e in stream[:20]:
        half.step(e)
    resumed = KarmaModel.from_dict(half.to_dict(), eta_schedule=eta)
    for e in stream[20:]:
        resumed.step(e)
    xs = [e.input for e in stream]
    for avg in (False, True):
        assert np.allclose(resumed.predict_many(xs, avg), full.predict_many(xs, avg), rtol=1e-10, atol=1e-12)


def test_load_rejects_unknown_version():
    with pytest.raises(ValueError):
        KarmaModel.from_dict({"format_version": 99})


def test_divergence_is_reported():
    x = ObservedVector(3, [0, 1, 2], [1.0, 1.0, 1.0])
    m = KarmaModel(3, 3, 1.0, LossSpec("squared", 1.0), eta_schedule=lambda t: 1e300)
    with pytest.raises(TrainingDiverged):
        for _ in range(10):
            m.step(LabeledExample(x, 1.0))


def test_constructor_validation():
    with pytest.raises(ValueError):
        KarmaModel(2, 0, 1.0)
    with pytest.raises(ValueError):
        KarmaModel(2, 1, 0.0)


def test_objective_improves_with_rounds():
    rng = np.random.default_rng(6)
    sample = random_stream(rng, 30, 4)
    objs = []
    for rounds in (30, 300, 3000):
        model = train_batch(sample, KarmaConfig(gamma=2, rho=0.5, rounds=rounds))
        objs.append(regularized_objective(model, sample))
    zero = 1.0 / 0.5          # v = 0: every hinge loss is 1
    assert objs[-1] <= objs[0] + 1e-9 and objs[-1] < zero


def test_auto_rho_and_theory_gamma():
    assert auto_rho(1.0, 1.0, 4.0, 1.0, 100) == pytest.approx(0.2)
    assert theory_gamma(0.3, 1000) == math.ceil(math.log(1000) / 0.3) == 24
    assert theory_gamma(1.0, 1) == 1


def test_kernel_row_uses_the_embedding():
    rng = np.random.default_rng(8)
    sample = random_stream(rng, 10, 3)
    model, _ = train_online(sample, KarmaConfig(gamma=3, rho=1.0))
    v = sum(a * embed(x, 3).vector for a, x in zip(model.alpha, model.support))
    for e in sample:
        assert model.predict(e.input) == pytest.approx(float(v @ embed(e.input, 3).vector), abs=1e-12)


def test_bound_without_rho_fails_for_small_rho():
    # one round with rho = 0.1 already gives |v_2| = 1/rho = 10 > L X sqrt(Gamma) = 1
    x = ObservedVector(1, [0], [1.0])
    m = KarmaModel(1, 1, 0.1)
    m.step(LabeledExample(x, 1.0))
    assert m.iterate_norm() == pytest.approx(10.0)
    assert m.iterate_norm() <= m.norm_bound() + 1e-12
    assert m.iterate_norm() > 1.0 * 1.0 * math.sqrt(1)
