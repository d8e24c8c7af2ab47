import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedcontrib.data import LabeledDataset
from fedcontrib.errors import ConfigError, ContractViolation, ShapeError
from fedcontrib.nn import (Architecture, Hyper, ModelParams, evaluate, forward, init_model, local_train,
                           loss_and_grad)

from conftest import central_difference, relative_error


def test_init_is_deterministic():
    a = init_model(Architecture((4, 3)), seed=7)
    b = init_model(Architecture((4, 3)), seed=7)
    assert a.values.tobytes() == b.values.tobytes()


def test_param_count():
    assert init_model(Architecture((4, 3)), 0).values.size == 4 * 3 + 3
    assert Architecture((784, 32, 10)).param_count == 784 * 32 + 32 + 32 * 10 + 10


def test_biases_zero_and_weights_within_glorot_limit():
    m = init_model(Architecture((2, 5, 3)), seed=11)
    for w, b in m.layer_views():
        assert np.all(b == 0.0)
        limit = math.sqrt(6 / sum(w.shape))
        assert np.all(np.abs(w) <= limit)
        assert np.any(w != 0.0)


@pytest.mark.parametrize("sizes", [(3,), (3, 0), (0, 2)])
def test_invalid_architecture(sizes):
    with pytest.raises(ConfigError):
        Architecture(sizes)


def test_zero_model_gives_uniform_rows():
    m = ModelParams(Architecture((3, 4)), np.zeros(16))
    p = forward(m, np.random.default_rng(0).random((5, 3)))
    np.testing.assert_array_equal(p, np.full((5, 4), 0.25))


def test_identity_weights_hand_softmax():
    m = ModelParams(Architecture((2, 2)), np.array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0]))
    p = forward(m, np.array([[1.0, 0.0]]))
    e = math.e
    np.testing.assert_allclose(p[0], [e / (e + 1), 1 / (e + 1)], rtol=1e-14)


def test_forward_shape_mismatch():
    m = init_model(Architecture((3, 2)), 0)
    with pytest.raises(ShapeError):
        forward(m, np.zeros((2, 4)))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.floats(0.0, 200.0),
       sizes=st.lists(st.integers(1, 6), min_size=2, max_size=4))
def test_forward_rows_sum_to_one(seed, scale, sizes):
    arch = Architecture(tuple(sizes))
    rng = np.random.default_rng(seed)
    m = ModelParams(arch, rng.normal(0, 3, arch.param_count))
    p = forward(m, scale * rng.normal(size=(7, sizes[0])))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(p >= 0) and np.all(np.isfinite(p))


def test_uniform_model_two_classes_loss_is_ln2():
    m = ModelParams(Architecture((3, 2)), np.zeros(8))
    loss, _ = loss_and_grad(m, np.array([[0.2, 0.4, 0.6]]), np.array([1]))
    assert loss == pytest.approx(math.log(2), abs=1e-15)


def test_converged_model_has_small_loss_and_gradient():
    # logits [50, -50] for the single training point
    m = ModelParams(Architecture((1, 2)), np.array([50.0, -50.0, 0.0, 0.0]))
    loss, g = loss_and_grad(m, np.array([[1.0]]), np.array([0]))
    assert loss < 1e-30
    assert np.linalg.norm(g) < 1e-30


def test_empty_batch_rejected():
    m = init_model(Architecture((2, 2)), 0)
    with pytest.raises(ContractViolation):
        loss_and_grad(m, np.zeros((0, 2)), np.zeros(0, dtype=int))


def test_labels_out_of_range_rejected():
    m = init_model(Architecture((2, 2)), 0)
    with pytest.raises(ContractViolation):
        loss_and_grad(m, np.zeros((1, 2)), np.array([2]))


def _fd_check(arch, n, seed):
    rng = np.random.default_rng(seed)
    m = ModelParams(arch, rng.normal(0, 0.7, arch.param_count))
    x = rng.random((n, arch.input_dim))
    y = rng.integers(0, arch.num_classes, n)
    _, g = loss_and_grad(m, x, y)
    fd = central_difference(lambda v: loss_and_grad(ModelParams(arch, v), x, y)[0], m.values)
    return relative_error(g, fd).max()


def test_gradient_matches_finite_differences_example():
    assert _fd_check(Architecture((3, 4, 2)), 5, seed=0) < 1e-4


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 8),
       sizes=st.lists(st.integers(1, 6), min_size=2, max_size=4))
def test_gradient_property(seed, n, sizes):
    arch = Architecture(tuple(sizes))
    if arch.param_count > 200:
        return
    assert _fd_check(arch, n, seed) < 1e-4


def test_small_sgd_step_decreases_loss():
    failures = []
    for trial in range(20):
        rng = np.random.default_rng(1000 + trial)
        arch = Architecture((4, 5, 3))
        m = ModelParams(arch, rng.normal(0, 0.5, arch.param_count))
        x, y = rng.random((8, 4)), rng.integers(0, 3, 8)
        loss, g = loss_and_grad(m, x, y)
        after, _ = loss_and_grad(ModelParams(arch, m.values - 1e-3 * g), x, y)
        if not after < loss:
            failures.append((m, x, y, loss, g))
    assert len(failures) <= 1
    for m, x, y, loss, g in failures:
        after, _ = loss_and_grad(ModelParams(m.arch, m.values - 1e-4 * g), x, y)
        assert after < loss


def test_local_train_step_count_reference_setup():
    rng = np.random.default_rng(0)
    data = LabeledDataset(rng.random((350, 3)), rng.integers(0, 2, 350), 2)
    h = Hyper(batch_size=50, local_epochs=30, learning_rate=0.25, rounds=1)
    _, steps = local_train(init_model(Architecture((3, 2)), 0), data, h, seed=1)
    assert steps == 30 * 7 == 210


def test_local_train_partial_last_batch(tiny_dataset):
    h = Hyper(batch_size=2, local_epochs=3, learning_rate=0.1, rounds=1)
    _, steps = local_train(init_model(Architecture((2, 2)), 0), tiny_dataset, h, seed=0)
    assert steps == 3 * 3


def test_zero_epochs_rejected():
    with pytest.raises(ConfigError):
        Hyper(batch_size=50, local_epochs=0, learning_rate=0.25, rounds=1)


@pytest.mark.parametrize("lr", [0.0, -1.0, float("nan")])
def test_bad_learning_rate_rejected(lr):
    with pytest.raises(ConfigError):
        Hyper(batch_size=1, local_epochs=1, learning_rate=lr, rounds=1)


def test_tiny_learning_rate_is_a_no_op(tiny_dataset):
    m = init_model(Architecture((2, 3, 2)), 4)
    h = Hyper(batch_size=2, local_epochs=2, learning_rate=1e-12, rounds=1)
    trained, _ = local_train(m, tiny_dataset, h, seed=0)
    np.testing.assert_allclose(trained.values, m.values, atol=1e-9)


def test_local_train_leaves_input_untouched_and_is_deterministic(tiny_dataset):
    m = init_model(Architecture((2, 3, 2)), 4)
    before = m.values.copy()
    h = Hyper(batch_size=2, local_epochs=4, learning_rate=0.5, rounds=1)
    a, _ = local_train(m, tiny_dataset, h, seed=9)
    b, _ = local_train(m, tiny_dataset, h, seed=9)
    assert m.values.tobytes() == before.tobytes()
    assert a.values.tobytes() == b.values.tobytes()
    assert not np.array_equal(a.values, before)


def test_local_train_empty_dataset_rejected():
    empty = LabeledDataset(np.zeros((0, 2)), np.zeros(0, dtype=int), 2)
    with pytest.raises(ContractViolation):
        local_train(init_model(Architecture((2, 2)), 0), empty, Hyper(1, 1, 0.1, 1), 0)


def test_evaluate_tie_breaks_to_lowest_class():
    m = ModelParams(Architecture((2, 2)), np.zeros(6))
    data = LabeledDataset(np.random.default_rng(0).random((6, 2)), np.array([0, 1, 0, 1, 0, 1]), 2)
    score = evaluate(m, data)
    assert score.accuracy == 0.5
    assert score.mean_loss == pytest.approx(math.log(2))


def test_evaluate_single_correct_sample_and_determinism():
    m = ModelParams(Architecture((2, 2)), np.array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0]))
    data = LabeledDataset(np.array([[1.0, 0.0]]), np.array([0]), 2)
    assert evaluate(m, data).accuracy == 1.0
    assert evaluate(m, data) == evaluate(m, data)


def test_evaluate_empty_rejected():
    m = init_model(Architecture((2, 2)), 0)
    with pytest.raises(ContractViolation):
        evaluate(m, LabeledDataset(np.zeros((0, 2)), np.zeros(0, dtype=int), 2))
