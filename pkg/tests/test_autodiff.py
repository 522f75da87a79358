import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from text2scene import autodiff as ad


def _rand(rng, *shape):
    return ad.parameter(rng.normal(size=shape))


def test_softmax_trivial_symmetry():
    out = ad.softmax(ad.constant([0.0, 0.0, 0.0]))
    assert np.allclose(out.data, [1 / 3] * 3)


def test_softmax_rows_sum_to_one(rng):
    out = ad.softmax(ad.constant(rng.normal(size=(4, 7))), axis=-1)
    assert np.allclose(out.data.sum(axis=-1), 1.0, atol=1e-12)


def test_softmax_mask_gives_exact_zeros(rng):
    mask = np.array([[True, True, False], [True, False, False]])
    out = ad.softmax(ad.constant(rng.normal(size=(2, 3))), axis=-1, mask=mask)
    assert (out.data[~mask] == 0.0).all()
    assert np.allclose(out.data.sum(axis=-1), 1.0)


def test_softmax_fully_masked_row_raises(rng):
    mask = np.zeros((2, 3), dtype=bool)
    with pytest.raises(ad.DimensionError):
        ad.softmax(ad.constant(rng.normal(size=(2, 3))), axis=-1, mask=mask)


def test_matmul_identity(rng):
    x = rng.normal(size=(4, 4))
    out = ad.matmul(ad.constant(np.eye(4)), ad.constant(x))
    assert np.allclose(out.data, x)


def test_shape_mismatch_names_shapes(rng):
    with pytest.raises(ad.DimensionError, match=r"\(2, 3\).*\(4, 5\)"):
        ad.matmul(_rand(rng, 2, 3), _rand(rng, 4, 5))


def test_embedding_out_of_range(rng):
    with pytest.raises(IndexError):
        ad.embedding_lookup(_rand(rng, 5, 4), np.array([0, 5]))


def test_tanh_derivative_finite_difference():
    x = ad.parameter(np.array([0.5]))
    out = ad.tanh(x)
    out.backward()
    eps = 1e-6
    num = (np.tanh(0.5 + eps) - np.tanh(0.5 - eps)) / (2 * eps)
    assert abs(x.grad[0] - num) / abs(num) < 1e-6


def test_dropout_identity_when_not_training(rng):
    x = _rand(rng, 3, 4)
    assert ad.dropout(x, 0.5, seed=1, train=False) is x


def test_dropout_deterministic_given_seed(rng):
    x = _rand(rng, 64, 64)
    a = ad.dropout(x, 0.5, seed=9, train=True).data
    b = ad.dropout(x, 0.5, seed=9, train=True).data
    c = ad.dropout(x, 0.5, seed=10, train=True).data
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_grad_check_linear_function_exact(rng):
    w = ad.constant(rng.normal(size=(5,)))
    x = _rand(rng, 5)
    assert ad.grad_check(lambda: ad.tsum(ad.mul(x, w)), [x]) < 1e-8


def test_grad_check_constant_function(rng):
    x = _rand(rng, 3)
    c = ad.constant(np.array(1.0))

    def f():
        return ad.add(ad.scale(ad.tsum(x), 0.0), c)

    assert ad.grad_check(f, [x]) == 0.0


def test_grad_check_rejects_non_scalar(rng):
    x = _rand(rng, 3)
    with pytest.raises(ad.DimensionError):
        ad.grad_check(lambda: ad.tanh(x), [x])


def test_backward_requires_scalar(rng):
    with pytest.raises(ad.DimensionError):
        ad.tanh(_rand(rng, 3)).backward()


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10_000), rows=st.integers(1, 6), cols=st.integers(1, 6),
       inner=st.integers(1, 6))
def test_primitive_gradients_random_shapes(seed, rows, cols, inner):
    rng = np.random.default_rng(seed)
    a = _rand(rng, rows, inner)
    b = _rand(rng, inner, cols)
    w = ad.constant(rng.normal(size=(rows, cols)))

    def f():
        y = ad.tanh(ad.matmul(a, b))
        y = ad.add(ad.mul(y, w), ad.sigmoid(y))
        return ad.tsum(ad.mul(ad.softmax(y, axis=-1), w))

    assert ad.grad_check(f, [a, b]) < 1e-4


def test_batched_matmul_gradient(rng):
    a = _rand(rng, 3, 4, 5)
    b = _rand(rng, 5, 2)
    w = ad.constant(rng.normal(size=(3, 4, 2)))
    assert ad.grad_check(lambda: ad.tsum(ad.mul(ad.matmul(a, b), w)), [a, b]) < 1e-6


def test_concat_and_reshape_gradients(rng):
    a = _rand(rng, 2, 3)
    b = _rand(rng, 2, 2)
    w = ad.constant(rng.normal(size=(10,)))

    def f():
        return ad.tsum(ad.mul(ad.reshape(ad.concat([a, b], axis=1), (10,)), w))

    assert ad.grad_check(f, [a, b]) < 1e-6


def test_nll_gradient_with_weights_and_mask(rng):
    logits = _rand(rng, 4, 6)
    targets = np.array([1, 0, 5, 3])
    weights = np.abs(rng.normal(size=6)) + 0.5
    mask = np.array([1.0, 1.0, 0.0, 1.0])

    def f():
        return ad.nll(ad.softmax(logits, axis=-1), targets, weights, mask)

    assert ad.grad_check(f, [logits]) < 1e-6


def test_nll_masked_row_contributes_nothing(rng):
    logits = ad.constant(rng.normal(size=(2, 4)))
    dist = ad.softmax(logits, axis=-1)
    targets = np.array([1, 2])
    w = np.ones(4)
    full = ad.nll(dist, targets, w, np.array([1.0, 0.0])).item()
    only_first = ad.nll(ad.softmax(ad.constant(logits.data[:1]), axis=-1),
                        targets[:1], w).item()
    assert full == pytest.approx(only_first)


def test_nll_clamps_zero_probability():
    before = ad.clamp_count
    dist = ad.constant(np.array([[1.0, 0.0]]))
    out = ad.nll(dist, np.array([1]), np.ones(2))
    assert np.isfinite(out.data)
    assert ad.clamp_count == before + 1


def test_backward_linearity(rng):
    x_data = rng.normal(size=(3, 3))

    def grad_of(scale_a, scale_b):
        x = ad.parameter(x_data.copy())
        la = ad.scale(ad.tsum(ad.tanh(x)), scale_a)
        lb = ad.scale(ad.tsum(ad.sigmoid(x)), scale_b)
        ad.add(la, lb).backward()
        return x.grad

    combined = grad_of(1.0, 1.0)
    assert np.allclose(combined, grad_of(1.0, 0.0) + grad_of(0.0, 1.0))


def test_repeated_backward_does_not_accumulate(rng):
    x = _rand(rng, 3)
    out = ad.tsum(ad.tanh(x))
    out.backward()
    g1 = x.grad.copy()
    out.backward()
    assert np.allclose(x.grad, g1)


def test_gradient_flows_through_shared_subexpression(rng):
    x = _rand(rng, 4)
    w = ad.constant(rng.normal(size=(4,)))

    def f():
        y = ad.tanh(x)
        return ad.tsum(ad.mul(ad.add(y, y), w))

    assert ad.grad_check(f, [x]) < 1e-6
