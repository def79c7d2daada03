import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import tsb.tensor as tt
from op_cases import CASES
from tsb.errors import ContractError, DimensionError, NumericError
from tsb.tensor import Tensor, grad_check


def naive_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for r in range(k):
                s += a[i, r] * b[r, j]
            out[i, j] = s
    return out


# -- matmul ----------------------------------------------------------------------


def test_matmul_identity_and_zero():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(tt.matmul(np.eye(2), x).data, x)
    np.testing.assert_array_equal(tt.matmul(np.zeros((2, 2)), x).data, np.zeros((2, 2)))


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(0)
    for _ in range(10):
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        np.testing.assert_allclose(tt.matmul(a, b).data, naive_matmul(a, b), rtol=0, atol=1e-12)


def test_matmul_shape_error_names_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        tt.matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_matmul_vector_promotion():
    rng = np.random.default_rng(1)
    a, v = rng.normal(size=(3, 4)), rng.normal(size=4)
    np.testing.assert_allclose(tt.matmul(a, v).data, a @ v)
    assert tt.matmul(v, a.T).shape == (3,)


# -- softmax ---------------------------------------------------------------------


def test_softmax_simple_cases():
    np.testing.assert_allclose(tt.softmax(np.zeros(3)).data, np.full(3, 1 / 3), atol=1e-15)
    np.testing.assert_array_equal(tt.softmax(np.array([7.5])).data, [1.0])


def test_softmax_matches_extended_precision():
    mpmath.mp.dps = 40
    xs = [1, 2, 3]
    exps = [mpmath.exp(v) for v in xs]
    total = mpmath.fsum(exps)
    expect = np.array([float(e / total) for e in exps])
    np.testing.assert_allclose(tt.softmax(np.array(xs, dtype=float)).data, expect, rtol=0, atol=1e-12)


def test_softmax_is_shift_stable():
    out = tt.softmax(np.array([1000.0, 1001.0, 1002.0])).data
    np.testing.assert_allclose(out, tt.softmax(np.array([0.0, 1.0, 2.0])).data, atol=1e-15)


def test_softmax_rejects_non_finite():
    with pytest.raises(NumericError):
        tt.softmax(np.array([0.0, np.nan]))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 5), elements=st.floats(-700, 700)))
def test_softmax_rows_sum_to_one(x):
    out = tt.softmax(x, axis=-1).data
    assert (out >= 0).all()
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-9)


# -- layer norm ------------------------------------------------------------------


def test_layer_norm_constant_input():
    x = np.full((2, 4), 3.0)
    np.testing.assert_allclose(tt.layer_norm(x, np.ones(4), np.zeros(4)).data, 0.0, atol=1e-12)
    np.testing.assert_allclose(tt.layer_norm(x, np.ones(4), np.full(4, 0.7)).data, 0.7, atol=1e-12)


def test_layer_norm_moments():
    x = np.random.default_rng(3).normal(3.0, 4.0, size=(5, 16))
    out = tt.layer_norm(x, np.ones(16), np.zeros(16)).data
    assert np.abs(out.mean(axis=-1)).max() < 1e-9
    var = x.var(axis=-1)
    np.testing.assert_allclose(out.var(axis=-1), var / (var + 1e-5), atol=1e-12)


def test_layer_norm_shape_checks():
    with pytest.raises(DimensionError):
        tt.layer_norm(np.zeros((2, 4)), np.ones(3), np.zeros(4))
    with pytest.raises(ContractError):
        tt.layer_norm(np.zeros((2, 4)), np.ones(4), np.zeros(4), eps=0.0)


# -- elementwise and shape ops ----------------------------------------------------


def test_analytic_values():
    assert tt.sigmoid(np.array(0.0)).item() == 0.5
    assert tt.tanh(np.array(0.0)).item() == 0.0
    assert tt.concat([np.zeros((2, 3)), np.zeros((2, 5))], axis=1).shape == (2, 8)


def test_sigmoid_extremes_are_finite():
    out = tt.sigmoid(np.array([-800.0, 800.0])).data
    np.testing.assert_allclose(out, [0.0, 1.0], atol=1e-300)


def test_incompatible_shapes_raise():
    with pytest.raises(DimensionError):
        tt.add(np.zeros((2, 3)), np.zeros((4, 3)))
    with pytest.raises(DimensionError):
        tt.concat([np.zeros((2, 3)), np.zeros((3, 3))], axis=1)
    with pytest.raises(DimensionError):
        tt.reshape(np.zeros(6), (4,))


def test_non_finite_forward_is_an_error():
    with pytest.raises(NumericError), np.errstate(divide="ignore"):
        tt.div(np.ones(2), np.zeros(2))
    prev = tt.set_finite_checks(False)
    try:
        with np.errstate(divide="ignore"):
            assert np.isinf(tt.div(np.ones(2), np.zeros(2)).data).all()
    finally:
        tt.set_finite_checks(prev)


# -- backward --------------------------------------------------------------------


def test_product_rule():
    x, y = Tensor(3.0, requires_grad=True), Tensor(-2.0, requires_grad=True)
    (x * y).backward()
    assert x.grad == -2.0 and y.grad == 3.0


def test_sigmoid_slope_at_zero():
    x = Tensor(0.0, requires_grad=True)
    tt.sigmoid(x).backward()
    assert x.grad == pytest.approx(0.25, abs=1e-15)


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        (x * 2.0).backward()


def test_shared_leaf_accumulates():
    rng = np.random.default_rng(4)
    x = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 3)))

    def f():
        return (tt.tanh(x @ w) * tt.sigmoid(x)).sum() + (x * x).sum()

    rep = grad_check(f, x)
    assert rep.passed, rep.max_rel_error


def test_three_layer_composite():
    rng = np.random.default_rng(5)
    ws = [Tensor(rng.normal(size=s), requires_grad=True) for s in [(4, 6), (6, 5), (5, 2)]]
    x = Tensor(rng.normal(size=(3, 4)))

    def f():
        h = tt.tanh(x @ ws[0])
        h = tt.sigmoid(h @ ws[1])
        return tt.square(h @ ws[2]).mean()

    assert grad_check(f, ws).max_rel_error < 1e-4


def test_graph_is_cleared_and_grads_accumulate_across_calls():
    x = Tensor(2.0, requires_grad=True)
    y = x * x
    y.backward()
    assert y.is_leaf
    (x * x).backward()
    assert x.grad == pytest.approx(8.0)


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with tt.no_grad():
        y = (x * 3.0).sum()
    assert not y.requires_grad and y.is_leaf


def test_ops_are_deterministic():
    rng = np.random.default_rng(6)
    args = [rng.normal(size=(2, 4, 3)), rng.normal(size=(8, 3)), rng.normal(size=(8, 2)), rng.normal(size=8)]
    a = tt.lstm_scan(*args).data
    b = tt.lstm_scan(*args).data
    assert a.tobytes() == b.tobytes()


# -- gradient checking -----------------------------------------------------------


def test_every_op_has_a_case():
    assert set(tt.OPS) <= set(CASES)


@pytest.mark.parametrize("name", sorted(CASES))
def test_op_gradients(name):
    worst = 0.0
    for seed in range(20):
        f, inputs = CASES[name](np.random.default_rng(seed))
        worst = max(worst, grad_check(f, inputs, h=1e-5, tol=1e-4).max_rel_error)
    assert worst < 1e-4


def test_grad_check_quadratic_is_tight():
    x = Tensor(np.random.default_rng(7).normal(size=5))
    assert grad_check(lambda: tt.square(x).sum(), x).max_rel_error < 1e-8


def test_grad_check_flags_corrupted_adjoint():
    x = Tensor(np.random.default_rng(8).normal(size=4))

    def broken_square(a):
        return Tensor._result(a.data**2, (a,), lambda g: (g * a.data,), "broken_square")

    rep = grad_check(lambda: broken_square(x).sum(), x)
    assert not rep.passed
    assert rep.max_rel_error > 0.4


def test_grad_check_rejects_bad_step():
    with pytest.raises(ContractError):
        grad_check(lambda: Tensor(0.0), Tensor(1.0), h=0.0)
