import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mindloop import tensor as T
from mindloop.errors import ContractError, ShapeError
from mindloop.seeding import make_rng
from mindloop.tensor import Tensor

from oracles import central_diff, matmul_triple_loop, max_rel_err


def test_matmul_identity():
    eye = Tensor(np.eye(2, dtype=np.float32))
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(T.matmul(eye, m).data, m.data)


def test_matmul_zero_annihilator():
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    z = Tensor(np.zeros((2, 2), dtype=np.float32))
    np.testing.assert_array_equal(T.matmul(m, z).data, np.zeros((2, 2)))


def test_matmul_matches_triple_loop():
    rng = make_rng(7)
    a = rng.standard_normal((3, 4)).astype(np.float32)
    b = rng.standard_normal((4, 2)).astype(np.float32)
    got = T.matmul(Tensor(a), Tensor(b)).data
    want = matmul_triple_loop(a, b)
    assert np.max(np.abs(got - want)) < 1e-6


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_backward_sum_gives_ones():
    x = Tensor(np.arange(6, dtype=np.float32).reshape(2, 3), requires_grad=True)
    T.sum_all(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3), dtype=np.float32))


def test_backward_square_sum():
    x = Tensor([1.0, -2.0], requires_grad=True)
    T.square_sum(x).backward()
    np.testing.assert_allclose(x.grad, [2.0, -4.0])


def test_backward_requires_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        (x * 2.0).backward()


def test_backward_accumulates_until_reset():
    x = Tensor([3.0], requires_grad=True)
    loss = T.square_sum(x)
    loss.backward()
    first = x.grad.copy()
    loss2 = T.square_sum(x)
    loss2.backward()
    np.testing.assert_allclose(x.grad, 2 * first)
    x.zero_grad()
    assert x.grad is None


def test_broadcast_add_bias_grad_reduces():
    x = Tensor(np.ones((4, 3), dtype=np.float32), requires_grad=True)
    b = Tensor(np.zeros(3, dtype=np.float32), requires_grad=True)
    T.sum_all(T.add(x, b)).backward()
    np.testing.assert_array_equal(b.grad, np.full(3, 4.0, dtype=np.float32))


def test_broadcast_mul_column_mask():
    x = Tensor(np.ones((4, 3), dtype=np.float32), requires_grad=True)
    w = Tensor(np.array([[1.0], [0.0], [2.0], [0.0]], dtype=np.float32))
    T.sum_all(T.mul(x, w)).backward()
    np.testing.assert_array_equal(x.grad, np.repeat([[1.0], [0.0], [2.0], [0.0]], 3, axis=1))


def test_concat_and_narrow_round_trip_grads():
    a = Tensor(np.ones((2, 3), dtype=np.float32), requires_grad=True)
    b = Tensor(np.ones((2, 5), dtype=np.float32), requires_grad=True)
    joined = T.concat([a, b], axis=1)
    back = T.narrow(joined, 1, 3, 8)
    T.square_sum(back).backward()
    np.testing.assert_array_equal(a.grad, np.zeros((2, 3)))
    np.testing.assert_array_equal(b.grad, np.full((2, 5), 2.0))


def test_narrow_out_of_range():
    a = Tensor(np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        T.narrow(a, 1, 0, 4)


@pytest.mark.parametrize("seed", range(8))
def test_random_graph_matches_finite_differences(seed):
    """Composite graph of every op, analytic grads vs float64 central differences."""
    rng = make_rng(seed)
    a = rng.uniform(-1, 1, (3, 4)).astype(np.float32)
    b = rng.uniform(-1, 1, (4, 5)).astype(np.float32)
    c = rng.uniform(-1, 1, (3, 5)).astype(np.float32)
    d = rng.uniform(-1, 1, (3, 2)).astype(np.float32)

    def forward64(arrs):
        a64, b64, c64, d64 = arrs
        y = np.tanh(a64 @ b64)
        z = 1.0 / (1.0 + np.exp(-(y * c64 + c64)))
        j = np.concatenate([z, d64], axis=1)
        k = j[:, 1:6]
        return float(np.sum(k * k) + 0.5 * np.sum(j))

    ta, tb, tc, td = (Tensor(x, requires_grad=True) for x in (a, b, c, d))
    y = T.tanh(T.matmul(ta, tb))
    z = T.sigmoid(T.add(T.mul(y, tc), tc))
    j = T.concat([z, td], axis=1)
    k = T.narrow(j, 1, 1, 6)
    loss = T.add(T.square_sum(k), T.scale(T.sum_all(j), 0.5))
    loss.backward()

    numeric = central_diff(forward64, [a, b, c, d])
    for tens, num in zip((ta, tb, tc, td), numeric):
        assert max_rel_err(tens.grad, num) < 1e-3


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=16))
def test_finite_inputs_stay_finite(vals):
    x = Tensor(np.array(vals, dtype=np.float32).reshape(1, -1), requires_grad=True)
    out = T.sigmoid(T.tanh(x))
    loss = T.square_sum(out)
    loss.backward()
    assert np.isfinite(out.data).all()
    assert np.isfinite(loss.data).all()
    assert np.isfinite(x.grad).all()


def test_inference_builds_no_graph():
    a = Tensor(np.ones((2, 2), dtype=np.float32))
    b = Tensor(np.ones((2, 2), dtype=np.float32))
    out = T.tanh(T.matmul(a, b))
    assert out._parents == () and out._backward is None
