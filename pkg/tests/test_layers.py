import numpy as np
import pytest

from mindloop import tensor as T
from mindloop.errors import ShapeError
from mindloop.layers import FcLayer, LstmLayer
from mindloop.seeding import make_rng
from mindloop.tensor import Tensor

from oracles import central_diff, fc_scalar, lstm_scalar, max_rel_err


def test_fc_identity_passthrough():
    layer = FcLayer(Tensor(np.eye(2, dtype=np.float32), requires_grad=True),
                    Tensor(np.zeros(2, dtype=np.float32), requires_grad=True),
                    "identity")
    out = layer(Tensor([[0.3, -0.3]]))
    np.testing.assert_allclose(out.data, [[0.3, -0.3]])


def test_fc_zero_weights_tanh_is_zero():
    layer = FcLayer(Tensor(np.zeros((3, 2), dtype=np.float32)),
                    Tensor(np.zeros(3, dtype=np.float32)), "tanh")
    out = layer(Tensor([[5.0, -7.0]]))
    np.testing.assert_array_equal(out.data, np.zeros((1, 3)))


@pytest.mark.parametrize("activation", ["tanh", "sigmoid", "identity"])
def test_fc_matches_scalar_oracle(activation):
    rng = make_rng(11)
    layer = FcLayer.new(rng, 4, 3, activation)
    x = rng.uniform(-1, 1, (1, 4)).astype(np.float32)
    got = layer(Tensor(x)).data[0]
    want = fc_scalar(x, layer.w.data, layer.b.data, activation)
    assert np.max(np.abs(got - want)) < 1e-6


def test_fc_output_ranges():
    rng = make_rng(3)
    x = Tensor(rng.uniform(-5, 5, (8, 6)).astype(np.float32))
    sig = FcLayer.new(rng, 6, 4, "sigmoid")(x).data
    th = FcLayer.new(rng, 6, 4, "tanh")(x).data
    assert ((sig > 0) & (sig < 1)).all()
    assert ((th > -1) & (th < 1)).all()


def test_fc_shape_error():
    rng = make_rng(0)
    layer = FcLayer.new(rng, 4, 3, "tanh")
    with pytest.raises(ShapeError):
        layer(Tensor(np.zeros((1, 5), dtype=np.float32)))


def test_lstm_zero_fixed_point():
    layer = LstmLayer.new(make_rng(1), 3, 4)
    for gate in layer.GATES:
        layer.w[gate].data[:] = 0
        layer.b[gate].data[:] = 0
    h, c = layer.zero_state(1)
    h2, c2 = layer.step(Tensor(np.zeros((1, 3), dtype=np.float32)), h, c)
    np.testing.assert_array_equal(h2.data, np.zeros((1, 4)))
    np.testing.assert_array_equal(c2.data, np.zeros((1, 4)))


def test_lstm_matches_scalar_oracle():
    rng = make_rng(17)
    layer = LstmLayer.new(rng, 3, 5)
    x = rng.uniform(-1, 1, (1, 3)).astype(np.float32)
    h = rng.uniform(-1, 1, (1, 5)).astype(np.float32)
    c = rng.uniform(-1, 1, (1, 5)).astype(np.float32)
    h2, c2 = layer.step(Tensor(x), Tensor(h), Tensor(c))
    wh, wc = lstm_scalar(x, h, c,
                         {k: v.data for k, v in layer.w.items()},
                         {k: v.data for k, v in layer.b.items()})
    assert np.max(np.abs(h2.data[0] - wh)) < 1e-6
    assert np.max(np.abs(c2.data[0] - wc)) < 1e-6


def test_lstm_saturated_forget_keeps_cell_monotone():
    """With a huge forget bias the new cell tracks c plus the gated candidate."""
    rng = make_rng(5)
    layer = LstmLayer.new(rng, 2, 4)
    layer.b["f"].data[:] = 10.0
    x = Tensor(rng.uniform(-1, 1, (1, 2)).astype(np.float32))
    lo = Tensor(np.full((1, 4), -0.5, dtype=np.float32))
    hi = Tensor(np.full((1, 4), 0.5, dtype=np.float32))
    h0 = Tensor(np.zeros((1, 4), dtype=np.float32))
    _, c_lo = layer.step(x, h0, lo)
    _, c_hi = layer.step(x, h0, hi)
    assert (c_hi.data > c_lo.data).all()
    np.testing.assert_allclose(c_hi.data - c_lo.data, 1.0, atol=2e-3)


def test_lstm_state_shape_error():
    layer = LstmLayer.new(make_rng(2), 3, 4)
    with pytest.raises(ShapeError):
        layer.step(Tensor(np.zeros((1, 3), dtype=np.float32)),
                   Tensor(np.zeros((1, 5), dtype=np.float32)),
                   Tensor(np.zeros((1, 5), dtype=np.float32)))


def test_two_layer_net_gradients_match_finite_differences():
    rng = make_rng(23)
    l1 = FcLayer.new(rng, 5, 4, "tanh")
    l2 = FcLayer.new(rng, 4, 2, "sigmoid")
    x = rng.uniform(-1, 1, (3, 5)).astype(np.float32)
    target = rng.uniform(0, 1, (3, 2)).astype(np.float32)

    out = l2(l1(Tensor(x)))
    loss = T.square_sum(T.sub(out, Tensor(target)))
    loss.backward()

    def forward64(arrs):
        w1, b1, w2, b2 = arrs
        hid = np.tanh(x.astype(np.float64) @ w1.T + b1)
        o = 1.0 / (1.0 + np.exp(-(hid @ w2.T + b2)))
        return float(np.sum((o - target) ** 2))

    numeric = central_diff(forward64, [l1.w.data, l1.b.data, l2.w.data, l2.b.data])
    for tens, num in zip((l1.w, l1.b, l2.w, l2.b), numeric):
        assert max_rel_err(tens.grad, num) < 1e-3
