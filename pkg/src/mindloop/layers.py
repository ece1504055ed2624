"""Fully connected and LSTM layers over the tensor engine.

Weights initialize uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)). Activations are
limited to tanh, sigmoid and identity; anything spikier has no place in this
architecture.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor

ACTIVATIONS = ("tanh", "sigmoid", "identity")


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def _apply_activation(x: Tensor, activation: str) -> Tensor:
    if activation == "tanh":
        return T.tanh(x)
    if activation == "sigmoid":
        return T.sigmoid(x)
    if activation == "identity":
        return x
    raise ValueError(f"unknown activation {activation!r}")


class FcLayer:
    """y = activation(W x + b), batched as rows."""

    def __init__(self, w: Tensor, b: Tensor, activation: str = "identity"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if w.data.ndim != 2 or b.data.ndim != 1 or b.shape[0] != w.shape[0]:
            raise ShapeError(f"FcLayer wants W[out,in], b[out]; got {w.shape}, {b.shape}")
        self.w = w
        self.b = b
        self.activation = activation

    @classmethod
    def new(cls, rng: np.random.Generator, n_in: int, n_out: int, activation: str = "identity"):
        w = Tensor(_uniform_init(rng, (n_out, n_in), n_in), requires_grad=True)
        b = Tensor(_uniform_init(rng, (n_out,), n_in), requires_grad=True)
        return cls(w, b, activation)

    @property
    def n_in(self) -> int:
        return self.w.shape[1]

    @property
    def n_out(self) -> int:
        return self.w.shape[0]

    def forward(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"FcLayer({self.n_in}->{self.n_out}) got input {x.shape}")
        return _apply_activation(T.add(T.matmul(x, _transposed(self.w)), self.b), self.activation)

    __call__ = forward

    def params(self, prefix: str):
        return [(f"{prefix}.W", self.w), (f"{prefix}.b", self.b)]


def _transposed(w: Tensor) -> Tensor:
    # thin view op: y = x @ W^T is the only way weights are consumed
    out = Tensor(w.data.T)
    if w.requires_grad or w._parents:
        def backward(g):
            w._accumulate(g.T)
        out._parents = (w,)
        out._backward = backward
        out.requires_grad = True
    return out


class LstmLayer:
    """Standard LSTM cell with one weight matrix per gate over [x, h]."""

    GATES = ("i", "f", "o", "g")

    def __init__(self, weights: dict[str, Tensor], biases: dict[str, Tensor], n_in: int, hidden: int):
        self.w = weights
        self.b = biases
        self.n_in = n_in
        self.hidden = hidden

    @classmethod
    def new(cls, rng: np.random.Generator, n_in: int, hidden: int, forget_bias: float = 1.0):
        """forget_bias shifts the forget gate open at init so gradients
        survive the sequence lengths used here."""
        fan = n_in + hidden
        weights = {}
        biases = {}
        for gate in cls.GATES:
            weights[gate] = Tensor(_uniform_init(rng, (hidden, fan), fan), requires_grad=True)
            b = _uniform_init(rng, (hidden,), fan)
            if gate == "f":
                b += np.float32(forget_bias)
            biases[gate] = Tensor(b, requires_grad=True)
        return cls(weights, biases, n_in, hidden)

    def zero_state(self, batch: int) -> tuple[Tensor, Tensor]:
        z = np.zeros((batch, self.hidden), dtype=np.float32)
        return Tensor(z), Tensor(z.copy())

    def step(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        """One cell update; returns (h', c')."""
        if x.data.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"LstmLayer({self.n_in}, H={self.hidden}) got input {x.shape}")
        if h.shape != (x.shape[0], self.hidden) or c.shape != h.shape:
            raise ShapeError(f"LSTM state shapes {h.shape}/{c.shape} do not match batch {x.shape[0]}, H={self.hidden}")
        z = T.concat([x, h], axis=1)
        gate_i = T.sigmoid(T.add(T.matmul(z, _transposed(self.w["i"])), self.b["i"]))
        gate_f = T.sigmoid(T.add(T.matmul(z, _transposed(self.w["f"])), self.b["f"]))
        gate_o = T.sigmoid(T.add(T.matmul(z, _transposed(self.w["o"])), self.b["o"]))
        cand = T.tanh(T.add(T.matmul(z, _transposed(self.w["g"])), self.b["g"]))
        c_new = T.add(T.mul(gate_f, c), T.mul(gate_i, cand))
        h_new = T.mul(gate_o, T.tanh(c_new))
        return h_new, c_new

    def params(self, prefix: str):
        out = []
        for gate in self.GATES:
            out.append((f"{prefix}.w_{gate}", self.w[gate]))
            out.append((f"{prefix}.b_{gate}", self.b[gate]))
        return out
