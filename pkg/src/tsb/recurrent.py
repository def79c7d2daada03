"""LSTM cell, bidirectional LSTM layer and the stacked Bi-LSTM sublayer."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import tensor as tt
from .errors import ConfigError, DimensionError
from .tensor import Tensor

GATES = ("f", "i", "c", "o")


@dataclass
class LstmCellParams:
    """Weights of one LSTM cell.

    ``w_*`` map the input (``H x D``), ``u_*`` map the previous hidden state
    (``H x H``) and ``b_*`` are the gate biases (``H``).  Gates: forget ``f``,
    input ``i``, candidate ``c``, output ``o``.
    """

    w_f: Tensor
    w_i: Tensor
    w_c: Tensor
    w_o: Tensor
    u_f: Tensor
    u_i: Tensor
    u_c: Tensor
    u_o: Tensor
    b_f: Tensor
    b_i: Tensor
    b_c: Tensor
    b_o: Tensor

    def __post_init__(self):
        hidden, inp = self.w_f.shape
        for g in GATES:
            checks = (
                (f"w_{g}", (hidden, inp)),
                (f"u_{g}", (hidden, hidden)),
                (f"b_{g}", (hidden,)),
            )
            for name, shape in checks:
                if getattr(self, name).shape != shape:
                    raise DimensionError(
                        f"{name} has shape {getattr(self, name).shape}, expected {shape}"
                    )

    @property
    def hidden_size(self) -> int:
        return self.w_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_f.shape[1]

    @classmethod
    def init(cls, input_size: int, hidden: int, rng: np.random.Generator) -> "LstmCellParams":
        """Uniform(-1/sqrt(H), 1/sqrt(H)) weights and zero biases."""
        bound = 1.0 / math.sqrt(hidden)
        kw = {}
        for g in GATES:
            kw[f"w_{g}"] = Tensor(rng.uniform(-bound, bound, (hidden, input_size)), requires_grad=True)
        for g in GATES:
            kw[f"u_{g}"] = Tensor(rng.uniform(-bound, bound, (hidden, hidden)), requires_grad=True)
        for g in GATES:
            kw[f"b_{g}"] = Tensor(np.zeros(hidden), requires_grad=True)
        return cls(**kw)

    def named_parameters(self) -> dict[str, Tensor]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def stacked(self) -> tuple[Tensor, Tensor, Tensor]:
        """Gate blocks stacked as (4H x D, 4H x H, 4H) in f, i, c, o order."""
        return (
            tt.concat([self.w_f, self.w_i, self.w_c, self.w_o], axis=0),
            tt.concat([self.u_f, self.u_i, self.u_c, self.u_o], axis=0),
            tt.concat([self.b_f, self.b_i, self.b_c, self.b_o], axis=0),
        )


def lstm_cell_step(p_t, h_prev, c_prev, params: LstmCellParams) -> tuple[Tensor, Tensor]:
    """One LSTM step built from primitive tensor ops.

    Accepts single vectors or row batches (``(..., D)``, ``(..., H)``).
    Returns ``(h_t, c_t)``.
    """
    p_t, h_prev, c_prev = (tt._as_tensor(a) for a in (p_t, h_prev, c_prev))
    hid, inp = params.hidden_size, params.input_size
    if p_t.shape[-1] != inp or h_prev.shape[-1] != hid or c_prev.shape[-1] != hid:
        raise DimensionError(
            f"lstm_cell_step: got input {p_t.shape}, h {h_prev.shape}, c {c_prev.shape} "
            f"for D={inp}, H={hid}"
        )

    def gate(g):
        return (
            tt.matmul(p_t, getattr(params, f"w_{g}").T)
            + tt.matmul(h_prev, getattr(params, f"u_{g}").T)
            + getattr(params, f"b_{g}")
        )

    f_t = tt.sigmoid(gate("f"))
    i_t = tt.sigmoid(gate("i"))
    c_hat = tt.tanh(gate("c"))
    c_t = f_t * c_prev + i_t * c_hat
    o_t = tt.sigmoid(gate("o"))
    h_t = o_t * tt.tanh(c_t)
    return h_t, c_t


def lstm_sequence_reference(x, params: LstmCellParams, reverse: bool = False) -> Tensor:
    """Scan ``lstm_cell_step`` over axis -2 of ``x``; slow but op-by-op."""
    x = tt._as_tensor(x)
    steps = x.shape[-2]
    state_shape = x.shape[:-2] + (params.hidden_size,)
    h = Tensor(np.zeros(state_shape))
    c = Tensor(np.zeros(state_shape))
    outs: list[Tensor | None] = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        h, c = lstm_cell_step(x[..., t, :], h, c, params)
        outs[t] = h
    expanded = [o.reshape(o.shape[:-1] + (1, o.shape[-1])) for o in outs]
    return tt.concat(expanded, axis=-2)


def lstm_sequence(x, params: LstmCellParams, reverse: bool = False) -> Tensor:
    w_in, w_rec, bias = params.stacked()
    return tt.lstm_scan(x, w_in, w_rec, bias, reverse=reverse)


@dataclass
class BiLstmLayer:
    forward: LstmCellParams
    backward: LstmCellParams

    def __post_init__(self):
        if self.forward.hidden_size != self.backward.hidden_size:
            raise DimensionError("forward and backward cells need equal hidden sizes")
        if self.forward.input_size != self.backward.input_size:
            raise DimensionError("forward and backward cells need equal input sizes")

    @property
    def output_size(self) -> int:
        return 2 * self.forward.hidden_size

    @classmethod
    def init(cls, input_size: int, hidden: int, rng: np.random.Generator) -> "BiLstmLayer":
        return cls(
            LstmCellParams.init(input_size, hidden, rng),
            LstmCellParams.init(input_size, hidden, rng),
        )

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for direction, cell in (("fwd", self.forward), ("bwd", self.backward)):
            for name, p in cell.named_parameters().items():
                out[f"{direction}.{name}"] = p
        return out


def bilstm_layer_forward(x, layer: BiLstmLayer, fused: bool = True) -> Tensor:
    """``(..., T, D) -> (..., T, 2H)``: forward and time-aligned backward states concatenated."""
    run = lstm_sequence if fused else lstm_sequence_reference
    h_f = run(x, layer.forward)
    h_b = run(x, layer.backward, reverse=True)
    return tt.concat([h_f, h_b], axis=-1)


@dataclass
class StackedBiLstm:
    layers: list[BiLstmLayer]

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("a stacked Bi-LSTM needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.forward.input_size != prev.output_size:
                raise DimensionError("stacked Bi-LSTM layer sizes do not chain")

    @classmethod
    def init(cls, d_model: int, num_layers: int, rng: np.random.Generator) -> "StackedBiLstm":
        """Layers with per-direction hidden size ``d_model // 2``."""
        if d_model % 2:
            raise ConfigError(f"d_model={d_model} must be even for a residual Bi-LSTM")
        if num_layers < 1:
            raise ConfigError("num_layers must be >= 1")
        hidden = d_model // 2
        return cls([BiLstmLayer.init(d_model, hidden, rng) for _ in range(num_layers)])

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for k, layer in enumerate(self.layers):
            for name, p in layer.named_parameters().items():
                out[f"layer{k}.{name}"] = p
        return out


def stacked_bilstm_forward(x, stack: StackedBiLstm, fused: bool = True) -> Tensor:
    for layer in stack.layers:
        x = bilstm_layer_forward(x, layer, fused=fused)
    return x
