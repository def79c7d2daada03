"""Scaled dot-product and multi-head attention."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .errors import ConfigError, ContractError, DimensionError
from .tensor import Tensor

MASK_FILL = -1e9


@dataclass(frozen=True)
class AttentionConfig:
    d_model: int
    heads: int = 8

    def __post_init__(self):
        if self.d_model < 1 or self.heads < 1:
            raise ConfigError("d_model and heads must be >= 1")
        if self.d_model % self.heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by heads={self.heads}")

    @property
    def d_k(self) -> int:
        return self.d_model // self.heads

    @property
    def d_v(self) -> int:
        return self.d_k


class HeadProjections:
    """Learnable projections for ``o`` attention heads.

    The per-head query/key/value matrices (each ``d_model x d_k``) are stored
    side by side, so ``w_q[:, i*d_k:(i+1)*d_k]`` is head ``i``'s query
    projection.  ``w_out`` is ``(o*d_v) x d_model``.
    """

    def __init__(self, w_q: Tensor, w_k: Tensor, w_v: Tensor, w_out: Tensor, heads: int):
        d_model = w_q.shape[0]
        cfg = AttentionConfig(d_model, heads)
        width = heads * cfg.d_k
        for name, w, shape in (
            ("w_q", w_q, (d_model, width)),
            ("w_k", w_k, (d_model, width)),
            ("w_v", w_v, (d_model, width)),
            ("w_out", w_out, (width, d_model)),
        ):
            if w.shape != shape:
                raise DimensionError(f"{name} has shape {w.shape}, expected {shape}")
        self.config = cfg
        self.w_q, self.w_k, self.w_v, self.w_out = w_q, w_k, w_v, w_out

    @classmethod
    def init(cls, d_model: int, heads: int, rng: np.random.Generator) -> "HeadProjections":
        """Xavier-uniform initialization."""
        cfg = AttentionConfig(d_model, heads)
        width = heads * cfg.d_k

        def xavier(rows, cols):
            bound = math.sqrt(6.0 / (rows + cols))
            return Tensor(rng.uniform(-bound, bound, (rows, cols)), requires_grad=True)

        return cls(
            xavier(d_model, width),
            xavier(d_model, width),
            xavier(d_model, width),
            xavier(width, d_model),
            heads,
        )

    def head(self, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Head ``i``'s (W_Q, W_K, W_V) as plain arrays."""
        dk = self.config.d_k
        cols = slice(i * dk, (i + 1) * dk)
        return self.w_q.data[:, cols], self.w_k.data[:, cols], self.w_v.data[:, cols]

    def named_parameters(self) -> dict[str, Tensor]:
        return {"w_q": self.w_q, "w_k": self.w_k, "w_v": self.w_v, "w_out": self.w_out}


def make_causal_mask(length: int) -> np.ndarray:
    """Boolean ``length x length`` mask allowing position ``j`` for query ``i`` iff ``j <= i``."""
    if length < 1:
        raise ContractError("causal mask length must be >= 1")
    return np.tril(np.ones((length, length), dtype=bool))


def _mask_bias(mask: np.ndarray, shape_qk: tuple[int, int]) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[-2:] != shape_qk:
        raise DimensionError(f"mask shape {mask.shape} does not match logits {shape_qk}")
    if not mask.any(axis=-1).all():
        raise ContractError("attention mask leaves a query row with no allowed key")
    return np.where(mask, 0.0, MASK_FILL)


def attention_weights(q, k, mask: np.ndarray | None = None) -> Tensor:
    """``Softmax(Q K^T / sqrt(d_k))`` with masked logits pushed to -1e9."""
    q, k = tt._as_tensor(q), tt._as_tensor(k)
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"query dim {q.shape} and key dim {k.shape} differ")
    logits = tt.matmul(q * (1.0 / math.sqrt(q.shape[-1])), k.T)
    if mask is not None:
        logits = logits + _mask_bias(mask, (q.shape[-2], k.shape[-2]))
    return tt.softmax(logits, axis=-1)


def scaled_dot_product_attention(q, k, v, mask: np.ndarray | None = None) -> Tensor:
    """Attention over ``(..., T_q, d_k)`` queries and ``(..., T_k, ·)`` keys/values."""
    q, k, v = (tt._as_tensor(t) for t in (q, k, v))
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"keys {k.shape} and values {v.shape} need the same length")
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"query dim {q.shape} and key dim {k.shape} differ")
    bias = None if mask is None else _mask_bias(mask, (q.shape[-2], k.shape[-2]))
    return tt.attention(q, k, v, bias)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    lead, length, width = x.shape[:-2], x.shape[-2], x.shape[-1]
    x = x.reshape(lead + (length, heads, width // heads))
    return x.swapaxes(-2, -3)


def _merge_heads(x: Tensor) -> Tensor:
    x = x.swapaxes(-2, -3)
    lead, length, heads, dv = x.shape[:-3], x.shape[-3], x.shape[-2], x.shape[-1]
    return x.reshape(lead + (length, heads * dv))


def multi_head_attention(x_q, x_kv, proj: HeadProjections, mask: np.ndarray | None = None) -> Tensor:
    """Multi-head attention; self-attention when ``x_q is x_kv``.

    Inputs are ``(..., T, d_model)``; leading axes are treated as a batch.
    """
    x_q, x_kv = tt._as_tensor(x_q), tt._as_tensor(x_kv)
    d_model = proj.config.d_model
    if x_q.shape[-1] != d_model or x_kv.shape[-1] != d_model:
        raise DimensionError(
            f"inputs {x_q.shape}, {x_kv.shape} do not end in d_model={d_model}"
        )
    heads = proj.config.heads
    q = _split_heads(tt.matmul(x_q, proj.w_q), heads)
    k = _split_heads(tt.matmul(x_kv, proj.w_k), heads)
    v = _split_heads(tt.matmul(x_kv, proj.w_v), heads)
    context = scaled_dot_product_attention(q, k, v, mask)
    return tt.matmul(_merge_heads(context), proj.w_out)
