"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable operation records its parents and a closure mapping the
output adjoint to the input adjoints.  ``Tensor.backward`` walks the recorded
graph once in reverse topological order, accumulates adjoints additively and
then releases the graph.

The public operations are registered in :data:`OPS` so the test-suite can
verify that each one passes a finite-difference gradient check.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError

__all__ = [
    "Tensor",
    "OPS",
    "no_grad",
    "set_finite_checks",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "sum",
    "mean",
    "square",
    "exp",
    "sigmoid",
    "tanh",
    "softmax",
    "layer_norm",
    "concat",
    "reshape",
    "swapaxes",
    "getitem",
    "attention",
    "lstm_scan",
    "GradCheckReport",
    "numerical_gradient",
    "grad_check",
]

_GRAD_ENABLED = True
_CHECK_FINITE = True

OPS: dict[str, Callable[..., "Tensor"]] = {}


def register(name: str):
    def deco(fn):
        OPS[name] = fn
        return fn

    return deco


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def set_finite_checks(enabled: bool) -> bool:
    """Toggle the NaN/Inf check run after every forward op; returns the old value."""
    global _CHECK_FINITE
    prev = _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)
    return prev


def _check_finite(arr: np.ndarray, op: str) -> None:
    # one summed pass is cheaper than an elementwise mask; a sum that overflows
    # from finite inputs falls through to the exact check
    if _CHECK_FINITE and not np.isfinite(arr.sum()) and not np.isfinite(arr).all():
        raise NumericError(f"{op} produced non-finite values")


class Tensor:
    """An n-dimensional float64 array that can take part in a gradient graph."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @classmethod
    def _result(cls, data: np.ndarray, parents: Sequence["Tensor"], backward, op: str) -> "Tensor":
        _check_finite(data, op)
        out = cls.__new__(cls)
        out.data = data
        out.name = None
        out.grad = None
        needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        if needs:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # -- conveniences -------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return swapaxes(self, -1, -2)

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operators ----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, a: int, b: int):
        return swapaxes(self, a, b)

    # -- reverse mode -------------------------------------------------------
    def backward(self) -> None:
        """Populate ``grad`` on every ``requires_grad`` leaf reachable from this scalar."""
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("backward() called on a tensor that does not require grad")

        order = _topological_order(self)
        adjoints: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = adjoints.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = np.array(g) if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in adjoints:
                    adjoints[key] = adjoints[key] + pg
                else:
                    adjoints[key] = pg
        for node in order:
            if node._backward is not None:
                node._parents = ()
                node._backward = None


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- elementwise ---------------------------------------------------------------


@register("add")
def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._result(a.data + b.data, (a, b), backward, "add")


@register("sub")
def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._result(a.data - b.data, (a, b), backward, "sub")


@register("mul")
def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._result(a.data * b.data, (a, b), backward, "mul")


@register("div")
def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data

    def backward(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return Tensor._result(out, (a, b), backward, "div")


@register("neg")
def neg(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor._result(-a.data, (a,), lambda g: (-g,), "neg")


@register("square")
def square(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor._result(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,), "square")


@register("exp")
def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)
    return Tensor._result(out, (a,), lambda g: (g * out,), "exp")


def _sigmoid(x: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    # tanh form: no overflow, and much cheaper than scipy's expit on small arrays
    out = np.multiply(x, 0.5, out=np.empty_like(x) if out is None else out)
    np.tanh(out, out=out)
    out *= 0.5
    out += 0.5
    return out


@register("sigmoid")
def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out = _sigmoid(a.data)
    return Tensor._result(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


@register("tanh")
def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return Tensor._result(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


# -- linear algebra ------------------------------------------------------------


@register("matmul")
def matmul(a, b) -> Tensor:
    """Matrix product with numpy broadcasting over leading axes.

    1-D operands are promoted to row/column vectors and squeezed back.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    ad = a.data[None, :] if a.ndim == 1 else a.data
    bd = b.data[:, None] if b.ndim == 1 else b.data
    if ad.ndim < 2 or bd.ndim < 2 or ad.shape[-1] != bd.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions differ for shapes {a.shape} and {b.shape}")
    # a stack of rows times one matrix is a single flat GEMM
    flat = bd.ndim == 2 and ad.ndim > 2
    try:
        out = (ad.reshape(-1, ad.shape[-1]) @ bd).reshape(ad.shape[:-1] + bd.shape[-1:]) if flat else ad @ bd
    except ValueError:
        raise DimensionError(f"matmul: cannot broadcast shapes {a.shape} and {b.shape}") from None
    full_shape = out.shape
    if a.ndim == 1:
        out = out[..., 0, :]
    if b.ndim == 1:
        out = out[..., 0]

    def backward(g):
        g = g.reshape(full_shape)
        if flat:
            g2 = g.reshape(-1, g.shape[-1])
            ga = (g2 @ bd.T).reshape(a.shape)
            gb = (ad.reshape(-1, ad.shape[-1]).T @ g2).reshape(b.shape)
            return ga, gb
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape).reshape(a.shape)
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape).reshape(b.shape)
        return ga, gb

    return Tensor._result(out, (a, b), backward, "matmul")


# -- reductions ------------------------------------------------------------------


def _expand_reduced(g: np.ndarray, shape: tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


@register("sum")
def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = _as_tensor(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        return (np.array(_expand_reduced(g, a.shape, axis, keepdims)),)

    return Tensor._result(np.asarray(out, dtype=np.float64), (a,), backward, "sum")


@register("mean")
def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    count = a.data.size // max(np.asarray(out).size, 1)

    def backward(g):
        return (np.array(_expand_reduced(g, a.shape, axis, keepdims)) / count,)

    return Tensor._result(np.asarray(out, dtype=np.float64), (a,), backward, "mean")


@register("softmax")
def softmax(a, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` using max subtraction."""
    a = _as_tensor(a)
    if not np.isfinite(a.data.sum()) and not np.isfinite(a.data).all():
        raise NumericError("softmax: input contains NaN or Inf")
    out = a.data - a.data.max(axis=axis, keepdims=True)
    np.exp(out, out=out)
    out /= out.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._result(out, (a,), backward, "softmax")


@register("layer_norm")
def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply ``gamma * xhat + beta``."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(
            f"layer_norm: gamma {gamma.shape} / beta {beta.shape} must both be ({d},)"
        )
    if eps <= 0:
        raise ContractError("layer_norm: eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gamma.data + beta.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=lead)
        dbeta = g.sum(axis=lead)
        dxhat = g * gamma.data
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, dgamma, dbeta

    return Tensor._result(out, (x, gamma, beta), backward, "layer_norm")


# -- shape ops -----------------------------------------------------------------


@register("concat")
def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat: need at least one tensor")
    ref = tensors[0]
    ax = axis % ref.ndim
    for t in tensors[1:]:
        if t.ndim != ref.ndim or any(
            t.shape[i] != ref.shape[i] for i in range(ref.ndim) if i != ax
        ):
            raise DimensionError(
                f"concat: shapes {[t.shape for t in tensors]} differ off axis {axis}"
            )
    out = np.concatenate([t.data for t in tensors], axis=ax)
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return Tensor._result(out, tuple(tensors), backward, "concat")


@register("reshape")
def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot reshape {a.shape} into {tuple(shape)}") from None
    return Tensor._result(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


@register("swapaxes")
def swapaxes(a, axis1: int, axis2: int) -> Tensor:
    a = _as_tensor(a)
    out = np.swapaxes(a.data, axis1, axis2)
    return Tensor._result(out, (a,), lambda g: (np.swapaxes(g, axis1, axis2),), "swapaxes")


@register("getitem")
def getitem(a, idx) -> Tensor:
    a = _as_tensor(a)
    out = np.array(a.data[idx], dtype=np.float64)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor._result(out, (a,), backward, "getitem")


# -- fused attention -------------------------------------------------------------


@register("attention")
def attention(q, k, v, bias: np.ndarray | None = None) -> Tensor:
    """``softmax(q k^T / sqrt(d_k) + bias) v`` as one op.

    ``q`` is ``(..., Tq, dk)``, ``k`` is ``(..., Tk, dk)`` and ``v`` is
    ``(..., Tk, dv)``.  ``bias`` is a constant broadcastable to the
    ``(..., Tq, Tk)`` logits (masked positions carry a large negative value).
    The weights are built and differentiated in place, which saves several
    passes over the logits compared with composing matmul and softmax.
    """
    q, k, v = _as_tensor(q), _as_tensor(k), _as_tensor(v)
    if q.ndim < 2 or q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"attention: incompatible shapes q{q.shape} k{k.shape} v{v.shape}")
    scale = 1.0 / np.sqrt(q.shape[-1])
    try:
        weights = np.matmul(q.data * scale, np.swapaxes(k.data, -1, -2))
        if bias is not None:
            weights += bias
    except ValueError:
        raise DimensionError(f"attention: cannot broadcast q{q.shape} k{k.shape} bias") from None
    weights -= weights.max(axis=-1, keepdims=True)
    np.exp(weights, out=weights)
    weights /= weights.sum(axis=-1, keepdims=True)
    out = weights @ v.data

    def backward(g):
        g = np.broadcast_to(g, out.shape)
        gw = g @ np.swapaxes(v.data, -1, -2)
        # softmax Jacobian-vector product, in place
        gw -= np.einsum("...ij,...ij->...i", gw, weights)[..., None]
        gw *= weights
        gq = _unbroadcast((gw @ k.data) * scale, q.shape)
        gk = _unbroadcast((np.swapaxes(gw, -1, -2) @ q.data) * scale, k.shape)
        gv = _unbroadcast(np.swapaxes(weights, -1, -2) @ g, v.shape)
        return gq, gk, gv

    return Tensor._result(out, (q, k, v), backward, "attention")


# -- fused recurrent scan --------------------------------------------------------


@register("lstm_scan")
def lstm_scan(x, w_in, w_rec, bias, reverse: bool = False) -> Tensor:
    """Run an LSTM over the time axis of ``x`` with zero initial state.

    ``x`` is ``(..., T, D)``.  Gate blocks are stacked in the order forget,
    input, candidate, output: ``w_in`` is ``(4H, D)``, ``w_rec`` is
    ``(4H, H)`` and ``bias`` is ``(4H,)``.  Returns the hidden states
    ``(..., T, H)`` indexed by original time; with ``reverse=True`` the scan
    runs from the last slot to the first.
    """
    x, w_in, w_rec, bias = (_as_tensor(t) for t in (x, w_in, w_rec, bias))
    if x.ndim < 2:
        raise DimensionError(f"lstm_scan: input must be (..., T, D), got {x.shape}")
    four_h, d = w_in.shape
    hidden = four_h // 4
    if (
        four_h % 4
        or d != x.shape[-1]
        or w_rec.shape != (four_h, hidden)
        or bias.shape != (four_h,)
    ):
        raise DimensionError(
            f"lstm_scan: incompatible shapes x{x.shape} w_in{w_in.shape} "
            f"w_rec{w_rec.shape} bias{bias.shape}"
        )
    lead = x.shape[:-2]
    steps = x.shape[-2]
    # time-major so every step touches contiguous memory
    xs = np.ascontiguousarray(np.swapaxes(x.data.reshape((-1, steps, d)), 0, 1))
    batch = xs.shape[1]
    # internal block order is f, i, o, c so the sigmoid gates are contiguous;
    # sigmoid(z) = 0.5 * tanh(z / 2) + 0.5, so the /2 is folded into the weights
    perm = np.concatenate([np.arange(0, 2 * hidden), np.arange(3 * hidden, four_h),
                           np.arange(2 * hidden, 3 * hidden)])
    scale = np.ones(four_h)
    scale[: 3 * hidden] = 0.5
    offset = 1.0 - scale
    w_in_s = w_in.data[perm].T * scale
    u_s = w_rec.data[perm].T * scale
    pre = xs @ w_in_s + bias.data[perm] * scale
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    h2, h3 = 2 * hidden, 3 * hidden

    act_all = np.empty((steps, batch, four_h))
    cells = np.empty((steps, batch, hidden))
    hs = np.empty((steps, batch, hidden))
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    for t in order:
        act = act_all[t]
        np.matmul(h, u_s, out=act)
        act += pre[t]
        np.tanh(act, out=act)
        # full-width rescale: contiguous passes beat touching only the gate slice
        act *= scale
        act += offset
        c = act[:, :hidden] * c
        c += act[:, hidden:h2] * act[:, h3:]
        cells[t] = c
        h = np.multiply(act[:, h2:h3], np.tanh(c), out=hs[t])

    def backward(gout):
        gout = np.swapaxes(gout.reshape((batch, steps, hidden)), 0, 1)
        f = act_all[..., :hidden]
        i = act_all[..., hidden:h2]
        o = act_all[..., h2:h3]
        g_ = act_all[..., h3:]
        tc = np.tanh(cells)
        prev_c = np.zeros_like(cells)
        prev_h = np.zeros_like(hs)
        if reverse:
            prev_c[:-1], prev_h[:-1] = cells[1:], hs[1:]
        else:
            prev_c[1:], prev_h[1:] = cells[:-1], hs[:-1]
        # local derivatives of the pre-activations, vectorized over time
        dc_dh = o * (1.0 - tc * tc)
        coef = np.empty((steps, batch, 4, hidden))
        coef[:, :, 0] = prev_c * f * (1.0 - f)
        coef[:, :, 1] = g_ * i * (1.0 - i)
        coef[:, :, 2] = i * (1.0 - g_ * g_)
        coef[:, :, 3] = tc * o * (1.0 - o)
        f = np.ascontiguousarray(f)
        dz_all = np.empty((steps, batch, 4, hidden))
        dh_next = np.zeros((batch, hidden))
        dc = np.zeros((batch, hidden))
        # dz is laid out in the caller's f, i, c, o order
        w_rec_d = w_rec.data
        for t in reversed(order):
            dh = gout[t] + dh_next
            dc = dh * dc_dh[t] + dc
            dz = dz_all[t]
            np.multiply(coef[t, :, :3], dc[:, None, :], out=dz[:, :3])
            np.multiply(coef[t, :, 3], dh, out=dz[:, 3])
            dh_next = dz.reshape(batch, four_h) @ w_rec_d
            dc = dc * f[t]
        flat_dz = dz_all.reshape(-1, four_h)
        dx = np.swapaxes(dz_all.reshape(steps, batch, four_h) @ w_in.data, 0, 1).reshape(x.shape)
        dw_in = flat_dz.T @ xs.reshape(-1, d)
        dw_rec = flat_dz.T @ prev_h.reshape(-1, hidden)
        dbias = flat_dz.sum(axis=0)
        return dx, dw_in, dw_rec, dbias

    out = np.swapaxes(hs, 0, 1).reshape(lead + (steps, hidden))
    return Tensor._result(out, (x, w_in, w_rec, bias), backward, "lstm_scan")


# -- gradient checking ---------------------------------------------------------


@dataclass
class GradCheckReport:
    """Outcome of comparing autodiff gradients with central differences."""

    max_rel_error: float
    tol: float
    worst_index: tuple
    analytic: np.ndarray
    numeric: np.ndarray

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def numerical_gradient(f: Callable[[], float], arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the scalar ``f()`` w.r.t. ``arr`` (perturbed in place)."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        up = f()
        flat[k] = orig - h
        down = f()
        flat[k] = orig
        gflat[k] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def grad_check(
    f: Callable[..., Tensor],
    x: Tensor | Iterable[Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare autodiff and central-difference gradients of scalar ``f``.

    ``f`` is called with no arguments and must rebuild its graph from the
    current values of the tensors in ``x`` (a single tensor or several).
    """
    if h <= 0:
        raise ContractError("grad_check: h must be positive")
    inputs = [x] if isinstance(x, Tensor) else list(x)
    for t in inputs:
        t.requires_grad = True
        t.grad = np.zeros_like(t.data)
    loss = f()
    loss.backward()
    analytic = [t.grad.copy() for t in inputs]

    def value() -> float:
        with no_grad():
            return f().item()

    numeric = [numerical_gradient(value, t.data, h) for t in inputs]
    a_flat = np.concatenate([g.reshape(-1) for g in analytic])
    n_flat = np.concatenate([g.reshape(-1) for g in numeric])
    errs = relative_error(a_flat, n_flat)
    worst = int(np.argmax(errs)) if errs.size else 0
    return GradCheckReport(
        max_rel_error=float(errs.max()) if errs.size else 0.0,
        tol=tol,
        worst_index=(worst,),
        analytic=a_flat,
        numeric=n_flat,
    )
