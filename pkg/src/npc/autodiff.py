"""Reverse-mode automatic differentiation over dense float64 arrays.

The tape is implicit: every operation returns a Node carrying its value,
its parent nodes, and a closure mapping the node's adjoint to parent
adjoints.  Graphs are rebuilt on every forward pass.  backward() walks the
nodes reachable from a scalar loss in reverse creation order, which is a
valid reverse topological order because parents always predate children;
adjoints of shared subexpressions accumulate by summation.

Values are float64 throughout.  Elementwise ops broadcast only over
leading dimensions (a trailing-shape operand such as a bias vector may be
promoted); anything richer must be spelled out by the caller.

State is confined to the calling thread: the grad-enabled flag is
thread-local and node ids come from a single monotone counter, so distinct
model replicas may run on distinct threads but a single graph must not be
shared across threads.
"""

import itertools
import threading

import numpy as np
from scipy.special import expit

__all__ = [
    "Node", "constant", "leaf", "no_grad", "grad_enabled", "backward",
    "add", "sub", "mul", "neg", "add_const", "mul_const", "matmul",
    "bmatvec", "tanh", "relu", "sigmoid", "log", "square", "concat",
    "narrow", "reshape", "sum_", "mean_", "softmax_cross_entropy",
]

_ids = itertools.count()


class _Mode(threading.local):
    enabled = True


_mode = _Mode()


def grad_enabled():
    return _mode.enabled


class no_grad:
    """Context manager that suspends graph construction."""

    def __enter__(self):
        self._saved = _mode.enabled
        _mode.enabled = False
        return self

    def __exit__(self, *exc):
        _mode.enabled = self._saved
        return False


class Node:
    """One tape entry: a float64 array plus how to push adjoints back."""

    __slots__ = ("value", "parents", "_back", "grad", "id", "requires")

    def __init__(self, value, parents=(), back=None, requires=False):
        self.value = value
        self.parents = parents
        self._back = back
        self.grad = None
        self.id = next(_ids)
        self.requires = requires

    @property
    def shape(self):
        return self.value.shape

    # Convenience arithmetic.  Plain numbers and arrays enter as constants.
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        if isinstance(other, Node):
            return mul(self, other)
        return mul_const(self, other)

    def __rmul__(self, other):
        return mul_const(self, other)

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Node(shape={self.value.shape}, requires={self.requires})"


def _as_f64(x):
    return np.asarray(x, dtype=np.float64)


def constant(x):
    return Node(_as_f64(x))


def leaf(x):
    """Differentiable graph input (parameter or probe)."""
    return Node(_as_f64(x), requires=True)


def _lift(x):
    return x if isinstance(x, Node) else constant(x)


def _make(value, parents, back):
    if _mode.enabled and any(p.requires for p in parents):
        return Node(value, tuple(parents), back, requires=True)
    return Node(value)


def _unbroadcast(g, shape):
    """Sum g down to `shape` after leading-dimension broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _check_elementwise(op, a, b):
    try:
        out = np.broadcast_shapes(a.value.shape, b.value.shape)
    except ValueError:
        raise ValueError(
            f"{op}: shapes {a.value.shape} and {b.value.shape} do not align"
        ) from None
    if out != a.value.shape and out != b.value.shape:
        raise ValueError(
            f"{op}: broadcast may only promote a trailing shape, got "
            f"{a.value.shape} and {b.value.shape}"
        )
    return out


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b):
    a, b = _lift(a), _lift(b)
    _check_elementwise("add", a, b)
    sa, sb = a.value.shape, b.value.shape

    def back(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _make(a.value + b.value, (a, b), back)


def sub(a, b):
    a, b = _lift(a), _lift(b)
    _check_elementwise("sub", a, b)
    sa, sb = a.value.shape, b.value.shape

    def back(g):
        return _unbroadcast(g, sa), -_unbroadcast(g, sb)

    return _make(a.value - b.value, (a, b), back)


def mul(a, b):
    a, b = _lift(a), _lift(b)
    _check_elementwise("mul", a, b)
    va, vb = a.value, b.value

    def back(g):
        return _unbroadcast(g * vb, va.shape), _unbroadcast(g * va, vb.shape)

    return _make(va * vb, (a, b), back)


def neg(a):
    def back(g):
        return (-g,)

    return _make(-a.value, (a,), back)


def add_const(a, c):
    """a + c where c is data, never differentiated."""
    c = _as_f64(c)
    value = a.value + c
    if value.shape != a.value.shape:
        raise ValueError(
            f"add_const: constant {c.shape} would widen operand {a.value.shape}"
        )

    def back(g):
        return (g,)

    return _make(value, (a,), back)


def mul_const(a, c):
    """a * c where c is data (scalar or array broadcastable up to a.shape)."""
    c = _as_f64(c)
    value = a.value * c
    if value.shape != a.value.shape:
        raise ValueError(
            f"mul_const: constant {c.shape} would widen operand {a.value.shape}"
        )

    def back(g):
        return (g * c,)

    return _make(value, (a,), back)


# ---------------------------------------------------------------------------
# linear algebra

def _swap(x):
    return np.swapaxes(x, -1, -2)


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    va, vb = a.value, b.value
    if va.ndim == 0 or vb.ndim == 0:
        raise ValueError("matmul: operands must have at least 1 dimension")
    try:
        value = va @ vb
    except ValueError:
        raise ValueError(f"matmul: shapes {va.shape} @ {vb.shape} do not align") from None

    if va.ndim == 1 and vb.ndim == 1:
        def back(g):
            return g * vb, g * va
    elif va.ndim == 1:
        # (k,) @ (..., k, m) -> (..., m)
        def back(g):
            ga = _unbroadcast((vb @ np.expand_dims(g, -1))[..., 0], va.shape)
            gb = np.expand_dims(va, -1) * np.expand_dims(g, -2)
            return ga, _unbroadcast(gb, vb.shape)
    elif vb.ndim == 1:
        # (..., n, k) @ (k,) -> (..., n)
        def back(g):
            ga = np.expand_dims(g, -1) * vb
            gb = _unbroadcast((_swap(va) @ np.expand_dims(g, -1))[..., 0], vb.shape)
            return _unbroadcast(ga, va.shape), gb
    else:
        def back(g):
            return (_unbroadcast(g @ _swap(vb), va.shape),
                    _unbroadcast(_swap(va) @ g, vb.shape))

    return _make(value, (a, b), back)


def bmatvec(a, x):
    """Batched matrix-vector product: (B,n,k) @ (B,k) -> (B,n)."""
    a, x = _lift(a), _lift(x)
    va, vx = a.value, x.value
    if va.ndim != 3 or vx.ndim != 2 or va.shape[0] != vx.shape[0] or va.shape[2] != vx.shape[1]:
        raise ValueError(f"bmatvec: shapes {va.shape} and {vx.shape} do not align")
    value = np.einsum("bnk,bk->bn", va, vx)

    def back(g):
        return (np.einsum("bn,bk->bnk", g, vx),
                np.einsum("bnk,bn->bk", va, g))

    return _make(value, (a, x), back)


# ---------------------------------------------------------------------------
# nonlinearities and pointwise maps

def tanh(a):
    t = np.tanh(a.value)

    def back(g):
        return (g * (1.0 - t * t),)

    return _make(t, (a,), back)


def relu(a):
    m = a.value > 0

    def back(g):
        return (g * m,)

    return _make(np.where(m, a.value, 0.0), (a,), back)


def sigmoid(a):
    s = expit(a.value)

    def back(g):
        return (g * s * (1.0 - s),)

    return _make(s, (a,), back)


def log(a):
    if np.any(a.value <= 0):
        raise ValueError("log: input must be strictly positive")
    va = a.value

    def back(g):
        return (g / va,)

    return _make(np.log(va), (a,), back)


def square(a):
    va = a.value

    def back(g):
        return (2.0 * va * g,)

    return _make(va * va, (a,), back)


# ---------------------------------------------------------------------------
# shape surgery

def concat(nodes, axis=0):
    nodes = [_lift(n) for n in nodes]
    if not nodes:
        raise ValueError("concat: need at least one input")
    try:
        value = np.concatenate([n.value for n in nodes], axis=axis)
    except ValueError:
        shapes = [n.value.shape for n in nodes]
        raise ValueError(f"concat: shapes {shapes} do not align on axis {axis}") from None
    sizes = [n.value.shape[axis] for n in nodes]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(value, tuple(nodes), back)


def narrow(a, axis, start, length):
    """Contiguous slice of `length` entries along `axis`."""
    if axis < 0:
        axis += a.value.ndim
    if not 0 <= axis < a.value.ndim:
        raise ValueError(f"narrow: axis {axis} out of range for shape {a.value.shape}")
    n = a.value.shape[axis]
    if start < 0 or length < 0 or start + length > n:
        raise ValueError(
            f"narrow: [{start}:{start + length}] out of bounds for axis {axis} "
            f"of shape {a.value.shape}"
        )
    idx = tuple(
        slice(start, start + length) if ax == axis else slice(None)
        for ax in range(a.value.ndim)
    )
    shape = a.value.shape

    def back(g):
        out = np.zeros(shape)
        out[idx] = g
        return (out,)

    return _make(a.value[idx], (a,), back)


def reshape(a, shape):
    orig = a.value.shape
    value = a.value.reshape(shape)

    def back(g):
        return (g.reshape(orig),)

    return _make(value, (a,), back)


# ---------------------------------------------------------------------------
# reductions

def sum_(a, axis=None):
    shape = a.value.shape

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _make(a.value.sum(axis=axis), (a,), back)


def mean_(a, axis=None):
    shape = a.value.shape
    count = a.value.size if axis is None else shape[axis]

    def back(g):
        if axis is None:
            return (np.broadcast_to(g / count, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis) / count, shape).copy(),)

    return _make(a.value.mean(axis=axis), (a,), back)


# ---------------------------------------------------------------------------
# fused classification loss

def softmax_cross_entropy(logits, labels):
    """Cross entropy of softmax(logits) against integer labels.

    logits: (B, C) with labels (B,) -> per-sample losses (B,);
    logits (C,) with a scalar label -> scalar loss.
    The softmax and log are fused for numerical stability.
    """
    v = logits.value
    single = v.ndim == 1
    mat = v[None, :] if single else v
    if mat.ndim != 2:
        raise ValueError(f"softmax_cross_entropy: logits must be 1-D or 2-D, got {v.shape}")
    lab = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if lab.shape != (mat.shape[0],):
        raise ValueError(
            f"softmax_cross_entropy: labels {lab.shape} do not match logits {v.shape}"
        )
    if np.any(lab < 0) or np.any(lab >= mat.shape[1]):
        raise ValueError("softmax_cross_entropy: label out of range")

    m = mat.max(axis=1, keepdims=True)
    shifted = mat - m
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True)) + m
    losses = lse[:, 0] - mat[np.arange(mat.shape[0]), lab]
    probs = np.exp(mat - lse)

    def back(g):
        gb = np.atleast_1d(g)
        d = probs.copy()
        d[np.arange(d.shape[0]), lab] -= 1.0
        d *= gb[:, None]
        return (d[0] if single else d,)

    value = losses[0] if single else losses
    return _make(np.asarray(value), (logits,), back)


# ---------------------------------------------------------------------------
# reverse pass

def backward(loss):
    """Accumulate adjoints of `loss` into every reachable differentiable node.

    loss must be scalar.  Its own adjoint is 1; leaves that do not
    influence the loss keep grad None (read them as zeros).
    """
    if loss.value.shape != ():
        raise ValueError(f"backward: loss must be scalar, got shape {loss.value.shape}")
    loss.grad = np.asarray(1.0)
    if not loss.requires:
        return

    # Iterative reachability walk; recursion would overflow on deep graphs.
    seen = {loss.id}
    order = [loss]
    stack = [loss]
    while stack:
        node = stack.pop()
        for p in node.parents:
            if p.requires and p.id not in seen:
                seen.add(p.id)
                order.append(p)
                stack.append(p)

    order.sort(key=lambda n: n.id, reverse=True)
    for node in order:
        if node._back is None or node.grad is None:
            continue
        grads = node._back(node.grad)
        for parent, g in zip(node.parents, grads):
            if not parent.requires or g is None:
                continue
            parent.grad = g if parent.grad is None else parent.grad + g
