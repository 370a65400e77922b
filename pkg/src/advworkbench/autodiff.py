"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Every differentiable op returns a :class:`Tensor` that remembers its parents
and a closure mapping the output cotangent to parent cotangents. Node ids are
drawn from a global counter, so a node's parents always have smaller ids and
sorting reachable nodes by descending id is a valid reverse topological order.

Nodes are only recorded when at least one input requires a gradient; plain
inference therefore builds no graph.
"""
import itertools

import numpy as np

from . import kernels
from .errors import NonScalarLossError, ShapeError, TemperatureError

PROB_FLOOR = 1e-12

_ids = itertools.count()


class Tensor:
    __slots__ = ("data", "requires_grad", "id", "op", "parents", "_backward", "grad")

    def __init__(self, data, requires_grad=False, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.id = next(_ids)
        self.op = op
        self.parents = ()
        self._backward = None
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, op, backward_fn):
    out = Tensor(data, op=op)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out._backward = backward_fn
    return out


def _need(t):
    return t.requires_grad


# ---------------------------------------------------------------- primitives


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    A, B = a.data, b.data

    def backward(g):
        return (g @ B.T if _need(a) else None, A.T @ g if _need(b) else None)

    return _make(A @ B, (a, b), "matmul", backward)


def add(a, b):
    """Elementwise sum; ``b`` may also be a bias matching the trailing axes of ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        return _make(a.data + b.data, (a, b), "add", lambda g: (g, g))
    if b.ndim <= a.ndim and a.shape[a.ndim - b.ndim:] == b.shape:
        lead = tuple(range(a.ndim - b.ndim))
        return _make(a.data + b.data, (a, b), "add", lambda g: (g, g.sum(axis=lead)))
    raise ShapeError(f"add: cannot combine {a.shape} with {b.shape}")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"sub: shapes differ {a.shape} vs {b.shape}")
    return _make(a.data - b.data, (a, b), "sub", lambda g: (g, -g))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes differ {a.shape} vs {b.shape}")
    A, B = a.data, b.data
    return _make(A * B, (a, b), "mul", lambda g: (g * B, g * A))


def scale(a, s):
    s = float(s)
    return _make(a.data * s, (a,), "scale", lambda g: (g * s,))


def tsum(a):
    shape = a.shape
    return _make(np.asarray(a.data.sum()), (a,), "sum", lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(a):
    n = a.size
    shape = a.shape
    return _make(np.asarray(a.data.mean()), (a,), "mean", lambda g: (np.full(shape, float(g) / n),))


def square(a):
    A = a.data
    return _make(A * A, (a,), "square", lambda g: (2.0 * A * g,))


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0.0  # subgradient at exactly 0 is 0
    return _make(np.where(mask, x.data, 0.0), (x,), "relu", lambda g: (g * mask,))


def reshape(x, shape):
    old = x.shape
    return _make(x.data.reshape(shape), (x,), "reshape", lambda g: (g.reshape(old),))


def flatten(x):
    """Collapse every axis after the leading (batch) axis."""
    return reshape(x, (x.shape[0], -1))


def conv2d(x, kernels_, bias, stride=1):
    """Valid cross-correlation. ``x`` is [C, H, W] or a batch [B, C, H, W]."""
    x, w, b = as_tensor(x), as_tensor(kernels_), as_tensor(bias)
    single = x.ndim == 3
    X = x.data[None] if single else x.data
    if X.ndim != 4 or w.ndim != 4 or b.ndim != 1:
        raise ShapeError(f"conv2d: bad ranks input {x.shape}, kernels {w.shape}, bias {b.shape}")
    stride = int(stride)
    if stride < 1:
        raise ShapeError("conv2d: stride must be a positive integer")
    O, C, kh, kw = w.shape
    if kh != kw:
        raise ShapeError(f"conv2d: kernels must be square, got {kh}x{kw}")
    if X.shape[1] != C or b.shape[0] != O:
        raise ShapeError(f"conv2d: channel mismatch input {x.shape}, kernels {w.shape}, bias {b.shape}")
    if kh > X.shape[2] or kh > X.shape[3]:
        raise ShapeError(f"conv2d: kernel {kh}x{kh} larger than input {X.shape[2]}x{X.shape[3]}")
    X = np.ascontiguousarray(X)
    W = np.ascontiguousarray(w.data)
    out = kernels.conv2d_forward(X, W, b.data, stride)
    if single:
        out = out[0]

    def backward(g):
        G = np.ascontiguousarray(g[None] if single else g)
        gx, gw, gb = kernels.conv2d_backward(G, X, W, stride)
        return (gx[0] if single else gx, gw, gb)

    return _make(out, (x, w, b), "conv2d", backward)


def softmax_with_temperature(logits, T=1.0):
    """Softmax of ``logits / T`` along the last axis, with max-subtraction."""
    z = as_tensor(logits)
    T = float(T)
    if not T > 0.0:
        raise TemperatureError(f"temperature must be positive, got {T}")
    if z.shape[-1] < 2:
        raise ShapeError("softmax needs at least two classes")
    s = z.data / T
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)) / T,)

    return _make(p, (z,), "softmax", backward)


def _labels_for(probs, labels):
    K = probs.shape[-1]
    if probs.ndim == 1:
        y = np.asarray([labels], dtype=np.int64).reshape(1)
    else:
        y = np.asarray(labels, dtype=np.int64).reshape(-1)
        if y.shape[0] != probs.shape[0]:
            raise ShapeError(f"{y.shape[0]} labels for {probs.shape[0]} rows")
    if np.any(y < 0) or np.any(y >= K):
        raise IndexError(f"class index out of range [0, {K})")
    return y


def cross_entropy(probs, labels, reduction="mean"):
    """-ln(probs[label]) with probabilities floored at 1e-12.

    ``probs`` is one vector (``labels`` an int, result scalar) or a batch
    [B, K] reduced by ``"mean"`` or ``"sum"``.
    """
    p = as_tensor(probs)
    y = _labels_for(p.data, labels)
    P = p.data.reshape(-1, p.shape[-1])
    rows = np.arange(P.shape[0])
    picked = P[rows, y]
    clamped = np.maximum(picked, PROB_FLOOR)
    losses = -np.log(clamped)
    norm = P.shape[0] if reduction == "mean" else 1
    value = losses.sum() / norm

    def backward(g):
        grad = np.zeros_like(P)
        grad[rows, y] = np.where(picked >= PROB_FLOOR, -1.0 / clamped, 0.0) * (float(g) / norm)
        return (grad.reshape(p.shape),)

    return _make(np.asarray(value), (p,), "cross_entropy", backward)


def kl_divergence(p, q, reduction="mean"):
    """sum_i p_i ln(p_i / q_i), with 0 ln 0 = 0 and q floored at 1e-12.

    Rows of a [B, K] batch are reduced by ``"mean"`` or ``"sum"``.
    """
    p, q = as_tensor(p), as_tensor(q)
    if p.shape != q.shape:
        raise ShapeError(f"kl_divergence: length mismatch {p.shape} vs {q.shape}")
    P, Q = p.data, q.data
    qc = np.maximum(Q, PROB_FLOOR)
    pos = P > 0.0
    ratio = np.where(pos, P, 1.0) / qc
    terms = np.where(pos, P * np.log(ratio), 0.0)
    norm = P.shape[0] if (reduction == "mean" and P.ndim == 2) else 1
    value = terms.sum() / norm

    def backward(g):
        s = float(g) / norm
        gp = np.where(pos, np.log(ratio) + 1.0, 0.0) * s if _need(p) else None
        gq = np.where(Q >= PROB_FLOOR, -P / qc, 0.0) * s if _need(q) else None
        return (gp, gq)

    return _make(np.asarray(value), (p, q), "kl_divergence", backward)


# ------------------------------------------------------------------ backward


def backward(loss):
    """Back-propagate from a scalar node.

    Returns a map node id -> gradient array for every node reachable from
    ``loss`` that requires a gradient, and stores each on ``node.grad``.
    """
    if loss.size != 1:
        raise NonScalarLossError(f"backward needs a scalar loss, got shape {loss.shape}")
    nodes = {}
    stack = [loss]
    while stack:
        node = stack.pop()
        if node.id in nodes or not node.requires_grad:
            continue
        nodes[node.id] = node
        stack.extend(node.parents)
    grads = {loss.id: np.ones_like(loss.data)}
    for nid in sorted(nodes, reverse=True):
        node = nodes[nid]
        g = grads.get(nid)
        if g is None:
            g = grads[nid] = np.zeros_like(node.data)
        node.grad = g
        if node._backward is None:
            continue
        for parent, pg in zip(node.parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.id in grads:
                grads[parent.id] = grads[parent.id] + pg
            else:
                grads[parent.id] = pg
    return grads


def grad(loss, wrt):
    """Gradients of scalar ``loss`` with respect to each tensor in ``wrt``."""
    g = backward(loss)
    return [g.get(t.id, np.zeros_like(t.data)) for t in wrt]
