"""Dense tensors with reverse-mode automatic differentiation.

Every op builds a node holding its parents and a closure that maps the
output gradient to parent gradients. :meth:`Tensor.backward` walks the graph
in reverse topological order once. Only first-order gradients are supported.

Broadcasting is deliberately limited to scalar <-> tensor and same-shape
operands; row-wise scaling and bias addition have their own explicit ops
(:func:`mul_rows`, :func:`add_rowvec`).
"""

import numpy as np

from . import kernels
from .errors import ContractError, DomainError, NonFiniteError, ShapeError

LOG_CLAMP = 1e-12


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None
        self.op = "leaf"
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        backward(self)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _node(data, parents, backward_fn, op):
    out = Tensor(data)
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def topological_order(root):
    """Nodes reachable from ``root`` that require grad, parents before children."""
    order, seen = [], set()
    stack = [(root, False)]
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


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Leaf gradients add up across calls; intermediate ``.grad`` values are
    overwritten by each call.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss is not connected to any parameter")
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        node.grad = g
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# ---------------------------------------------------------------- elementwise

def _pair(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.data.ndim and b.data.ndim and a.size != 1 and b.size != 1:
        raise ShapeError(f"shapes {a.shape} and {b.shape} are not broadcast-compatible "
                         "(only scalar or same-shape operands are allowed)")
    return a, b


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


def add(a, b):
    a, b = _pair(a, b)
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b):
    a, b = _pair(a, b)
    return _node(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b):
    a, b = _pair(a, b)
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)), "mul")


def neg(x):
    x = as_tensor(x)
    return _node(-x.data, (x,), lambda g: (-g,), "neg")


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x):
    x = as_tensor(x)
    y = _sigmoid(np.atleast_1d(x.data)).reshape(x.shape)
    return _node(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _node(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return _node(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x, slope=0.2):
    x = as_tensor(x)
    factor = np.where(x.data > 0, 1.0, slope).astype(x.dtype)
    return _node(x.data * factor, (x,), lambda g: (g * factor,), "leaky_relu")


def elu(x, alpha=1.0):
    x = as_tensor(x)
    neg_part = alpha * np.expm1(np.minimum(x.data, 0.0))
    y = np.where(x.data > 0, x.data, neg_part)
    dy = np.where(x.data > 0, 1.0, neg_part + alpha).astype(x.dtype)
    return _node(y, (x,), lambda g: (g * dy,), "elu")


def exp(x):
    x = as_tensor(x)
    y = np.exp(x.data)
    return _node(y, (x,), lambda g: (g * y,), "exp")


def log(x):
    x = as_tensor(x)
    if (x.data <= 0).any():
        raise DomainError(f"log of non-positive value (min {x.data.min()!r}); "
                          "clamp probabilities with clamp_min first")
    return _node(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def clamp_min(x, lo=LOG_CLAMP):
    """max(x, lo); gradient passes only where x was not clamped."""
    x = as_tensor(x)
    keep = x.data >= lo
    return _node(np.maximum(x.data, lo), (x,), lambda g: (g * keep,), "clamp_min")


def softplus(x):
    x = as_tensor(x)
    y = np.logaddexp(0.0, x.data)
    s = _sigmoid(np.atleast_1d(x.data)).reshape(x.shape)
    return _node(y, (x,), lambda g: (g * s,), "softplus")


def log_sigmoid(x):
    """log(sigmoid(x)) evaluated without forming the probability."""
    return neg(softplus(neg(x)))


# ---------------------------------------------------------------- linear algebra

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    return _node(a.data @ b.data, (a, b),
                 lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def batched_matvec(w, rel, x):
    """out[e] = w[rel[e]] @ x[e] for a stack of matrices ``w`` [R, m, n]."""
    w, x = as_tensor(w), as_tensor(x)
    rel = np.asarray(rel, dtype=np.int64)
    if w.data.ndim != 3 or x.data.ndim != 2 or x.shape[1] != w.shape[2] or len(rel) != x.shape[0]:
        raise ShapeError(f"batched_matvec dimension mismatch: {w.shape} x {x.shape} "
                         f"with {len(rel)} relation ids")
    groups = [(r, np.flatnonzero(rel == r)) for r in np.unique(rel)]
    out = np.empty((x.shape[0], w.shape[1]), dtype=np.result_type(w.data, x.data))
    for r, rows in groups:
        out[rows] = x.data[rows] @ w.data[r].T

    def back(g):
        gw = np.zeros_like(w.data)
        gx = np.empty_like(x.data)
        for r, rows in groups:
            gw[r] = g[rows].T @ x.data[rows]
            gx[rows] = g[rows] @ w.data[r]
        return gw, gx

    return _node(out, (w, x), back, "batched_matvec")


class SparseMatrix:
    """Constant CSR matrix; multiplies differentiable dense tensors."""

    def __init__(self, indptr, indices, data, shape):
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.data = np.asarray(data, dtype=np.float64)
        self.shape = tuple(shape)
        self._t = None

    @classmethod
    def from_coo(cls, rows, cols, vals, shape):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((cols, rows))
        indptr = np.zeros(shape[0] + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        return cls(np.cumsum(indptr), cols[order], vals[order], shape)

    @classmethod
    def from_dense(cls, a):
        a = np.asarray(a, dtype=np.float64)
        rows, cols = np.nonzero(a)
        return cls.from_coo(rows, cols, a[rows, cols], a.shape)

    def coo(self):
        rows = np.repeat(np.arange(self.shape[0], dtype=np.int64), np.diff(self.indptr))
        return rows, self.indices, self.data

    @property
    def T(self):
        if self._t is None:
            rows, cols, vals = self.coo()
            self._t = SparseMatrix.from_coo(cols, rows, vals, self.shape[::-1])
            self._t._t = self
        return self._t

    def toarray(self):
        out = np.zeros(self.shape)
        rows, cols, vals = self.coo()
        np.add.at(out, (rows, cols), vals)
        return out

    def dot(self, x):
        return kernels.csr_matmul(self.indptr, self.indices, self.data.astype(x.dtype),
                                  x, self.shape[0])


def spmm(p, x):
    """Constant sparse ``p`` times differentiable dense ``x``."""
    x = as_tensor(x)
    if x.data.ndim != 2 or p.shape[1] != x.shape[0]:
        raise ShapeError(f"spmm dimension mismatch: {p.shape} @ {x.shape}")
    return _node(p.dot(x.data), (x,), lambda g: (p.T.dot(g),), "spmm")


# ---------------------------------------------------------------- reductions / shape

def _check_axis(x, axis):
    if axis is None:
        if x.size == 0:
            raise ContractError("reduction over an empty tensor")
        return
    if not 0 <= axis < x.data.ndim:
        raise ContractError(f"axis {axis} out of range for rank {x.data.ndim}")
    if x.shape[axis] == 0:
        raise ContractError(f"reduction over zero-extent axis {axis}")


def sum(x, axis=None):  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    _check_axis(x, axis)
    y = x.data.sum(axis=axis)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _node(np.asarray(y), (x,), back, "sum")


def mean(x, axis=None):
    x = as_tensor(x)
    _check_axis(x, axis)
    n = x.size if axis is None else x.shape[axis]
    y = x.data.mean(axis=axis)

    def back(g):
        g = g / n
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _node(np.asarray(y), (x,), back, "mean")


def reshape(x, shape):
    x = as_tensor(x)
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def back(g):
        sl = [slice(None)] * g.ndim
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl[axis] = slice(lo, hi)
            out.append(g[tuple(sl)])
        return out

    return _node(data, tensors, back, "concat")


def gather_rows(x, idx):
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    n = x.shape[0]

    def back(g):
        if g.ndim == 1:
            return (kernels.segment_sum(g[:, None], idx, n)[:, 0],)
        flat = g.reshape(len(idx), -1)
        return (kernels.segment_sum(flat, idx, n).reshape(x.shape),)

    return _node(x.data[idx], (x,), back, "gather_rows")


def mul_rows(x, s):
    """Scale row i of ``x`` [n, d] by ``s[i]`` (``s`` shaped [n] or [n, 1])."""
    x, s = as_tensor(x), as_tensor(s)
    if x.data.ndim != 2 or s.size != x.shape[0]:
        raise ShapeError(f"mul_rows needs [n, d] and n scales, got {x.shape} and {s.shape}")
    col = s.data.reshape(-1, 1)
    return _node(x.data * col, (x, s),
                 lambda g: (g * col, (g * x.data).sum(axis=1).reshape(s.shape)), "mul_rows")


def add_rowvec(x, b):
    """Add bias vector ``b`` [d] to every row of ``x`` [n, d]."""
    x, b = as_tensor(x), as_tensor(b)
    if x.data.ndim != 2 or b.shape != (x.shape[1],):
        raise ShapeError(f"add_rowvec needs [n, d] and [d], got {x.shape} and {b.shape}")
    return _node(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=0)), "add_rowvec")


# ---------------------------------------------------------------- segment ops

def segment_sum(x, seg, n):
    """Scatter-add rows of ``x`` into ``n`` buckets given by ``seg``."""
    x = as_tensor(x)
    seg = np.asarray(seg, dtype=np.int64)
    if x.data.ndim != 2 or len(seg) != x.shape[0]:
        raise ShapeError(f"segment_sum needs [m, d] rows and m ids, got {x.shape} / {len(seg)}")
    return _node(kernels.segment_sum(x.data, seg, n), (x,),
                 lambda g: (g[seg],), "segment_sum")


def ptr_to_ids(ptr):
    ptr = np.asarray(ptr, dtype=np.int64)
    return np.repeat(np.arange(len(ptr) - 1, dtype=np.int64), np.diff(ptr))


def segment_mean(x, ptr):
    """Mean of each contiguous row block ``x[ptr[s]:ptr[s+1]]``."""
    counts = np.diff(np.asarray(ptr, dtype=np.int64))
    if (counts <= 0).any():
        raise ContractError("mean over an empty segment")
    total = segment_sum(x, ptr_to_ids(ptr), len(counts))
    inv = Tensor((1.0 / counts).astype(total.dtype))
    return mul_rows(total, inv)


def segment_softmax(scores, ptr):
    """Softmax of a 1-D score vector within contiguous groups given by ``ptr``."""
    scores = as_tensor(scores)
    ptr = np.asarray(ptr, dtype=np.int64)
    if scores.data.ndim != 1 or ptr[-1] != scores.shape[0]:
        raise ShapeError(f"segment_softmax: {scores.shape} scores vs pointer end {ptr[-1]}")
    if (np.diff(ptr) <= 0).any():
        raise ContractError("softmax group is empty")
    y = kernels.segment_softmax(scores.data, ptr)
    return _node(y, (scores,), lambda g: (kernels.segment_softmax_backward(y, g, ptr),),
                 "segment_softmax")


def softmax_over_groups(scores, groups):
    """Softmax of ``scores`` [E] within each index group of a partition."""
    scores = as_tensor(scores)
    groups = [np.asarray(g, dtype=np.int64) for g in groups]
    if any(len(g) == 0 for g in groups):
        raise ContractError("softmax group is empty")
    order = np.concatenate(groups) if groups else np.empty(0, dtype=np.int64)
    if len(order) != scores.shape[0] or len(np.unique(order)) != len(order):
        raise ContractError("groups must partition the score indices")
    ptr = np.concatenate([[0], np.cumsum([len(g) for g in groups])])
    inverse = np.empty_like(order)
    inverse[order] = np.arange(len(order))
    return gather_rows(segment_softmax(gather_rows(scores, order), ptr), inverse)


# ---------------------------------------------------------------- checking

def first_nonfinite(root):
    """The earliest node (in evaluation order) whose value is not finite."""
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        stack.extend((p, False) for p in node._parents)
    for node in order:
        if not np.isfinite(node.data).all():
            return node
    return None


def grad_check(f, params, eps=1e-5):
    """Max relative error between backprop and central-difference gradients.

    ``f`` is a zero-argument callable returning a scalar tensor built from
    ``params``. The error per entry is
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.
    """
    for p in params:
        p.zero_grad()
    loss = f()
    bad = first_nonfinite(loss)
    if bad is not None:
        raise NonFiniteError(f"non-finite value produced by op {bad.op!r}"
                             + (f" ({bad.name})" if bad.name else ""))
    loss.backward()
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = f().item()
            flat[i] = orig - eps
            down = f().item()
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    for p in params:
        p.zero_grad()
    return worst
