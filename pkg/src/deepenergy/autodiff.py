"""Reverse-mode automatic differentiation over small batched tensors.

Every recorded value is a float64 ``ndarray``.  Matrix primitives act on the
trailing two axes and vector primitives on the trailing axis, so a stack of
per-point 3x3 deformation gradients of shape ``(n, 3, 3)`` is one node.
Leading axes broadcast like numpy; adjoints are summed back to the input
shape in the backward pass.

Primitive functions accept plain arrays as well as nodes.  When no argument
is a :class:`Node` they return the plain numpy result, which lets the
material laws serve both the loss (on the tape) and post-processing.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

PRIMITIVES = frozenset({
    "add", "sub", "mul", "div", "scale", "power", "exp", "ln", "matmul",
    "matvec", "transpose", "trace", "det3", "inv3", "dot", "sum", "relu",
    "tanh", "square", "sqrt", "neg", "reshape",
})


class ShapeError(ValueError):
    """Input shapes do not conform to a primitive."""


class Node:
    __slots__ = ("tape", "index", "op", "parents", "value", "meta")
    __array_ufunc__ = None  # keep numpy from broadcasting over Node objects

    def __init__(self, tape, index, op, parents, value, meta=None):
        self.tape = tape
        self.index = index
        self.op = op
        self.parents = parents
        self.value = value
        self.meta = meta

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(#{self.index}, {self.op}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    @property
    def T(self):
        return transpose(self)


class Tape:
    """Append-only record of a forward pass.

    Nodes are numbered in creation order, which is a topological order of the
    data dependencies, so the backward sweep is a single reverse loop.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self):
        return len(self.nodes)

    def variable(self, value) -> Node:
        """Create a leaf whose adjoint is reported by :meth:`backward`."""
        return self._append("leaf", (), np.array(value, dtype=np.float64))

    def _append(self, op, parents, value, meta=None) -> Node:
        node = Node(self, len(self.nodes), op, parents, value, meta)
        self.nodes.append(node)
        return node

    def record(self, primitive: str, *inputs, **meta) -> Node:
        """Record ``primitive`` applied to ``inputs`` and return the new node.

        Inputs may mix nodes of this tape and constant arrays/scalars.
        """
        if primitive not in PRIMITIVES:
            raise ValueError(f"unknown primitive {primitive!r}")
        arrays = [_value(x) for x in inputs]
        value = _FORWARD[primitive](arrays, meta)
        parents = tuple(x if isinstance(x, Node) else None for x in inputs)
        for p in parents:
            if p is not None and p.tape is not self:
                raise ValueError(f"{primitive}: input belongs to another tape")
        return self._append(primitive, (parents, arrays), value, meta)

    def backward(self, root: Node, wrt: Sequence[Node] | None = None):
        """Propagate adjoints from the scalar ``root``.

        Returns the gradients with respect to ``wrt`` (default: every leaf in
        creation order) as a list of arrays shaped like the leaves.
        """
        if root.tape is not self:
            raise ValueError("root belongs to another tape")
        if root.value.size != 1:
            raise ShapeError(f"backward: root must be scalar, got shape {root.value.shape}")
        adj: list = [None] * (root.index + 1)
        adj[root.index] = np.ones_like(root.value)
        for i in range(root.index, -1, -1):
            g = adj[i]
            if g is None:
                continue
            node = self.nodes[i]
            if node.op == "leaf":
                continue
            parents, arrays = node.parents
            vjps = _BACKWARD[node.op](g, arrays, node.value, node.meta)
            for p, a, vg in zip(parents, arrays, vjps):
                if p is None or vg is None:
                    continue
                vg = _unbroadcast(vg, np.shape(a))
                if adj[p.index] is None:
                    adj[p.index] = vg
                else:
                    adj[p.index] = adj[p.index] + vg
        if wrt is None:
            wrt = [n for n in self.nodes[: root.index + 1] if n.op == "leaf"]
        out = []
        for leaf in wrt:
            g = adj[leaf.index] if leaf.index < len(adj) else None
            out.append(np.zeros_like(leaf.value) if g is None else g)
        return out


def backward(root: Node, wrt: Sequence[Node] | None = None):
    return root.tape.backward(root, wrt)


def _value(x):
    if isinstance(x, Node):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(g, shape):
    g = np.asarray(g)
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_check(name, a, b):
    try:
        np.broadcast_shapes(np.shape(a), np.shape(b))
    except ValueError:
        raise ShapeError(f"{name}: cannot combine shapes {np.shape(a)} and {np.shape(b)}") from None


def _need_square3(name, a):
    if a.ndim < 2 or a.shape[-2:] != (3, 3):
        raise ShapeError(f"{name}: expected trailing shape (3, 3), got {a.shape}")


def _need_matrix(name, a):
    if a.ndim < 2:
        raise ShapeError(f"{name}: expected at least 2 axes, got shape {a.shape}")


def _det3_value(a):
    return (
        a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
        - a[..., 0, 1] * (a[..., 1, 0] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 0])
        + a[..., 0, 2] * (a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0])
    )


def _adj3(a):
    """Adjugate of stacked 3x3 matrices (transpose of the cofactor matrix)."""
    c = np.empty_like(a)
    c[..., 0, 0] = a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1]
    c[..., 0, 1] = a[..., 0, 2] * a[..., 2, 1] - a[..., 0, 1] * a[..., 2, 2]
    c[..., 0, 2] = a[..., 0, 1] * a[..., 1, 2] - a[..., 0, 2] * a[..., 1, 1]
    c[..., 1, 0] = a[..., 1, 2] * a[..., 2, 0] - a[..., 1, 0] * a[..., 2, 2]
    c[..., 1, 1] = a[..., 0, 0] * a[..., 2, 2] - a[..., 0, 2] * a[..., 2, 0]
    c[..., 1, 2] = a[..., 0, 2] * a[..., 1, 0] - a[..., 0, 0] * a[..., 1, 2]
    c[..., 2, 0] = a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0]
    c[..., 2, 1] = a[..., 0, 1] * a[..., 2, 0] - a[..., 0, 0] * a[..., 2, 1]
    c[..., 2, 2] = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    return c


def _fwd_binary(name, fn):
    def f(arrays, meta):
        a, b = arrays
        _broadcast_check(name, a, b)
        return fn(a, b)
    return f


def _fwd_matmul(arrays, meta):
    a, b = arrays
    _need_matrix("matmul", a)
    _need_matrix("matmul", b)
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    try:
        return np.matmul(a, b)
    except ValueError:
        raise ShapeError(f"matmul: cannot batch {a.shape} @ {b.shape}") from None


def _fwd_matvec(arrays, meta):
    a, v = arrays
    _need_matrix("matvec", a)
    if v.ndim < 1 or a.shape[-1] != v.shape[-1]:
        raise ShapeError(f"matvec: cannot apply {a.shape} to {v.shape}")
    return np.einsum("...ij,...j->...i", a, v)


def _fwd_dot(arrays, meta):
    a, b = arrays
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != b.shape[-1]:
        raise ShapeError(f"dot: trailing axes differ, {a.shape} . {b.shape}")
    _broadcast_check("dot", a, b)
    return np.sum(a * b, axis=-1)


def _fwd_trace(arrays, meta):
    (a,) = arrays
    _need_matrix("trace", a)
    if a.shape[-1] != a.shape[-2]:
        raise ShapeError(f"trace: expected square trailing axes, got {a.shape}")
    return np.trace(a, axis1=-2, axis2=-1)


def _fwd_transpose(arrays, meta):
    (a,) = arrays
    _need_matrix("transpose", a)
    return np.swapaxes(a, -1, -2)


def _fwd_det3(arrays, meta):
    (a,) = arrays
    _need_square3("det3", a)
    return _det3_value(a)


def _fwd_inv3(arrays, meta):
    (a,) = arrays
    _need_square3("inv3", a)
    return _adj3(a) / _det3_value(a)[..., None, None]


def _fwd_sum(arrays, meta):
    (a,) = arrays
    return np.sum(a, axis=meta.get("axis"))


def _fwd_reshape(arrays, meta):
    (a,) = arrays
    try:
        return np.reshape(a, meta["shape"])
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {meta['shape']}") from None


def _fwd_power(arrays, meta):
    (a,) = arrays
    return np.power(a, meta["p"])


_FORWARD: dict[str, Callable] = {
    "add": _fwd_binary("add", np.add),
    "sub": _fwd_binary("sub", np.subtract),
    "mul": _fwd_binary("mul", np.multiply),
    "div": _fwd_binary("div", np.divide),
    "scale": lambda arrays, meta: meta["c"] * arrays[0],
    "neg": lambda arrays, meta: -arrays[0],
    "power": _fwd_power,
    "exp": lambda arrays, meta: np.exp(arrays[0]),
    "ln": lambda arrays, meta: np.log(arrays[0]),
    "matmul": _fwd_matmul,
    "matvec": _fwd_matvec,
    "transpose": _fwd_transpose,
    "trace": _fwd_trace,
    "det3": _fwd_det3,
    "inv3": _fwd_inv3,
    "dot": _fwd_dot,
    "sum": _fwd_sum,
    "relu": lambda arrays, meta: np.maximum(arrays[0], 0.0),
    "tanh": lambda arrays, meta: np.tanh(arrays[0]),
    "square": lambda arrays, meta: arrays[0] * arrays[0],
    "sqrt": lambda arrays, meta: np.sqrt(arrays[0]),
    "reshape": _fwd_reshape,
}


def _bwd_matmul(g, arrays, out, meta):
    a, b = arrays
    # 2-D right factor against a batched left factor: contract the batch
    # directly instead of materializing per-batch outer products.
    if b.ndim == 2 and a.ndim > 2:
        ga = g @ b.T
        gb = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb
    return np.matmul(g, np.swapaxes(b, -1, -2)), np.matmul(np.swapaxes(a, -1, -2), g)


def _bwd_sum(g, arrays, out, meta):
    (a,) = arrays
    axis = meta.get("axis")
    if axis is None:
        return (np.broadcast_to(g, a.shape).copy(),)
    return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)


def _bwd_det3(g, arrays, out, meta):
    (a,) = arrays
    # d det(A)/dA = cof(A) = adj(A)^T
    return (g[..., None, None] * np.swapaxes(_adj3(a), -1, -2),)


def _bwd_inv3(g, arrays, out, meta):
    inv_t = np.swapaxes(out, -1, -2)
    return (-(inv_t @ g @ inv_t),)


def _bwd_power(g, arrays, out, meta):
    (a,) = arrays
    p = meta["p"]
    return (g * p * np.power(a, p - 1),)


_BACKWARD: dict[str, Callable] = {
    "add": lambda g, ar, out, m: (g, g),
    "sub": lambda g, ar, out, m: (g, -g),
    "mul": lambda g, ar, out, m: (g * ar[1], g * ar[0]),
    "div": lambda g, ar, out, m: (g / ar[1], -g * out / ar[1]),
    "scale": lambda g, ar, out, m: (m["c"] * g,),
    "neg": lambda g, ar, out, m: (-g,),
    "power": _bwd_power,
    "exp": lambda g, ar, out, m: (g * out,),
    "ln": lambda g, ar, out, m: (g / ar[0],),
    "matmul": _bwd_matmul,
    "matvec": lambda g, ar, out, m: (
        g[..., :, None] * ar[1][..., None, :],
        np.einsum("...ij,...i->...j", ar[0], g),
    ),
    "transpose": lambda g, ar, out, m: (np.swapaxes(g, -1, -2),),
    "trace": lambda g, ar, out, m: (g[..., None, None] * np.eye(ar[0].shape[-1]),),
    "det3": _bwd_det3,
    "inv3": _bwd_inv3,
    "dot": lambda g, ar, out, m: (g[..., None] * ar[1], g[..., None] * ar[0]),
    "sum": _bwd_sum,
    # relu'(0) is taken as 0
    "relu": lambda g, ar, out, m: (g * (ar[0] > 0.0),),
    "tanh": lambda g, ar, out, m: (g * (1.0 - out * out),),
    "square": lambda g, ar, out, m: (2.0 * g * ar[0],),
    "sqrt": lambda g, ar, out, m: (0.5 * g / out,),
    "reshape": lambda g, ar, out, m: (np.reshape(g, ar[0].shape),),
}


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    return None


def _apply(primitive, *inputs, **meta):
    tape = _tape_of(*inputs)
    if tape is None:
        return _FORWARD[primitive]([np.asarray(x, dtype=np.float64) for x in inputs], meta)
    return tape.record(primitive, *inputs, **meta)


def add(a, b):
    return _apply("add", a, b)


def sub(a, b):
    return _apply("sub", a, b)


def mul(a, b):
    return _apply("mul", a, b)


def div(a, b):
    return _apply("div", a, b)


def scale(c: float, a):
    return _apply("scale", a, c=float(c))


def neg(a):
    return _apply("neg", a)


def power(a, p: float):
    return _apply("power", a, p=float(p))


def exp(a):
    return _apply("exp", a)


def ln(a):
    return _apply("ln", a)


def matmul(a, b):
    return _apply("matmul", a, b)


def matvec(a, v):
    return _apply("matvec", a, v)


def transpose(a):
    return _apply("transpose", a)


def trace(a):
    return _apply("trace", a)


def det3(a):
    return _apply("det3", a)


def inv3(a):
    return _apply("inv3", a)


def dot(a, b):
    return _apply("dot", a, b)


def sum(a, axis=None):  # noqa: A001 - mirrors numpy
    return _apply("sum", a, axis=axis)


def relu(a):
    return _apply("relu", a)


def tanh(a):
    return _apply("tanh", a)


def square(a):
    return _apply("square", a)


def sqrt(a):
    return _apply("sqrt", a)


def reshape(a, shape):
    return _apply("reshape", a, shape=tuple(shape))


def value(x):
    """Numeric payload of a node or array."""
    return x.value if isinstance(x, Node) else np.asarray(x)
