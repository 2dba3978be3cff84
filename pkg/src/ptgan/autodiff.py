"""Reverse-mode automatic differentiation over dense 2-D float64 matrices.

Every tensor is a (rows, cols) matrix; scalars are 1x1.  Operations append
nodes to an implicit computation graph ordered by a thread-local counter, so
parents always carry smaller ids than their children (topological order by
construction).  Backward passes emit their gradient computations through the
same tracked operations, which makes gradients themselves graph nodes: an
expression built from first-order gradients (input-gradient penalties,
Hessian-vector products) can be differentiated again exactly.

Broadcasting is intentionally restricted to one rule: a (1, d) second operand
of add/sub/mul/div is applied to every row of an (n, d) first operand.  This
covers bias rows and scalar-per-column terms while keeping shape errors loud.

Subgradients at the kinks of relu, lrelu and abs are fixed to 0.  This is
deterministic and is the convention assumed by the finite-difference test
suite (which probes away from kinks).
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "tensor",
    "constant",
    "backward",
    "forward_op",
    "finite_diff_oracle",
    "matmul",
    "add",
    "sub",
    "mul",
    "div",
    "scale",
    "neg",
    "concat_cols",
    "slice_cols",
    "transpose",
    "relu",
    "lrelu",
    "tanh",
    "sigmoid",
    "abs_",
    "square",
    "sqrt",
    "exp",
    "log",
    "softmax_rows",
    "mean_all",
    "sum_all",
    "sum_rows",
    "sum_cols",
    "expand_rows",
    "expand_cols",
    "expand_scalar",
    "max_all",
    "dot_rows",
]


class _GraphState(threading.local):
    """Per-thread id source and trace switch; a graph is single-owner."""

    def __init__(self):
        self.next_id = 0
        self.trace = True


_STATE = _GraphState()


class no_trace:
    """Context manager disabling graph recording for plain-value math."""

    def __enter__(self):
        self._prev = _STATE.trace
        _STATE.trace = False
        return self

    def __exit__(self, *exc):
        _STATE.trace = self._prev
        return False


class Tensor:
    """A 2-D float64 matrix, optionally a node of the computation graph."""

    __slots__ = ("data", "id", "op", "parents", "vjp")

    def __init__(self, data, op="leaf", parents=(), vjp=None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"tensor must be 2-D, got shape {arr.shape}")
        self.data = arr
        self.id = _STATE.next_id
        _STATE.next_id += 1
        self.op = op
        self.parents = parents
        self.vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.shape})"

    # Operator sugar; scalars are accepted on the right for scale-like use.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data) -> Tensor:
    """Wrap an array as a graph leaf (a valid gradient target)."""
    return Tensor(data)


def constant(data) -> Tensor:
    """Alias of :func:`tensor`; names tensors never used as grad targets."""
    return Tensor(data)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, op: str, parents: tuple, vjp) -> Tensor:
    if _STATE.trace:
        return Tensor(data, op=op, parents=parents, vjp=vjp)
    return Tensor(data, op=op)


def _shape_error(op: str, *shapes):
    detail = " vs ".join(str(s) for s in shapes)
    raise ValueError(f"{op}: incompatible shapes {detail}")


def _binary_shapes(op: str, a: Tensor, b: Tensor):
    """Equal shapes, or b is a (1, d) row broadcast over a's rows."""
    if a.shape == b.shape:
        return False
    if b.shape[0] == 1 and b.shape[1] == a.shape[1]:
        return True
    _shape_error(op, a.shape, b.shape)


def _reduce_to_row(g: Tensor) -> Tensor:
    return sum_rows(g)


# ---------------------------------------------------------------------------
# arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    broadcast = _binary_shapes("add", a, b)

    def vjp(g):
        return g, (_reduce_to_row(g) if broadcast else g)

    return _node(a.data + b.data, "add", (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    broadcast = _binary_shapes("sub", a, b)

    def vjp(g):
        ng = neg(g)
        return g, (_reduce_to_row(ng) if broadcast else ng)

    return _node(a.data - b.data, "sub", (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    broadcast = _binary_shapes("mul", a, b)

    def vjp(g):
        ga = mul(g, b)
        gb = mul(g, a)
        return ga, (_reduce_to_row(gb) if broadcast else gb)

    return _node(a.data * b.data, "mul", (a, b), vjp)


def div(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    broadcast = _binary_shapes("div", a, b)
    if np.any(b.data == 0.0):
        raise ValueError("div: zero denominator")

    def vjp(g):
        ga = div(g, b)
        gb = neg(div(mul(g, a), mul(b, b)))
        return ga, (_reduce_to_row(gb) if broadcast else gb)

    return _node(a.data / b.data, "div", (a, b), vjp)


def scale(a: Tensor, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)

    def vjp(g):
        return (scale(g, c),)

    return _node(a.data * c, "scale", (a,), vjp)


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[1] != b.shape[0]:
        _shape_error("matmul", a.shape, b.shape)

    def vjp(g):
        return matmul(g, transpose(b)), matmul(transpose(a), g)

    return _node(a.data @ b.data, "matmul", (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    a = _as_tensor(a)

    def vjp(g):
        return (transpose(g),)

    return _node(np.ascontiguousarray(a.data.T), "transpose", (a,), vjp)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[0] != b.shape[0]:
        _shape_error("concat_cols", a.shape, b.shape)
    pa = a.shape[1]

    def vjp(g):
        return slice_cols(g, 0, pa), slice_cols(g, pa, pa + b.shape[1])

    return _node(np.hstack([a.data, b.data]), "concat_cols", (a, b), vjp)


def slice_cols(a: Tensor, j0: int, j1: int) -> Tensor:
    a = _as_tensor(a)
    if not (0 <= j0 < j1 <= a.shape[1]):
        raise ValueError(f"slice_cols: [{j0}, {j1}) out of range for {a.shape}")

    def vjp(g):
        n, d = a.shape
        left = None if j0 == 0 else constant(np.zeros((n, j0)))
        right = None if j1 == d else constant(np.zeros((n, d - j1)))
        out = g
        if left is not None:
            out = concat_cols(left, out)
        if right is not None:
            out = concat_cols(out, right)
        return (out,)

    return _node(np.ascontiguousarray(a.data[:, j0:j1]), "slice_cols", (a,), vjp)


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    mask = (a.data > 0).astype(np.float64)

    def vjp(g):
        return (mul(g, constant(mask)),)

    return _node(a.data * mask, "relu", (a,), vjp)


def lrelu(a: Tensor, slope: float = 0.1) -> Tensor:
    a = _as_tensor(a)
    if not (0.0 < slope < 1.0):
        raise ValueError(f"lrelu: slope must be in (0, 1), got {slope}")
    deriv = np.where(a.data > 0, 1.0, np.where(a.data < 0, slope, 0.0))

    def vjp(g):
        return (mul(g, constant(deriv)),)

    return _node(np.where(a.data > 0, a.data, slope * a.data), "lrelu", (a,), vjp)


def tanh(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)

    # The derivative is rebuilt from the parent (not from the cached forward
    # value) so that differentiating the gradient a second time stays exact.
    def vjp(g):
        th = tanh(a)
        one = constant(np.ones_like(out))
        return (mul(g, sub(one, square(th))),)

    return _node(out, "tanh", (a,), vjp)


def sigmoid(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))

    def vjp(g):
        s = sigmoid(a)
        one = constant(np.ones_like(out))
        return (mul(g, mul(s, sub(one, s))),)

    return _node(out, "sigmoid", (a,), vjp)


def abs_(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    sign = np.sign(a.data)

    def vjp(g):
        return (mul(g, constant(sign)),)

    return _node(np.abs(a.data), "abs", (a,), vjp)


def square(a: Tensor) -> Tensor:
    a = _as_tensor(a)

    def vjp(g):
        return (scale(mul(g, a), 2.0),)

    return _node(a.data * a.data, "square", (a,), vjp)


def sqrt(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data < 0):
        raise ValueError("sqrt: negative input")
    out = np.sqrt(a.data)

    def vjp(g):
        return (scale(div(g, sqrt(a)), 0.5),)

    return _node(out, "sqrt", (a,), vjp)


def exp(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    if not np.all(np.isfinite(out)):
        raise ValueError("exp: overflow to non-finite value")

    def vjp(g):
        return (mul(g, exp(a)),)

    return _node(out, "exp", (a,), vjp)


def log(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0):
        raise ValueError("log: input must be strictly positive")

    def vjp(g):
        return (div(g, a),)

    return _node(np.log(a.data), "log", (a,), vjp)


def softmax_rows(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        s = softmax_rows(a)
        inner = sum_cols(mul(g, s))
        return (mul(s, sub(g, expand_cols(inner, a.shape[1]))),)

    return _node(out, "softmax_rows", (a,), vjp)


# ---------------------------------------------------------------------------
# reductions and expansions


def sum_all(a: Tensor) -> Tensor:
    a = _as_tensor(a)

    def vjp(g):
        return (expand_scalar(g, a.shape),)

    return _node(np.array([[a.data.sum()]]), "sum_all", (a,), vjp)


def mean_all(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size

    def vjp(g):
        return (scale(expand_scalar(g, a.shape), 1.0 / n),)

    return _node(np.array([[a.data.mean()]]), "mean_all", (a,), vjp)


def sum_rows(a: Tensor) -> Tensor:
    """Column sums: (n, d) -> (1, d)."""
    a = _as_tensor(a)

    def vjp(g):
        return (expand_rows(g, a.shape[0]),)

    return _node(a.data.sum(axis=0, keepdims=True), "sum_rows", (a,), vjp)


def sum_cols(a: Tensor) -> Tensor:
    """Row sums: (n, d) -> (n, 1)."""
    a = _as_tensor(a)

    def vjp(g):
        return (expand_cols(g, a.shape[1]),)

    return _node(a.data.sum(axis=1, keepdims=True), "sum_cols", (a,), vjp)


def expand_rows(a: Tensor, n: int) -> Tensor:
    """Repeat a (1, d) row n times."""
    a = _as_tensor(a)
    if a.shape[0] != 1:
        _shape_error("expand_rows", a.shape)

    def vjp(g):
        return (sum_rows(g),)

    return _node(np.repeat(a.data, n, axis=0), "expand_rows", (a,), vjp)


def expand_cols(a: Tensor, d: int) -> Tensor:
    """Repeat an (n, 1) column d times."""
    a = _as_tensor(a)
    if a.shape[1] != 1:
        _shape_error("expand_cols", a.shape)

    def vjp(g):
        return (sum_cols(g),)

    return _node(np.repeat(a.data, d, axis=1), "expand_cols", (a,), vjp)


def expand_scalar(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    if a.shape != (1, 1):
        _shape_error("expand_scalar", a.shape)

    def vjp(g):
        return (sum_all(g),)

    return _node(np.full(shape, a.data[0, 0]), "expand_scalar", (a,), vjp)


def max_all(a: Tensor) -> Tensor:
    """Maximum entry; subgradient routed to the first argmax only."""
    a = _as_tensor(a)
    flat_idx = int(np.argmax(a.data))
    mask = np.zeros_like(a.data)
    mask.flat[flat_idx] = 1.0

    def vjp(g):
        return (mul(expand_scalar(g, a.shape), constant(mask)),)

    return _node(np.array([[a.data.max()]]), "max_all", (a,), vjp)


def dot_rows(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise inner products: (n, d) x (n, d) -> (n, 1)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        _shape_error("dot_rows", a.shape, b.shape)
    return sum_cols(mul(a, b))


# ---------------------------------------------------------------------------
# dispatcher for the generic op surface

_OPS: dict[str, Callable] = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "scale": scale,
    "concat_cols": concat_cols,
    "relu": relu,
    "lrelu": lrelu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "abs": abs_,
    "square": square,
    "exp": exp,
    "log": log,
    "softmax_rows": softmax_rows,
    "mean_all": mean_all,
    "sum_all": sum_all,
    "dot_rows": dot_rows,
}


def forward_op(kind: str, *inputs, **kwargs) -> Tensor:
    """Apply a named forward operation; unknown kinds are hard errors."""
    try:
        fn = _OPS[kind]
    except KeyError:
        raise ValueError(f"unknown op kind {kind!r}") from None
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# backward


def backward(root: Tensor, wrt: Sequence[Tensor], create_graph: bool = False):
    """Gradients of a scalar root with respect to each tensor in wrt.

    Targets that do not participate in root's graph get a zero tensor of
    their shape.  With create_graph=True the returned gradients are graph
    nodes, so an expression of them can be differentiated again; without it
    the gradient arithmetic runs untraced (plain values, less memory).
    """
    if root.shape != (1, 1):
        raise ValueError(f"backward: root must be scalar, got shape {root.shape}")
    wrt = list(wrt)
    wrt_ids = {t.id for t in wrt}

    # Reachable subgraph from root, then restrict to nodes on a path to wrt.
    nodes: dict[int, Tensor] = {}
    stack = [root]
    while stack:
        t = stack.pop()
        if t.id in nodes:
            continue
        nodes[t.id] = t
        stack.extend(t.parents)
    needed: set[int] = set()
    for tid in sorted(nodes):
        t = nodes[tid]
        if tid in wrt_ids or any(p.id in needed for p in t.parents):
            needed.add(tid)

    def run():
        grads: dict[int, Tensor] = {root.id: constant(np.ones((1, 1)))}
        for tid in sorted(nodes, reverse=True):
            if tid not in grads:
                continue
            g = grads.pop(tid) if tid not in wrt_ids else grads[tid]
            t = nodes[tid]
            if t.vjp is None or not t.parents:
                continue
            parent_grads = t.vjp(g)
            for p, pg in zip(t.parents, parent_grads):
                if pg is None or p.id not in needed:
                    continue
                if p.id in grads:
                    grads[p.id] = add(grads[p.id], pg)
                else:
                    grads[p.id] = pg
        out = []
        for t in wrt:
            if t.id in grads:
                out.append(grads[t.id])
            else:
                out.append(constant(np.zeros(t.shape)))
        return out

    if create_graph:
        return run()
    with no_trace():
        return run()


def finite_diff_oracle(f: Callable[[np.ndarray], float], theta: np.ndarray,
                       step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, coordinate by
    coordinate.  The reference implementation every analytic gradient in
    this package is tested against; keep it free of autodiff machinery."""
    if step <= 0:
        raise ValueError("finite_diff_oracle: step must be positive")
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    flat = theta.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f(theta)
        flat[i] = orig - step
        down = f(theta)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return grad
