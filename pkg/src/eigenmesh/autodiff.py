"""Reverse-mode automatic differentiation over dense float64 tensors.

Define-by-run: operations record onto the active :class:`Tape` (a thread's
innermost ``with Tape()`` block) whenever an input requires gradients.
Backward walks the tape in reverse creation order, which is topological by
construction. Without an active tape, operations are plain forward math.

Sparse matrices and gather indices are treated as constants; the only
broadcasting is scalar-tensor and row-vector bias.
"""

from __future__ import annotations

import threading

import numpy as np
import scipy.sparse as sp

FINITE_CHECKS = True


class AutodiffError(RuntimeError):
    pass


_state = threading.local()


def _active_tape():
    stack = getattr(_state, "tapes", None)
    return stack[-1] if stack else None


class Tape:
    """Ordered record of one forward pass."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        if not hasattr(_state, "tapes"):
            _state.tapes = []
        _state.tapes.append(self)
        return self

    def __exit__(self, *exc):
        _state.tapes.pop()
        return False


class Tensor:
    """float64 array with an optional gradient slot and tape linkage."""

    __slots__ = ("values", "grad", "requires_grad", "parents", "vjp", "name")

    def __init__(self, values, requires_grad: bool = False, name: str = ""):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.parents: tuple[Tensor, ...] = ()
        self.vjp = None
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    def item(self) -> float:
        return float(self.values)

    def grad_array(self) -> np.ndarray:
        """Gradient, zero-filled when this leaf was unreachable from the loss."""
        return self.grad if self.grad is not None else np.zeros_like(self.values)

    def detach(self) -> "Tensor":
        return Tensor(self.values)

    # operator sugar over the primitives below
    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else add_scalar(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else add_scalar(self, -other)

    def __rsub__(self, other):
        return add_scalar(neg(self), other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else mul_scalar(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, grad={self.requires_grad})"


class SparseMatrix:
    """Constant sparse operator with a cached transpose for backward."""

    def __init__(self, matrix: sp.spmatrix):
        self.matrix = matrix.tocsr()
        self._transpose: sp.csr_matrix | None = None

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def transpose(self) -> sp.csr_matrix:
        if self._transpose is None:
            self._transpose = self.matrix.T.tocsr()
        return self._transpose


# Above this size, non-finite values are caught by the (always checked)
# scalar reductions every loss funnels into, so per-op checks can stop.
FINITE_CHECK_MAX_SIZE = 4096


def _record(out: Tensor, parents: tuple[Tensor, ...], vjp) -> Tensor:
    tape = _active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = parents
        out.vjp = vjp
        tape.nodes.append(out)
    if (
        FINITE_CHECKS
        and out.values.size <= FINITE_CHECK_MAX_SIZE
        and not np.isfinite(np.sum(out.values))
    ):
        raise AutodiffError(f"non-finite values in {vjp.__qualname__.split('.')[0]} output")
    return out


def backward(loss: Tensor, stop: tuple[Tensor, ...] = ()) -> None:
    """Accumulate gradients of a scalar loss into every reachable leaf.

    ``stop`` tensors receive their adjoint but do not propagate it to their
    parents — the gradient-routing hook used by the composite objectives.
    """
    if loss.values.ndim != 0:
        raise AutodiffError(f"backward needs a scalar loss, got shape {loss.values.shape}")
    if loss.vjp is None:
        if loss.requires_grad:
            loss.grad = (loss.grad if loss.grad is not None else 0.0) + np.ones(())
        return
    tape = _active_tape()
    if tape is None:
        raise AutodiffError("backward outside of a Tape context")
    stop_ids = {id(t) for t in stop}
    adjoint: dict[int, np.ndarray] = {id(loss): np.ones(())}
    try:
        start = len(tape.nodes) - 1 - tape.nodes[::-1].index(loss)
    except ValueError as exc:
        raise AutodiffError("loss was not recorded on the active tape") from exc
    for node in reversed(tape.nodes[: start + 1]):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if node.grad is not None:
            node.grad = node.grad + g
        elif not node.parents:
            node.grad = g
        if id(node) in stop_ids or node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.vjp is None:
                parent.grad = pg if parent.grad is None else parent.grad + pg
            else:
                prev = adjoint.get(id(parent))
                adjoint[id(parent)] = pg if prev is None else prev + pg


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None


# --- primitives ---


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.shape[-1] != b.values.shape[0]:
        raise AutodiffError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    out = Tensor(a.values @ b.values)

    def vjp(g):
        # skip the GEMM for constant operands (e.g. data entering conv 1)
        ga = g @ b.values.T if a.requires_grad else None
        gb = a.values.T @ g if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), vjp)


def sparse_dense_matmul(s: SparseMatrix, x: Tensor) -> Tensor:
    if s.shape[1] != x.values.shape[0]:
        raise AutodiffError(f"sparse matmul shape mismatch {s.shape} @ {x.shape}")
    out = Tensor(s.matrix @ x.values)

    def vjp(g):
        return (s.transpose @ g,)

    return _record(out, (x,), vjp)


def gather_rows(x: Tensor, indices: np.ndarray, scatter: SparseMatrix | None = None) -> Tensor:
    """Select rows by index. ``scatter`` (rows x selected one-hot transpose
    already applied) speeds up the backward scatter-add for hot paths."""
    indices = np.asarray(indices, dtype=np.int64)
    out = Tensor(np.take(x.values, indices, axis=0))

    def vjp(g):
        if scatter is not None:
            return (scatter.matrix @ g,)
        acc = np.zeros_like(x.values)
        np.add.at(acc, indices, g)
        return (acc,)

    return _record(out, (x,), vjp)


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.values.shape != b.values.shape:
        raise AutodiffError(f"{op} shape mismatch {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    out = Tensor(a.values + b.values)

    def vjp(g):
        return g, g

    return _record(out, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    out = Tensor(a.values - b.values)

    def vjp(g):
        return g, -g

    return _record(out, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    out = Tensor(a.values * b.values)

    def vjp(g):
        ga = g * b.values if a.requires_grad else None
        gb = g * a.values if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), vjp)


def neg(x: Tensor) -> Tensor:
    out = Tensor(-x.values)

    def vjp(g):
        return (-g,)

    return _record(out, (x,), vjp)


def add_scalar(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.values + c)

    def vjp(g):
        return (g,)

    return _record(out, (x,), vjp)


def mul_scalar(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.values * c)

    def vjp(g):
        return (g * c,)

    return _record(out, (x,), vjp)


def add_const(x: Tensor, c: np.ndarray) -> Tensor:
    out = Tensor(x.values + c)

    def vjp(g):
        return (g,)

    return _record(out, (x,), vjp)


def mul_const(x: Tensor, c: np.ndarray) -> Tensor:
    c = np.asarray(c, dtype=np.float64)
    out = Tensor(x.values * c)

    def vjp(g):
        grad = g * c
        # undo numpy broadcasting back to x's shape
        if grad.shape != x.values.shape:
            raise AutodiffError("mul_const broadcast changed shape")
        return (grad,)

    return _record(out, (x,), vjp)


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    if x.values.ndim != 2 or bias.values.shape != (x.values.shape[1],):
        raise AutodiffError(f"add_bias shapes {x.shape} + {bias.shape}")
    out = Tensor(x.values + bias.values)

    def vjp(g):
        return g, g.sum(axis=0)

    return _record(out, (x, bias), vjp)


def elu(x: Tensor) -> Tensor:
    # alpha = 1; exp evaluated only on the negative side
    neg = x.values <= 0.0
    values = x.values.copy()
    ex_neg = np.exp(x.values[neg])
    values[neg] = ex_neg - 1.0
    out = Tensor(values)

    def vjp(g):
        grad = g.copy()
        grad[neg] *= ex_neg
        return (grad,)

    return _record(out, (x,), vjp)


def tensor_sum(x: Tensor) -> Tensor:
    out = Tensor(x.values.sum())

    def vjp(g):
        return (np.broadcast_to(g, x.values.shape).copy(),)

    return _record(out, (x,), vjp)


def tensor_mean(x: Tensor) -> Tensor:
    out = Tensor(x.values.mean())

    def vjp(g):
        return (np.broadcast_to(g / x.values.size, x.values.shape).copy(),)

    return _record(out, (x,), vjp)


def square(x: Tensor) -> Tensor:
    out = Tensor(x.values**2)

    def vjp(g):
        return (g * 2.0 * x.values,)

    return _record(out, (x,), vjp)


def tensor_abs(x: Tensor) -> Tensor:
    out = Tensor(np.abs(x.values))

    def vjp(g):
        # subgradient 0 at the kink
        return (g * np.sign(x.values),)

    return _record(out, (x,), vjp)


def log(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = Tensor(np.log(x.values))

    def vjp(g):
        return (g / x.values,)

    return _record(out, (x,), vjp)


def exp(x: Tensor) -> Tensor:
    out = Tensor(np.exp(x.values))

    def vjp(g):
        return (g * out.values,)

    return _record(out, (x,), vjp)


def l2_norm_rows(x: Tensor) -> Tensor:
    if x.values.ndim != 2:
        raise AutodiffError(f"l2_norm_rows needs a 2-d tensor, got {x.shape}")
    norms = np.linalg.norm(x.values, axis=1)
    out = Tensor(norms)

    def vjp(g):
        safe = np.where(norms > 0, norms, 1.0)
        return ((g / safe)[:, None] * np.where(norms[:, None] > 0, x.values, 0.0),)

    return _record(out, (x,), vjp)


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.values.reshape(shape))

    def vjp(g):
        return (g.reshape(x.values.shape),)

    return _record(out, (x,), vjp)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = Tensor(np.concatenate([t.values for t in tensors], axis=axis))
    sizes = [t.values.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(tensors), vjp)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis."""
    key = [slice(None)] * x.values.ndim
    key[axis] = slice(start, start + length)
    key = tuple(key)
    out = Tensor(x.values[key])

    def vjp(g):
        acc = np.zeros_like(x.values)
        acc[key] = g
        return (acc,)

    return _record(out, (x,), vjp)


def log_softmax(x: Tensor) -> Tensor:
    if x.values.ndim != 2:
        raise AutodiffError("log_softmax expects (batch, classes)")
    shifted = x.values - x.values.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = Tensor(shifted - lse)

    def vjp(g):
        softmax = np.exp(out.values)
        return (g - softmax * g.sum(axis=1, keepdims=True),)

    return _record(out, (x,), vjp)


def stop_gradient(x: Tensor) -> Tensor:
    """Forward identity, no gradient path."""
    return Tensor(x.values)


def gradient_check(f, x: Tensor, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must be deterministic (verified by double evaluation) and return a
    scalar Tensor.
    """
    x.requires_grad = True
    with Tape():
        first = f(x).values
        second = f(x).values
    if not np.array_equal(first, second):
        raise AutodiffError("non-deterministic function under gradient check")
    x.grad = None
    with Tape():
        loss = f(x)
        backward(loss)
    analytic = x.grad_array().ravel().copy()
    flat = x.values.ravel()
    numeric = np.empty_like(analytic)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = float(f(x).values)
        flat[i] = orig - h
        lo = float(f(x).values)
        flat[i] = orig
        numeric[i] = (hi - lo) / (2.0 * h)
    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom))
