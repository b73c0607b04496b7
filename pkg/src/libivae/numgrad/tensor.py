"""Dense tensors recorded on an append-only tape for reverse-mode differentiation.

A :class:`Tape` is opened per training step (define-by-run).  Operations on
tensors while a tape is active append one node each; parameters (tensors with
``requires_grad=True``) are registered lazily as leaves the first time an
operation consumes them.  Outside a tape every operation is a plain numpy
evaluation.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    def __init__(self, op: str, left: tuple, right: tuple):
        self.op = op
        self.left = tuple(left)
        self.right = tuple(right)
        super().__init__(f"{op}: incompatible shapes {self.left} and {self.right}")


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    def __init__(self, pivot: int):
        self.pivot = pivot
        super().__init__(f"matrix is not positive definite (failed at pivot {pivot})")


class DivergenceError(FloatingPointError):
    """Raised when a loss or gradient becomes non-finite."""


_local = threading.local()


def _stack() -> list:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def active_tape() -> "Tape | None":
    tapes = _stack()
    return tapes[-1] if tapes else None


@dataclass
class _Node:
    op: str
    parents: tuple
    vjp: Callable | None
    shape: tuple


class Tensor:
    __slots__ = ("data", "requires_grad", "_tape", "_node", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self._tape = None
        self._node = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def node_id(self) -> int | None:
        return self._node

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        tag = " param" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{tag}, data={np.array2string(self.data, precision=4)})"

    # operator sugar; implementations live in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from . import ops
        return ops.matmul(other, self)

    def __pow__(self, p):
        from . import ops
        return ops.power(self, p)

    def __getitem__(self, idx):
        from . import ops
        return ops.getitem(self, idx)

    @property
    def T(self):
        from . import ops
        return ops.transpose(self)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Append-only record of the operations evaluated since it was opened.

    Nodes are stored in evaluation order, so parents always precede their
    children and a single reversed sweep is a valid reverse topological order.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._leaf_ids: dict[int, int] = {}
        self._leaves: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False

    def __len__(self) -> int:
        return len(self.nodes)

    def node_of(self, t: Tensor) -> int | None:
        if t._tape is self:
            return t._node
        if t.requires_grad:
            key = id(t)
            if key not in self._leaf_ids:
                self._leaf_ids[key] = len(self.nodes)
                self.nodes.append(_Node("leaf", (), None, t.shape))
                self._leaves.append(t)
            return self._leaf_ids[key]
        return None

    def record(self, op: str, value: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
        ids = tuple(self.node_of(p) for p in parents)
        out = Tensor(value)
        if all(i is None for i in ids):
            return out
        out._tape = self
        out._node = len(self.nodes)
        self.nodes.append(_Node(op, ids, vjp, out.shape))
        return out

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Gradients of a scalar ``loss`` with respect to every leaf on this tape."""
        if loss.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: list = [None] * len(self.nodes)
        if loss._tape is not self:
            return {leaf: np.zeros_like(leaf.data) for leaf in self._leaves}
        grads[loss._node] = np.ones(loss.shape)
        for i in range(loss._node, -1, -1):
            g = grads[i]
            node = self.nodes[i]
            if g is None or node.vjp is None:
                continue
            pgrads = node.vjp(g)
            for pid, pg in zip(node.parents, pgrads):
                if pid is None or pg is None:
                    continue
                if grads[pid] is None:
                    grads[pid] = np.array(pg, dtype=np.float64, copy=True).reshape(self.nodes[pid].shape)
                else:
                    grads[pid] += pg
        out = {}
        for leaf in self._leaves:
            g = grads[self._leaf_ids[id(leaf)]]
            out[leaf] = np.zeros_like(leaf.data) if g is None else g
        return out

    def grad(self, loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
        table = self.backward(loss)
        return [table.get(p, np.zeros_like(p.data)) for p in params]


def record(op: str, value: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    tape = active_tape()
    if tape is None:
        return Tensor(value)
    return tape.record(op, value, parents, vjp)


def value_and_grad(fn: Callable[[], Tensor], params: Sequence[Tensor]) -> tuple[float, list[np.ndarray]]:
    """Evaluate ``fn`` on a fresh tape and return its value and parameter gradients."""
    with Tape() as tape:
        loss = fn()
    return loss.item(), tape.grad(loss, params)
