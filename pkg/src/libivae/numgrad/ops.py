"""Differentiable primitives.

Each primitive computes its forward value with numpy and, when a tape is
active, records a vector-Jacobian product closure.  Elementwise binary ops
follow numpy broadcasting; gradients are summed back to the operand shape.
"""
from __future__ import annotations

import numpy as np

from .tensor import NotPositiveDefiniteError, ShapeError, Tensor, as_tensor, record

CBRT_GUARD = 1e-12


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _binary_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return record("add", a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return record("sub", a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape("mul", a, b)
    av, bv = a.data, b.data
    return record("mul", av * bv, (a, b),
                  lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape("div", a, b)
    av, bv = a.data, b.data
    out = av / bv
    return record("div", out, (a, b),
                  lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * out / bv, bv.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return record("neg", -a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    av, bv = a.data, b.data
    return record("matmul", av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return record("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return record("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return record("getitem", np.array(a.data[idx]), (a,), vjp)


def concat(tensors, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]
    try:
        value = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError("concat", ts[0].shape, ts[-1].shape) from None
    return record("concat", value, ts, lambda g: tuple(np.split(g, splits, axis=axis)))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return record("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    av = a.data
    return record("log", np.log(av), (a,), lambda g: (g / av,))


def square(a) -> Tensor:
    a = as_tensor(a)
    av = a.data
    return record("square", av * av, (a,), lambda g: (2.0 * g * av,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return record("sqrt", out, (a,), lambda g: (0.5 * g / out,))


def cbrt(a) -> Tensor:
    """Signed cube root; the derivative uses ``max(|x|, 1e-12)`` near zero."""
    a = as_tensor(a)
    av = a.data
    out = np.cbrt(av)
    safe = np.maximum(np.abs(av), CBRT_GUARD)
    return record("cbrt", out, (a,), lambda g: (g / (3.0 * np.cbrt(safe) ** 2),))


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    if isinstance(p, Tensor):
        raise TypeError("power only supports a constant exponent")
    av = a.data
    return record("power", av ** p, (a,), lambda g: (g * p * av ** (p - 1),))


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return record("sum", np.sum(a.data, axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return sum(a, axis, keepdims) * (1.0 / n)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = (a.data > 0).astype(np.float64)
    return record("relu", a.data * mask, (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return record("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    mask = ((a.data >= lo) & (a.data <= hi)).astype(np.float64)
    return record("clip", np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


def sqnorm(a) -> Tensor:
    """Squared L2 norm over all entries (Frobenius for matrices)."""
    a = as_tensor(a)
    av = a.data
    return record("sqnorm", np.array(np.sum(av * av)), (a,), lambda g: (2.0 * g * av,))


def pairwise_rbf_sum(a, scale: float) -> Tensor:
    """``sum_ij exp(-scale * ||a_i - a_j||^2)`` over the rows of an n x d matrix."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("pairwise_rbf_sum", a.shape, a.shape)
    av = a.data
    sq = np.sum(av * av, axis=1)
    dist = np.maximum(sq[:, None] + sq[None, :] - 2.0 * av @ av.T, 0.0)
    K = np.exp(-scale * dist)

    def vjp(g):
        return (-4.0 * scale * g * (K.sum(axis=1)[:, None] * av - K @ av),)

    return record("pairwise_rbf_sum", np.array(K.sum()), (a,), vjp)


def diag(a) -> Tensor:
    """Diagonal of a square matrix as a vector."""
    a = as_tensor(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError("diag", a.shape, a.shape)
    return record("diag", np.diag(a.data).copy(), (a,), lambda g: (np.diag(g),))


# -- linear algebra ---------------------------------------------------------

def _square_check(op: str, a: Tensor) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(op, a.shape, a.shape[::-1])


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def cholesky_factor(s: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``(s + s.T)/2``; reports the failing pivot."""
    s = _sym(np.asarray(s, dtype=np.float64))
    try:
        return np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        pass
    n = s.shape[0]
    L = np.zeros_like(s)
    for j in range(n):
        d = s[j, j] - L[j, :j] @ L[j, :j]
        if not d > 0:
            raise NotPositiveDefiniteError(j)
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = (s[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    raise NotPositiveDefiniteError(n - 1)


def _tri_solve(L: np.ndarray, b: np.ndarray, lower: bool = True, trans: bool = False) -> np.ndarray:
    from scipy.linalg import solve_triangular
    return solve_triangular(L, b, lower=lower, trans="T" if trans else "N")


def cholesky(a) -> Tensor:
    a = as_tensor(a)
    _square_check("cholesky", a)
    L = cholesky_factor(a.data)

    def vjp(g):
        phi = np.tril(L.T @ g)
        phi[np.diag_indices_from(phi)] *= 0.5
        # L^{-T} phi L^{-1}
        tmp = _tri_solve(L, phi, lower=True, trans=True)
        s_bar = _tri_solve(L, tmp.T, lower=True, trans=True).T
        return (_sym(s_bar),)

    return record("cholesky", L, (a,), vjp)


def logdet(a) -> Tensor:
    a = as_tensor(a)
    _square_check("logdet", a)
    L = cholesky_factor(a.data)
    value = 2.0 * np.sum(np.log(np.diag(L)))

    def vjp(g):
        linv = _tri_solve(L, np.eye(L.shape[0]))
        return (g * (linv.T @ linv),)

    return record("logdet", np.array(value), (a,), vjp)


def inv(a) -> Tensor:
    """Inverse of a symmetric positive-definite matrix via its Cholesky factor."""
    a = as_tensor(a)
    _square_check("inv", a)
    L = cholesky_factor(a.data)
    linv = _tri_solve(L, np.eye(L.shape[0]))
    out = linv.T @ linv
    return record("inv", out, (a,), lambda g: (-_sym(out @ g @ out),))
