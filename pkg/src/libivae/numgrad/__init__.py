"""Minimal reverse-mode automatic differentiation on dense float64 arrays."""
from .ops import (add, cbrt, cholesky, cholesky_factor, clip, concat, diag, div, exp, getitem, inv,
                  log, logdet, matmul, mean, mul, neg, pairwise_rbf_sum, power, relu, reshape, sigmoid,
                  sqnorm, sqrt, square, sub, sum, transpose)
from .optim import Adam, AdamState, adam_step
from .tensor import (DivergenceError, NotPositiveDefiniteError, ShapeError, Tape, Tensor,
                     active_tape, as_tensor, value_and_grad)

__all__ = [
    "Adam", "AdamState", "DivergenceError", "NotPositiveDefiniteError", "ShapeError", "Tape",
    "Tensor", "active_tape", "adam_step", "add", "as_tensor", "cbrt", "cholesky",
    "cholesky_factor", "clip", "concat", "diag", "div", "exp", "getitem", "inv", "log", "logdet",
    "matmul", "mean", "mul", "neg", "pairwise_rbf_sum", "power", "relu", "reshape", "sigmoid",
    "sqnorm", "sqrt", "square", "sub", "sum", "transpose", "value_and_grad",
]
