"""Central finite differences, independent of the tape."""
import numpy as np

from libivae.numgrad import Tape, Tensor


def fd_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Gradient of scalar ``f(ndarray) -> float`` by central differences."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def tape_grad(build, x: np.ndarray):
    """Gradient of ``build(Tensor) -> scalar Tensor`` via the tape."""
    p = Tensor(x, requires_grad=True)
    with Tape() as tape:
        loss = build(p)
    return tape.grad(loss, [p])[0]


def rel_err(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-8))


def check(build, x, h=1e-6) -> float:
    """Relative error between tape and finite-difference gradients of ``sum(build(x))``."""
    from libivae import numgrad as ng

    def scalar(t):
        out = build(t)
        return out if out.size == 1 and out.ndim == 0 else ng.sum(out)

    analytic = tape_grad(scalar, x)
    numeric = fd_grad(lambda v: float(scalar(Tensor(v)).data), x, h)
    return rel_err(analytic, numeric)
