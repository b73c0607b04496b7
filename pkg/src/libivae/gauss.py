"""Exact multivariate Gaussian computations (numpy, not differentiable)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .numgrad import cholesky_factor

LOG_2PI = np.log(2.0 * np.pi)
SYM_TOL = 1e-12


def _symmetrize(cov: np.ndarray) -> np.ndarray:
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    if cov.shape[0] != cov.shape[1]:
        raise ValueError(f"covariance must be square, got {cov.shape}")
    if np.max(np.abs(cov - cov.T), initial=0.0) > SYM_TOL * max(1.0, np.max(np.abs(cov))):
        raise ValueError("covariance is not symmetric")
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class GaussianDist:
    mean: np.ndarray
    cov: np.ndarray
    diagonal: bool = False

    approximate = False

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = _symmetrize(self.cov)
        if cov.shape[0] != mean.shape[0]:
            raise ValueError(f"mean has length {mean.shape[0]} but covariance is {cov.shape}")
        if self.diagonal and np.any(cov[~np.eye(len(mean), dtype=bool)] != 0):
            raise ValueError("diagonal-flagged covariance has off-diagonal entries")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", cholesky_factor(cov))

    @classmethod
    def diag(cls, mean, var) -> "GaussianDist":
        return cls(mean, np.diag(np.asarray(var, dtype=np.float64)), diagonal=True)

    @classmethod
    def standard(cls, d: int) -> "GaussianDist":
        return cls(np.zeros(d), np.eye(d), diagonal=True)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def chol(self) -> np.ndarray:
        return self._chol

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    def precision(self) -> np.ndarray:
        return cho_solve((self._chol, True), np.eye(self.dim))

    def entropy(self) -> float:
        return 0.5 * (self.dim * (1.0 + LOG_2PI) + self.logdet())


def logpdf(dist: GaussianDist, point) -> np.ndarray | float:
    """Log density at one point (shape ``(d,)``) or a batch (shape ``(n, d)``)."""
    x = np.asarray(point, dtype=np.float64)
    if x.shape[-1] != dist.dim:
        raise ValueError(f"point has dimension {x.shape[-1]}, distribution has {dist.dim}")
    diff = (x - dist.mean).reshape(-1, dist.dim)
    sol = solve_triangular(dist.chol, diff.T, lower=True)
    out = -0.5 * (np.sum(sol * sol, axis=0) + dist.logdet() + dist.dim * LOG_2PI)
    return float(out[0]) if x.ndim == 1 else out


def sample(dist: GaussianDist, rng: np.random.Generator, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be at least 1")
    eps = rng.standard_normal((n, dist.dim))
    return dist.mean + eps @ dist.chol.T


def kl(q: GaussianDist, p: GaussianDist) -> float:
    """KL[q || p] in nats."""
    if q.dim != p.dim:
        raise ValueError(f"dimension mismatch: {q.dim} vs {p.dim}")
    a = solve_triangular(p.chol, q.chol, lower=True)
    b = solve_triangular(p.chol, q.mean - p.mean, lower=True)
    return 0.5 * float(np.sum(a * a) + b @ b - q.dim + p.logdet() - q.logdet())


@dataclass(frozen=True)
class JointGaussian:
    """Joint Gaussian over (x, z) stored as blocks."""

    mean_x: np.ndarray
    mean_z: np.ndarray
    cov_xx: np.ndarray
    cov_xz: np.ndarray
    cov_zz: np.ndarray

    def __post_init__(self):
        for name in ("mean_x", "mean_z"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64)))
        for name in ("cov_xx", "cov_xz", "cov_zz"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=np.float64)))
        dx, dz = len(self.mean_x), len(self.mean_z)
        if self.cov_xx.shape != (dx, dx) or self.cov_zz.shape != (dz, dz) or self.cov_xz.shape != (dx, dz):
            raise ValueError("block shapes do not match the means")
        cholesky_factor(self.full_cov())

    def full_cov(self) -> np.ndarray:
        return np.block([[self.cov_xx, self.cov_xz], [self.cov_xz.T, self.cov_zz]])

    def marginal_x(self) -> GaussianDist:
        return GaussianDist(self.mean_x, self.cov_xx)

    def marginal_z(self) -> GaussianDist:
        return GaussianDist(self.mean_z, self.cov_zz)


def linear_gaussian_joint(loading: np.ndarray, noise_cov: np.ndarray, prior: GaussianDist | None = None) -> JointGaussian:
    """Joint of ``z ~ prior``, ``x = loading @ z + noise`` with noise ~ N(0, noise_cov)."""
    loading = np.atleast_2d(np.asarray(loading, dtype=np.float64))
    prior = prior or GaussianDist.standard(loading.shape[1])
    cxz = loading @ prior.cov
    return JointGaussian(loading @ prior.mean, prior.mean, loading @ prior.cov @ loading.T + noise_cov,
                         cxz, prior.cov)


def condition(joint: JointGaussian, x) -> GaussianDist:
    """Distribution of z given x."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != joint.mean_x.shape:
        raise ValueError(f"x has shape {x.shape}, expected {joint.mean_x.shape}")
    lxx = cholesky_factor(joint.cov_xx)
    gain = cho_solve((lxx, True), joint.cov_xz).T  # Szx Sxx^-1
    mean = joint.mean_z + gain @ (x - joint.mean_x)
    cov = joint.cov_zz - gain @ joint.cov_xz
    return GaussianDist(mean, 0.5 * (cov + cov.T))


def best_fit_meanfield(target: GaussianDist) -> GaussianDist:
    """Diagonal Gaussian minimizing KL[diag || target]: variances ``1 / diag(precision)``."""
    prec_diag = np.diag(target.precision())
    return GaussianDist.diag(target.mean, 1.0 / prec_diag)


def mutual_information(joint: JointGaussian) -> float:
    """I(X; Z) = 0.5 [logdet Sxx + logdet Szz - logdet S]."""
    _, full = np.linalg.slogdet(joint.full_cov())
    return 0.5 * (joint.marginal_x().logdet() + joint.marginal_z().logdet() - full)
