"""Evaluation: importance-sampled test log-likelihood, k-NN two-sample statistic,
and aggregated-posterior draws."""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .models import LOG_2PI, Decoder, GaussianEncoder
from .numgrad import Tensor

# A proposal maps a batch X (n x D) to (means n x d, covariances).  Covariances
# are either variances (n x d), one shared d x d matrix, or a stack n x d x d.
Proposal = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def as_proposal(q) -> Proposal:
    if isinstance(q, GaussianEncoder):
        return q.moments
    if callable(q):
        return q
    raise TypeError(f"cannot use {type(q).__name__} as a proposal")


def linear_posterior(decoder: Decoder) -> Proposal:
    """Exact p_theta(z|x) of a linear-Gaussian decoder as a proposal."""
    lg = decoder.linear_gaussian()
    if lg is None:
        raise ValueError(f"{decoder.kind} decoder has no closed-form posterior")
    W, Psi = lg
    G = np.linalg.solve(Psi, W)
    cov = np.linalg.inv(np.eye(W.shape[1]) + W.T @ G)
    cov = 0.5 * (cov + cov.T)

    def post(X):
        X = np.atleast_2d(X)
        return X @ G @ cov, cov

    return post


def _full_cov(cov: np.ndarray, n: int, d: int) -> np.ndarray:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape == (n, d):
        return np.einsum("ni,ij->nij", cov, np.eye(d))
    if cov.shape == (d, d):
        return np.broadcast_to(cov, (n, d, d))
    if cov.shape == (n, d, d):
        return cov
    raise ValueError(f"proposal covariance has shape {cov.shape}; expected {(n, d)}, {(d, d)} or {(n, d, d)}")


def log_mean_exp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """``log(mean(exp(a)))`` with a max shift."""
    a = np.asarray(a, dtype=np.float64)
    return logsumexp(a, axis=axis) - np.log(a.shape[axis])


def importance_log_likelihood(decoder: Decoder, proposal, X: np.ndarray, S: int = 5000,
                              inflation: float = 2.0, rng: np.random.Generator | None = None,
                              per_point: bool = False, chunk: int = 2_000_000):
    """Mean over X of ``log (1/S) sum_s p(x|z_s) p(z_s) / q(z_s|x)`` with z_s ~ q(.|x)
    and the proposal covariance multiplied by ``inflation``."""
    if S < 1:
        raise ValueError("S must be >= 1")
    if inflation < 1:
        raise ValueError("inflation must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, d = len(X), decoder.latent_dim
    means, covs = as_proposal(proposal)(X)
    covs = _full_cov(covs, n, d) * inflation
    try:
        chols = np.linalg.cholesky(covs)
    except np.linalg.LinAlgError:
        raise ValueError("proposal covariance is not positive definite (zero proposal density)") from None
    half_logdet = np.sum(np.log(np.diagonal(chols, axis1=1, axis2=2)), axis=1)
    per_batch = max(1, chunk // (S * max(d, decoder.data_dim)))
    out = np.empty(n)
    for lo in range(0, n, per_batch):
        sl = slice(lo, min(n, lo + per_batch))
        m = len(X[sl])
        eps = rng.standard_normal((m, S, d))
        z = means[sl, None, :] + np.einsum("nij,nsj->nsi", chols[sl], eps)
        log_q = -0.5 * np.sum(eps * eps, axis=2) - half_logdet[sl, None] - 0.5 * d * LOG_2PI
        log_prior = -0.5 * np.sum(z * z, axis=2) - 0.5 * d * LOG_2PI
        mean_x = decoder.mean(Tensor(z.reshape(m * S, d))).data.reshape(m, S, -1)
        r = X[sl, None, :] - mean_x
        var = decoder.noise_var
        log_lik = -0.5 * (np.sum(r * r / var, axis=2) + np.sum(np.log(var)) + len(var) * LOG_2PI)
        if not np.all(np.isfinite(log_q)):
            raise ValueError("zero proposal density")
        out[sl] = log_mean_exp(log_lik + log_prior - log_q, axis=1)
    return out if per_point else float(np.mean(out))


def _set_order(p: np.ndarray, q: np.ndarray) -> bool:
    """True if ``p`` and ``q`` should swap to reach a canonical argument order."""
    hp = hashlib.sha256(np.ascontiguousarray(p).tobytes()).digest()
    hq = hashlib.sha256(np.ascontiguousarray(q).tobytes()).digest()
    return hq < hp


def knn_chance(subsample: int) -> float:
    return (subsample - 1) / (2 * subsample - 1)


def knn_maximum(subsample: int) -> float:
    """Statistic value when every point's neighbours share its label."""
    return (1.0 - knn_chance(subsample)) * np.sqrt(2 * subsample)


def knn_two_sample(samples_p: np.ndarray, samples_q: np.ndarray, k: int = 1, subsample: int = 100,
                   repetitions: int = 2000, rng: np.random.Generator | None = None,
                   return_all: bool = False):
    """k-NN label-agreement statistic between two sample sets.

    Each repetition draws ``subsample`` points from each set, pools them and
    takes the mean fraction of each point's k nearest neighbours sharing its
    label, minus the chance level.  The average is scaled by sqrt(2 subsample).
    Zero means indistinguishable; larger means more separated.
    """
    p = np.atleast_2d(np.asarray(samples_p, dtype=np.float64))
    q = np.atleast_2d(np.asarray(samples_q, dtype=np.float64))
    if p.shape[1] != q.shape[1]:
        raise ValueError(f"dimension mismatch {p.shape[1]} vs {q.shape[1]}")
    if min(len(p), len(q)) < subsample:
        raise ValueError(f"each sample set needs at least {subsample} points")
    m = subsample
    if 2 * m < k + 1:
        raise ValueError(f"need more than k={k} points in the pooled sample")
    if _set_order(p, q):
        p, q = q, p
    rng = rng if rng is not None else np.random.default_rng(0)
    seeds = rng.integers(0, 2**63 - 1, size=repetitions)
    labels = np.repeat([0, 1], m)
    stats = np.empty(repetitions)
    for r, s in enumerate(seeds):
        rr = np.random.default_rng(s)
        pool = np.concatenate([p[rr.choice(len(p), m, replace=False)], q[rr.choice(len(q), m, replace=False)]])
        sq = np.sum(pool * pool, axis=1)
        D = sq[:, None] + sq[None, :] - 2.0 * pool @ pool.T
        np.fill_diagonal(D, np.inf)
        nn = np.argmin(D, axis=1)[:, None] if k == 1 else np.argsort(D, axis=1, kind="stable")[:, :k]
        agree = np.count_nonzero(labels[nn] == labels[:, None], axis=1)
        stats[r] = agree.sum() / (2 * m * k) - knn_chance(m)
    stats *= np.sqrt(2 * m)
    return stats if return_all else float(stats.mean())


def aggregated_posterior(posterior, X: np.ndarray, rng: np.random.Generator, m: int) -> np.ndarray:
    """``m`` draws from E_x[q(z|x)]: pick x uniformly from X, then z ~ q(z|x)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if len(X) == 0 or X.size == 0:
        raise ValueError("X is empty")
    idx = rng.integers(0, len(X), size=m)
    means, covs = as_proposal(posterior)(X[idx])
    d = means.shape[1]
    chols = np.linalg.cholesky(_full_cov(covs, m, d))
    return means + np.einsum("nij,nj->ni", chols, rng.standard_normal((m, d)))


@dataclass
class EvalReport:
    test_ll_mean: float
    test_ll_std: float
    two_sample_mean: float
    two_sample_std: float
    test_ll: list = field(default_factory=list)
    two_sample: list = field(default_factory=list)
    aggregated: np.ndarray | None = field(default=None, repr=False)
    provenance: dict = field(default_factory=dict)

    @classmethod
    def from_runs(cls, test_ll: list[float], two_sample: list[float], aggregated=None,
                  provenance: dict | None = None) -> "EvalReport":
        ll, ts = np.asarray(test_ll, dtype=float), np.asarray(two_sample, dtype=float)
        return cls(float(ll.mean()) if ll.size else float("nan"), float(ll.std()) if ll.size else float("nan"),
                   float(ts.mean()) if ts.size else float("nan"), float(ts.std()) if ts.size else float("nan"),
                   ll.tolist(), ts.tolist(), aggregated, dict(provenance or {}))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["aggregated"] = None if self.aggregated is None else np.asarray(self.aggregated).tolist()
        return d


def evaluate(decoder: Decoder, proposal, X_test: np.ndarray, X_ref: np.ndarray, seed: int,
             S: int = 5000, inflation: float = 2.0, k: int = 1, subsample: int = 100,
             repetitions: int = 2000, n_model: int | None = None, with_ll: bool = True) -> dict:
    """Test-LL and two-sample statistic of one model on one dataset, from a single eval seed."""
    streams = np.random.default_rng(seed).spawn(3)
    out = {"seed": seed, "S": S, "k": k, "inflation": inflation, "subsample": subsample,
           "repetitions": repetitions}
    out["test_ll"] = (importance_log_likelihood(decoder, proposal, X_test, S, inflation, streams[0])
                      if with_ll else float("nan"))
    model = decoder.sample(streams[1], n_model or len(X_ref))
    out["two_sample"] = knn_two_sample(model, X_ref, k, subsample, repetitions, streams[2])
    return out
