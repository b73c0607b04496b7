"""The VAE objective: Monte-Carlo negative ELBO and its exact MLE + posterior-matching split."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gauss
from . import numgrad as ng
from .models import Decoder, GaussianEncoder
from .numgrad import DivergenceError, Tensor
from .worlds import WorldError, WorldSpec, linear_model, mutual_info, with_B

BEST_FIT = "best-fit"


@dataclass
class ElboBreakdown:
    """Per-datum nats.  ``total = reconstruction + beta * kl``.

    In exact mode ``mle`` and ``pm`` hold the two KL terms and ``total`` is
    their sum ``L``; the reconstruction/kl fields then describe the negative
    ELBO, which exceeds ``L`` by the differential entropy of the data.
    """

    reconstruction: object
    kl: object
    total: object
    beta: float = 1.0
    mle: float | None = None
    pm: float | None = None
    data_entropy: float | None = None

    def value(self) -> float:
        t = self.total
        return t.item() if isinstance(t, Tensor) else float(t)


@dataclass(frozen=True)
class BetaSchedule:
    beta: float = 1.0
    warmup: int = 0
    mode: str = "constant"

    def __post_init__(self):
        if self.mode not in ("constant", "linear-anneal"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")

    @classmethod
    def anneal(cls, beta: float, epochs: int, fraction: float = 0.2) -> "BetaSchedule":
        return cls(beta, max(1, int(round(fraction * epochs))), "linear-anneal")

    def __call__(self, epoch: int) -> float:
        if self.mode == "constant" or epoch >= self.warmup:
            return self.beta
        return self.beta * epoch / self.warmup


def kl_to_standard(mu: Tensor, logvar: Tensor) -> Tensor:
    """Per-row KL[N(mu, diag(exp(logvar))) || N(0, I)]."""
    inner = ng.sub(ng.add(ng.exp(logvar), ng.square(mu)), ng.add(logvar, 1.0))
    return ng.mul(ng.sum(inner, axis=1), 0.5)


def elbo_mc(decoder: Decoder, encoder: GaussianEncoder, x, rng: np.random.Generator,
            beta: float = 1.0) -> ElboBreakdown:
    """Single-sample reparameterized negative ELBO, averaged over the batch."""
    x = ng.as_tensor(x)
    mu, logvar = encoder(x)
    eps = rng.standard_normal(mu.shape)
    z = ng.add(mu, ng.mul(ng.exp(ng.mul(logvar, 0.5)), eps))
    rec = ng.neg(ng.mean(decoder.log_likelihood(x, z)))
    kl = ng.mean(kl_to_standard(mu, logvar))
    total = ng.add(rec, ng.mul(kl, beta)) if beta != 0 else ng.add(rec, 0.0)
    if not np.isfinite(total.data):
        raise DivergenceError("negative ELBO is not finite")
    return ElboBreakdown(rec, kl, total, beta)


# -- exact linear-Gaussian decomposition ---------------------------------------------

def _kl_zero_mean(s0: np.ndarray, s1: np.ndarray) -> float:
    return gauss.kl(gauss.GaussianDist(np.zeros(len(s0)), s0), gauss.GaussianDist(np.zeros(len(s1)), s1))


def data_covariance(spec: WorldSpec) -> np.ndarray:
    loading, noise = linear_model(spec)
    return loading @ loading.T + noise


def _as_linear(theta) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(theta, Decoder):
        lg = theta.linear_gaussian()
        if lg is None:
            raise WorldError(f"{theta.kind} decoder is not linear-Gaussian")
        return lg
    if isinstance(theta, WorldSpec):
        return linear_model(theta)
    loading, noise = theta
    return np.atleast_2d(loading), np.atleast_2d(noise)


def exact_L(theta, phi=BEST_FIT, data_cov=None, data_mean=None) -> ElboBreakdown:
    """Closed-form ``L = KL[p(x) || p_theta(x)] + E_p(x) KL[q(z|x) || p_theta(z|x)]``.

    ``theta`` is a linear decoder, a linear world spec or ``(loading, noise_cov)``.
    ``phi`` is an encoder without hidden layers (affine mean and log-variance;
    the log-variance clamp is ignored) or ``"best-fit"`` for the
    posterior-matching-optimal mean-field encoder.  The data distribution is
    N(data_mean, data_cov), defaulting to the model's own marginal.
    """
    loading, noise = _as_linear(theta)
    dx, dz = loading.shape
    model_cov = loading @ loading.T + noise
    data_cov = model_cov if data_cov is None else np.asarray(data_cov, dtype=np.float64)
    data_mean = np.zeros(dx) if data_mean is None else np.asarray(data_mean, dtype=np.float64)
    mle = gauss.kl(gauss.GaussianDist(data_mean, data_cov), gauss.GaussianDist(np.zeros(dx), model_cov))

    noise_inv = np.linalg.inv(noise)
    prec = np.eye(dz) + loading.T @ noise_inv @ loading
    post_cov = np.linalg.inv(prec)
    gain = post_cov @ loading.T @ noise_inv  # posterior mean = gain @ x
    _, logdet_prec = np.linalg.slogdet(prec)
    pdiag = np.diag(prec)

    if isinstance(phi, str):
        if phi != BEST_FIT:
            raise ValueError(f"unknown encoder spec {phi!r}")
        pm = 0.5 * (np.sum(np.log(pdiag)) - logdet_prec)
    else:
        if phi.net.hidden:
            raise WorldError("exact_L needs an affine encoder")
        W = phi.net.layers[0].weight.data
        b = phi.net.layers[0].bias.data
        w_mu, w_lv, b_mu, b_lv = W[:, :dz], W[:, dz:], b[:dz], b[dz:]
        lv_mean = b_lv + data_mean @ w_lv
        lv_var = np.einsum("ij,ik,kj->j", w_lv, data_cov, w_lv)
        trace = np.sum(pdiag * np.exp(lv_mean + 0.5 * lv_var))
        G = w_mu.T - gain
        c = G @ data_mean + b_mu
        quad = np.trace(G.T @ prec @ G @ data_cov) + c @ prec @ c
        pm = 0.5 * (trace - dz - logdet_prec - np.sum(lv_mean) + quad)

    entropy = gauss.GaussianDist(data_mean, data_cov).entropy()
    neg_elbo = mle + pm + entropy
    kl_prior = _expected_prior_kl(phi, dz, gain, post_cov, pdiag, data_cov, data_mean)
    return ElboBreakdown(reconstruction=neg_elbo - kl_prior, kl=kl_prior, total=mle + pm,
                         mle=float(mle), pm=float(pm), data_entropy=float(entropy))


def _expected_prior_kl(phi, dz, gain, post_cov, pdiag, data_cov, data_mean) -> float:
    """E_p(x) KL[q(z|x) || N(0, I)] in closed form."""
    if isinstance(phi, str):
        w_mu, b_mu = gain.T, np.zeros(dz)
        var_mean, log_mean = 1.0 / pdiag, -np.log(pdiag)
        lv_var = np.zeros(dz)
    else:
        W = phi.net.layers[0].weight.data
        b = phi.net.layers[0].bias.data
        w_mu, w_lv, b_mu, b_lv = W[:, :dz], W[:, dz:], b[:dz], b[dz:]
        log_mean = b_lv + data_mean @ w_lv
        lv_var = np.einsum("ij,ik,kj->j", w_lv, data_cov, w_lv)
        var_mean = np.exp(log_mean + 0.5 * lv_var)
    m_mean = data_mean @ w_mu + b_mu
    m_sq = np.einsum("ij,ik,kj->j", w_mu, data_cov, w_mu) + m_mean ** 2
    return 0.5 * float(np.sum(var_mean + m_sq - log_mean - 1.0))


def exact_L_tensor(loading: Tensor, noise_var: np.ndarray, data_cov: np.ndarray) -> Tensor:
    """Differentiable ``L`` at the best-fit mean-field encoder."""
    dx, dz = loading.shape
    scaled = ng.mul(loading, (1.0 / noise_var)[:, None])
    prec = ng.add(ng.matmul(ng.transpose(loading), scaled), np.eye(dz))
    pm = ng.mul(ng.sub(ng.sum(ng.log(ng.diag(prec))), ng.logdet(prec)), 0.5)
    model_cov = ng.add(ng.matmul(loading, ng.transpose(loading)), np.diag(noise_var))
    trace = ng.sum(ng.mul(ng.inv(model_cov), data_cov))
    _, logdet_data = np.linalg.slogdet(data_cov)
    mle = ng.mul(ng.add(ng.sub(trace, dx + logdet_data), ng.logdet(model_cov)), 0.5)
    return ng.add(mle, pm)


def minimize_exact_L(spec: WorldSpec, restarts: int = 4, steps: int = 3000, lr: float = 0.01,
                     seed: int = 0) -> tuple[float, np.ndarray]:
    """Gradient descent on A (B and noise frozen) of the best-fit ``L``; returns ``(L, A)``."""
    if spec.kind != "LinearJTEx":
        raise WorldError("minimize_exact_L is defined for the LinearJTEx world")
    data_cov = data_covariance(spec)
    B = np.asarray(spec.B, dtype=np.float64)
    noise_var = spec.noise_var - B
    rng = np.random.default_rng(seed)
    best = (np.inf, None)
    starts = [np.array(spec.A, dtype=np.float64)] + [rng.standard_normal((2, 2)) for _ in range(restarts - 1)]
    for A0 in starts:
        A = Tensor(A0, requires_grad=True)
        opt = ng.Adam([A], lr=lr)
        for _ in range(steps):
            with ng.Tape() as tape:
                loss = exact_L_tensor(ng.cholesky(ng.add(ng.matmul(A, ng.transpose(A)), np.diag(B))),
                                      noise_var, data_cov)
            opt.step(tape.grad(loss, [A]))
        from .models import JointTrainingDecoder
        value = exact_L(JointTrainingDecoder(A.data, B, spec.noise_var), data_cov=data_cov).value()
        if value < best[0]:
            best = (value, A.data.copy())
    return best


# -- Fig. 1 grids ---------------------------------------------------------------------

@dataclass
class PMGrid:
    b11: np.ndarray
    b22: np.ndarray
    pm: np.ndarray  # pm[i, j] at B = diag(b11[i], b22[j])
    mi: np.ndarray

    def argmin(self) -> tuple[int, int]:
        i, j = np.unravel_index(np.argmin(self.pm), self.pm.shape)
        return int(i), int(j)

    def rows(self):
        for i, b1 in enumerate(self.b11):
            for j, b2 in enumerate(self.b22):
                yield b1, b2, self.pm[i, j], self.mi[i, j]

    def write_csv(self, path, header_comment: str | None = None) -> None:
        with open(Path(path), "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["B11", "B22", "pm", "mi"])
            for row in self.rows():
                w.writerow([repr(float(v)) for v in row])


def default_grid(spec: WorldSpec, n: int = 20) -> np.ndarray:
    return np.linspace(0.0, spec.noise_var, n, endpoint=False)


def pm_grid(spec: WorldSpec, b11, b22, x=None) -> PMGrid:
    """Best-fit posterior-matching objective and I(X;Z) over diagonal B.

    The data marginal ``A A^T + I s2`` is the same in every cell, so the MLE
    term vanishes and only posterior matching distinguishes the cells.
    """
    b11 = np.asarray(b11, dtype=np.float64)
    b22 = np.asarray(b22, dtype=np.float64)
    if np.any(np.concatenate([b11, b22]) >= spec.noise_var) or np.any(np.concatenate([b11, b22]) < 0):
        raise WorldError("grid values must lie in [0, noise_var)")
    x = np.zeros(spec.data_dim) if x is None else np.asarray(x, dtype=np.float64)
    pm = np.zeros((len(b11), len(b22)))
    mi = np.zeros_like(pm)
    for i, a in enumerate(b11):
        for j, b in enumerate(b22):
            cell = with_B(spec, (a, b))
            post = gauss.condition(gauss.linear_gaussian_joint(*linear_model(cell)), x)
            fit = gauss.best_fit_meanfield(post)
            pm[i, j] = gauss.kl(fit, post)
            mi[i, j] = mutual_info(cell)
    return PMGrid(b11, b22, pm, mi)
