"""Likelihood Before Inference.

Step 1 fits the generative model jointly with a deterministic encoder
``z = h(x)`` under smooth penalties that push the codes {h(x_n)} towards
N(0, I).  Step 2 freezes the generative model and fits the amortized
posterior by minimizing the negative ELBO over the inference network only.
Step 3 copies the inference network's mean into ``h`` and repeats.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import numgrad as ng
from .models import LOGVAR_CLAMP, Decoder, GaussianEncoder, PointEncoder
from .numgrad import DivergenceError, Tensor
from .records import RunRecord
from .worlds import Dataset

HZ_GRID = (0.001, 1.0, 10.0, 20.0)
SIGMA_GRID = (0.2, 0.5)
MU_GRID = (0.2, 0.5)
R_GRID = (1, 6)


def hz_smoothing(n: int, d: int) -> float:
    """Henze-Zirkler bandwidth ``((n (2d + 1)) / 4)^(1 / (d + 4)) / sqrt(2)``."""
    return (n * (2 * d + 1) / 4.0) ** (1.0 / (d + 4)) / np.sqrt(2.0)


def hz_statistic(Z, standardize: bool = False) -> Tensor:
    """Henze-Zirkler statistic of the rows of ``Z``; small for Gaussian-looking samples."""
    Z = ng.as_tensor(Z)
    if Z.ndim != 2 or Z.shape[0] < 2 or Z.shape[1] < 1:
        raise ValueError(f"hz_statistic needs an n x d sample with n >= 2, got {Z.shape}")
    n, d = Z.shape
    g2 = hz_smoothing(n, d) ** 2
    # canonical row order makes the floating-point sums permutation-invariant
    Z = Z[np.lexsort(Z.data.T[::-1])]
    if standardize:
        Z = ng.sub(Z, ng.mean(Z, axis=0))
        S = ng.mul(ng.matmul(ng.transpose(Z), Z), 1.0 / n)
        # any W with W W^T = S^-1 whitens; the statistic only sees norms and distances
        Z = ng.matmul(Z, ng.cholesky(ng.inv(S)))
    sq = ng.sum(ng.square(Z), axis=1)
    pair = ng.mul(ng.pairwise_rbf_sum(Z, g2 / 2.0), 1.0 / n ** 2)
    single = ng.mul(ng.sum(ng.exp(ng.mul(sq, -g2 / (2.0 * (1.0 + g2))))),
                    2.0 * (1.0 + g2) ** (-d / 2.0) / n)
    return ng.mul(ng.add(ng.sub(pair, single), (1.0 + 2.0 * g2) ** (-d / 2.0)), float(n))


@dataclass
class Constraint:
    """Extra penalty ``exp(fn(decoder, X) / scale)``; keep ``fn`` below 0 to satisfy it."""

    name: str
    fn: Callable[[Decoder, Tensor], Tensor]
    scale: float = 1.0


def mi_tensor(decoder: Decoder) -> Tensor:
    """Differentiable I(X;Z) of a linear-Gaussian decoder."""
    noise = decoder.noise_var
    if decoder.kind == "LinearJTEx":
        A = decoder.A
        cov = ng.add(ng.matmul(A, ng.transpose(A)), np.diag(np.full(len(noise), decoder.s2)))
    elif decoder.kind == "Gaussian":
        cov = ng.add(ng.matmul(ng.transpose(decoder.A), decoder.A), np.diag(noise))
    else:
        raise ValueError(f"no closed-form mutual information for {decoder.kind}")
    return ng.mul(ng.sub(ng.logdet(cov), float(np.sum(np.log(noise)))), 0.5)


def mi_floor(delta: float, scale: float = 1.0) -> Constraint:
    """Require I(X;Z) >= delta for linear worlds."""
    return Constraint(f"mi>={delta}", lambda dec, X: ng.sub(delta, mi_tensor(dec)), scale)


@dataclass
class LibiConfig:
    eps_hz: float = 1.0
    eps_sigma: float = 0.2
    eps_mu: float = 0.2
    repetitions: int = 1
    epochs: int = 3000
    lr: float = 0.01
    step1_fraction: float = 0.8
    step2_lr_final: float | None = 1e-5
    restarts_on_divergence: int = 3
    mi_floor: float | None = None
    constraints: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if min(self.eps_hz, self.eps_sigma, self.eps_mu) <= 0:
            raise ValueError("penalty scales must be strictly positive")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not 0 < self.step1_fraction < 1:
            raise ValueError("step1_fraction must lie in (0, 1)")

    def all_constraints(self) -> list[Constraint]:
        extra = list(self.constraints)
        if self.mi_floor is not None:
            extra.append(mi_floor(self.mi_floor))
        return extra

    def budget(self) -> tuple[int, int]:
        """Epochs per repetition for Step 1 and Step 2."""
        per_rep = self.epochs // self.repetitions
        e1 = int(round(self.step1_fraction * per_rep))
        return e1, per_rep - e1

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("constraints")
        d["constraints"] = [c.name for c in self.constraints]
        return d


def empirical_moments(Z: Tensor) -> tuple[Tensor, Tensor]:
    n = Z.shape[0]
    mu = ng.mean(Z, axis=0)
    Zc = ng.sub(Z, mu)
    return mu, ng.mul(ng.matmul(ng.transpose(Zc), Zc), 1.0 / n)


def step1_terms(decoder: Decoder, h: PointEncoder, X, config: LibiConfig) -> dict[str, Tensor]:
    X = ng.as_tensor(X)
    Z = h(X)
    rec = ng.neg(ng.mean(decoder.log_likelihood(X, Z)))
    mu, cov = empirical_moments(Z)
    d = Z.shape[1]
    terms = {
        "reconstruction": rec,
        "hz": ng.mul(ng.exp(hz_statistic(Z)), config.eps_hz),
        "cov": ng.exp(ng.mul(ng.sqnorm(ng.sub(cov, np.eye(d))), 1.0 / config.eps_sigma)),
        "mean": ng.exp(ng.mul(ng.sqnorm(mu), 1.0 / config.eps_mu)),
    }
    for c in config.all_constraints():
        terms[c.name] = ng.exp(ng.mul(c.fn(decoder, X), 1.0 / c.scale))
    return terms


def step1_loss(decoder: Decoder, h: PointEncoder, X, config: LibiConfig) -> Tensor:
    """Penalized reconstruction objective of the likelihood step (differentiable)."""
    terms = step1_terms(decoder, h, X, config)
    total = terms["reconstruction"]
    for k, v in terms.items():
        if k != "reconstruction":
            total = ng.add(total, v)
    if not np.isfinite(total.data):
        raise DivergenceError("step-1 loss is not finite")
    return total


def run_step1(decoder: Decoder, h: PointEncoder, X: np.ndarray, config: LibiConfig, epochs: int,
              log: dict | None = None) -> None:
    params = decoder.params() + h.params()
    opt = ng.Adam(params, lr=config.lr)
    Xt = Tensor(X)
    for _ in range(epochs):
        with ng.Tape() as tape:
            terms = step1_terms(decoder, h, Xt, config)
            total = terms["reconstruction"]
            for k, v in terms.items():
                if k != "reconstruction":
                    total = ng.add(total, v)
        if not np.isfinite(total.data):
            raise DivergenceError("step-1 loss is not finite")
        opt.step(tape.grad(total, params))
        if log is not None:
            log.setdefault("step1", []).append(total.item())
            for k, v in terms.items():
                log.setdefault(f"step1_{k}", []).append(v.item())


def curvature_logvar(decoder: Decoder, Z: np.ndarray) -> np.ndarray:
    """Log of the mean-field variance ``1 / (1 + E[diag(J^T Psi^-1 J)])`` with J the
    decoder Jacobian at the codes ``Z``; the Step-2 starting point for the log-variance head."""
    Zt = Tensor(np.asarray(Z, dtype=np.float64), requires_grad=True)
    curv = np.zeros(Zt.shape[1])
    for k, psi in enumerate(decoder.noise_var):
        with ng.Tape() as tape:
            out = ng.sum(decoder.mean(Zt)[:, k])
        (J,) = tape.grad(out, [Zt])
        curv += np.mean(J * J, axis=0) / psi
    return np.clip(-np.log1p(curv), -LOGVAR_CLAMP, LOGVAR_CLAMP)


def step2_handoff(decoder: Decoder, h: PointEncoder, encoder: GaussianEncoder, X: np.ndarray,
                  ridge: float = 1e-4) -> None:
    """Start q(z|x) at the Step-1 codes: trunk copied from ``h``, mean head refit to ``h(X)``
    by ridge least squares, log-variance head at ``curvature_logvar``.

    The ridge (relative to the mean feature variance) drops weight along directions the
    data barely spans, which the likelihood step leaves unconstrained.
    """
    Z = h(Tensor(X)).data
    encoder.load_point(h, curvature_logvar(decoder, Z))
    layers = encoder.net.layers
    F = encoder.net.features(Tensor(X)).data
    fm, zm = F.mean(axis=0), Z.mean(axis=0)
    Fc = F - fm
    G = Fc.T @ Fc
    lam = ridge * np.trace(G) / G.shape[0]
    Wm = np.linalg.solve(G + lam * np.eye(G.shape[0]), Fc.T @ (Z - zm))
    d = encoder.latent_dim
    layers[-1].weight.data[:, :d] = Wm
    layers[-1].bias.data[:d] = zm - fm @ Wm


def run_step2(decoder: Decoder, encoder: GaussianEncoder, X: np.ndarray, epochs: int, lr: float,
              rng: np.random.Generator, log: dict | None = None, lr_final: float | None = None) -> None:
    from .baselines import encoder_phase
    encoder_phase(decoder, encoder, X, epochs, lr, rng, log, key="step2", lr_final=lr_final)


def train_libi(dataset: Dataset, config: LibiConfig, rng: np.random.Generator,
               decoder: Decoder | None = None, seed: int = 0) -> tuple[Decoder, GaussianEncoder, RunRecord]:
    """Run ``config.repetitions`` rounds of Steps 1-3; keep the round with the lowest
    validation Step-1 loss."""
    arch = dataset.spec.arch()
    attempts = 0
    while True:
        attempts += 1
        try:
            dec = decoder.copy() if decoder is not None and attempts == 1 else arch.make_decoder(rng)
            h = arch.make_point_encoder(rng)
            h.whiten(dataset.train)
            enc = arch.make_encoder(rng)
            best, history = _libi_rounds(dataset, config, rng, dec, h, enc)
            break
        except (DivergenceError, np.linalg.LinAlgError):
            if attempts > config.restarts_on_divergence:
                raise DivergenceError(f"LiBI diverged {attempts} times") from None
    val, dec, enc, h = best
    record = RunRecord(method="libi", dataset=dataset.name, seed=seed, config=config.to_dict(),
                       val_objective=val, history=history, decoder=dec.to_dict(), encoder=enc.to_dict(),
                       point_encoder=h.to_dict(), attempts=attempts)
    return dec, enc, record


def _libi_rounds(dataset, config, rng, dec, h, enc):
    e1, e2 = config.budget()
    history: dict = {"val_step1": []}
    best = None
    for t in range(config.repetitions):
        run_step1(dec, h, dataset.train, config, e1, history)
        step2_handoff(dec, h, enc, dataset.train)
        run_step2(dec, enc, dataset.train, e2, config.lr, rng, history, config.step2_lr_final)
        val = step1_loss(dec, h, Tensor(dataset.val), config).item()
        history["val_step1"].append(val)
        if best is None or val < best[0]:
            best = (val, dec.copy(), enc.copy(), _copy_point(h))
        if t < config.repetitions - 1:
            h.load_mean_head(enc)
    return best, history


def _copy_point(h: PointEncoder) -> PointEncoder:
    from .models import MLP
    return PointEncoder(MLP.from_dict(h.net.to_dict()))
