"""Baseline VAE trainers (VAE, beta-VAE, annealed beta-VAE, lagging inference) and model selection."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import numgrad as ng
from .models import ArchSpec, Decoder, GaussianEncoder
from .numgrad import DivergenceError, Tensor
from .objectives import BetaSchedule, elbo_mc
from .records import RunRecord
from .worlds import Dataset

METHODS = ("vae", "beta-vae", "beta-anneal", "lagging", "libi")
DESK_EPOCHS = 3000
PAPER_EPOCHS = 30000

BETA_ANNEAL_GRID = (0.5, 1.0, 2.0, 5.0)
BETA_GRID = (0.5, 2.0, 5.0)
LAGGING_GRID = {"LinearJTEx": (40, 50, 60, 70), "CubicJTEx": (30, 40, 50, 60),
                "Gaussian": (5, 10, 15, 20), "Mobius": (60, 70, 80, 90)}


@dataclass
class TrainConfig:
    method: str = "vae"
    beta: float = 1.0
    anneal_fraction: float = 0.2
    lagging_segments: int | None = None
    joint_fraction: float = 0.5
    epochs: int = DESK_EPOCHS
    lr: float = 0.01
    restarts_on_divergence: int = 3

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "libi":
            raise ValueError("use libi.LibiConfig for LiBI runs")
        if self.method == "lagging":
            if not self.lagging_segments or self.lagging_segments < 1:
                raise ValueError("lagging needs lagging_segments >= 1")
            if not 0 < self.joint_fraction <= 1:
                raise ValueError("joint_fraction must lie in (0, 1]")
        elif self.lagging_segments is not None:
            raise ValueError("lagging_segments only applies to the lagging method")
        if self.method == "vae" and self.beta != 1.0:
            raise ValueError("plain VAE has beta = 1")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")

    def schedule(self) -> BetaSchedule:
        if self.method == "beta-anneal":
            return BetaSchedule.anneal(self.beta, self.epochs, self.anneal_fraction)
        return BetaSchedule(self.beta)

    def to_dict(self) -> dict:
        return asdict(self)


def _check(total) -> None:
    if not np.isfinite(total.data):
        raise DivergenceError("negative ELBO is not finite")


def encoder_phase(decoder: Decoder, encoder: GaussianEncoder, X: np.ndarray, epochs: int, lr: float,
                  rng: np.random.Generator, log: dict | None = None, key: str = "encoder",
                  beta: float = 1.0, opt: ng.Adam | None = None, lr_final: float | None = None) -> ng.Adam:
    """Minimize the negative ELBO over the inference network only; decoder untouched.

    With ``lr_final`` the step size decays geometrically from ``lr`` to ``lr_final``.
    """
    params = encoder.params()
    opt = opt or ng.Adam(params, lr=lr)
    Xt = Tensor(X)
    for e in range(epochs):
        if lr_final is not None:
            opt.state.lr = lr * (lr_final / lr) ** (e / max(epochs - 1, 1))
        with ng.Tape() as tape:
            out = elbo_mc(decoder, encoder, Xt, rng, beta)
        opt.step(tape.grad(out.total, params))
        if log is not None:
            log.setdefault(key, []).append(out.value())
    return opt


def _joint_epochs(decoder, encoder, X, epochs, rng, sched, start, opt, log):
    params = decoder.params() + encoder.params()
    Xt = Tensor(X)
    for e in range(start, start + epochs):
        with ng.Tape() as tape:
            out = elbo_mc(decoder, encoder, Xt, rng, sched(e))
        opt.step(tape.grad(out.total, params))
        log.setdefault("loss", []).append(out.value())
        log.setdefault("kl", []).append(out.kl.item())


def _train_once(cfg: TrainConfig, dataset: Dataset, rng: np.random.Generator, arch: ArchSpec):
    decoder = arch.make_decoder(rng)
    encoder = arch.make_encoder(rng)
    sched = cfg.schedule()
    log: dict = {}
    joint_opt = ng.Adam(decoder.params() + encoder.params(), lr=cfg.lr)
    if cfg.method == "lagging":
        seg = cfg.epochs // cfg.lagging_segments
        n_joint = int(round(cfg.joint_fraction * seg))
        enc_opt = None
        epoch = 0
        for _ in range(cfg.lagging_segments):
            if seg - n_joint:
                enc_opt = encoder_phase(decoder, encoder, dataset.train, seg - n_joint, cfg.lr, rng, log,
                                        key="loss", beta=sched(epoch), opt=enc_opt)
            _joint_epochs(decoder, encoder, dataset.train, n_joint, rng, sched, epoch + seg - n_joint, joint_opt, log)
            epoch += seg
    else:
        _joint_epochs(decoder, encoder, dataset.train, cfg.epochs, rng, sched, 0, joint_opt, log)
    return decoder, encoder, log


def validation_objective(decoder: Decoder, encoder: GaussianEncoder, X: np.ndarray, seed: int,
                         beta: float = 1.0, samples: int = 10) -> float:
    """Negative ELBO on held-out data, averaged over a fixed set of reparameterization draws."""
    rng = np.random.default_rng([seed, 0xE1B0])
    vals = [elbo_mc(decoder, encoder, Tensor(X), rng, beta).value() for _ in range(samples)]
    return float(np.mean(vals))


def train(cfg, dataset: Dataset, rng: np.random.Generator, seed: int = 0) -> tuple[Decoder, GaussianEncoder, RunRecord]:
    """Train one model pair with the configured method; retries on divergence."""
    from .libi import LibiConfig, train_libi
    if isinstance(cfg, LibiConfig):
        return train_libi(dataset, cfg, rng, seed=seed)
    arch = dataset.spec.arch()
    attempts = 0
    while True:
        attempts += 1
        try:
            decoder, encoder, log = _train_once(cfg, dataset, rng, arch)
            val = validation_objective(decoder, encoder, dataset.val, seed, cfg.beta)
            if not np.isfinite(val):
                raise DivergenceError("validation objective is not finite")
            break
        except (DivergenceError, np.linalg.LinAlgError):
            if attempts > cfg.restarts_on_divergence:
                raise DivergenceError(f"{cfg.method} diverged {attempts} times") from None
    record = RunRecord(method=cfg.method, dataset=dataset.name, seed=seed, config=cfg.to_dict(),
                       val_objective=val, history=log, decoder=decoder.to_dict(), encoder=encoder.to_dict(),
                       attempts=attempts)
    return decoder, encoder, record


def select_model(candidates: list[RunRecord]) -> RunRecord:
    """Lowest validation objective; ties go to the lower seed."""
    if not candidates:
        raise ValueError("no candidates to select from")
    methods = {c.method for c in candidates}
    if len(methods) > 1:
        raise ValueError(f"candidates mix methods {sorted(methods)}")
    ok = [c for c in candidates if c.status == "ok"] or list(candidates)
    return min(ok, key=lambda c: (c.val_objective, c.seed))


def fit_posterior_network(decoder: Decoder, dataset: Dataset, rng: np.random.Generator,
                          epochs: int = DESK_EPOCHS, lr: float = 0.01) -> GaussianEncoder:
    """Amortized posterior for a frozen likelihood (the reference posterior of nonlinear worlds)."""
    encoder = dataset.spec.arch().make_encoder(rng)
    encoder_phase(decoder, encoder, dataset.train, epochs, lr, rng)
    return encoder
