"""Synthetic data-generating processes and their ground-truth analytics."""
from __future__ import annotations

import functools
import json
from fractions import Fraction
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import gauss
from . import numgrad as ng
from .models import (ENCODER_HIDDEN, KINDS, ArchSpec, Decoder, JointTrainingDecoder, LoadingDecoder,
                     MLP, NetworkDecoder)
from .numgrad import Tensor

LINEAR_A = ((0.75, 0.25), (1.5, -1.0))
GAUSSIAN_A = ((-0.7074, 0.0995, 0.0286, 0.1240), (0.7074, 0.9948, -0.9995, 0.9920))
MOBIUS_HIDDEN = ((50, "relu"),)
MOBIUS_TOL = 0.05
POLE_TOL = 1e-12


class WorldError(ValueError):
    pass


@dataclass(frozen=True)
class WorldSpec:
    kind: str
    A: tuple = LINEAR_A
    B: tuple = (0.006, 0.006)
    noise_var: float = 0.01
    mobius: tuple = ((1.0, 0.0), (1.0, 4.0), (1.0, 0.0), (7.0, 4.0))
    latent_dim: int = 2
    data_dim: int = 2
    seed: int = 0

    @classmethod
    def default(cls, kind: str, seed: int = 0) -> "WorldSpec":
        if kind in ("LinearJTEx", "CubicJTEx"):
            return cls(kind=kind, seed=seed)
        if kind == "Gaussian":
            return cls(kind=kind, A=GAUSSIAN_A, B=(), noise_var=1e-6, latent_dim=2, data_dim=4, seed=seed)
        if kind == "Mobius":
            return cls(kind=kind, A=(), B=(), noise_var=1e-5, seed=seed)
        raise WorldError(f"unknown world kind {kind!r}; expected one of {KINDS}")

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise WorldError(f"unknown world kind {self.kind!r}")
        if not self.noise_var > 0:
            raise WorldError("noise variance must be positive")
        if self.kind in ("LinearJTEx", "CubicJTEx"):
            A, B = np.array(self.A, dtype=float), np.array(self.B, dtype=float)
            if A.shape != (self.data_dim, self.latent_dim) or B.shape != (self.data_dim,):
                raise WorldError(f"A must be {self.data_dim}x{self.latent_dim} and B length {self.data_dim}")
            if np.any(B < 0) or np.any(B > self.noise_var):
                raise WorldError("B must have diagonal entries in [0, noise_var]")
            if np.any(B >= self.noise_var):
                raise WorldError("B == noise_var leaves a singular observation noise")
        elif self.kind == "Gaussian":
            if np.array(self.A, dtype=float).shape != (self.latent_dim, self.data_dim):
                raise WorldError(f"A must be {self.latent_dim}x{self.data_dim}")
        elif self.kind == "Mobius" and (self.latent_dim, self.data_dim) != (2, 2):
            raise WorldError("the Mobius world is 2-d in and out")

    def arch(self) -> ArchSpec:
        frozen = {"noise_var": self.noise_var}
        if self.kind in ("LinearJTEx", "CubicJTEx"):
            frozen["B"] = tuple(self.B)
        return ArchSpec(self.kind, self.latent_dim, self.data_dim,
                        encoder_hidden=ENCODER_HIDDEN[self.kind],
                        decoder_hidden=MOBIUS_HIDDEN if self.kind == "Mobius" else (),
                        frozen=frozen)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, d: dict) -> "WorldSpec":
        def tup(v):
            return tuple(tup(x) for x in v) if isinstance(v, list) else v
        return cls(**{k: tup(v) for k, v in d.items()})


@dataclass(frozen=True)
class ScalarWorld:
    """``x = theta z + eps``, eps ~ N(0, s2 - theta^2): the data marginal is N(0, s2) for every theta."""

    theta: float
    noise_var: float = 0.01

    def __post_init__(self):
        if self.theta < 0 or self.theta ** 2 > self.noise_var * (1 + 1e-12):
            raise WorldError(f"theta must lie in [0, sqrt(noise_var)], got {self.theta}")

    def joint(self) -> gauss.JointGaussian:
        return gauss.JointGaussian([0.0], [0.0], [[self.noise_var]], [[self.theta]], [[1.0]])

    @property
    def residual_var(self) -> float:
        return max(self.noise_var - self.theta ** 2, 0.0)

    def marginal_var(self) -> float:
        """``theta^2 + (s2 - theta^2)`` summed in exact rational arithmetic."""
        t2 = Fraction(self.theta) ** 2
        return float(t2 + (Fraction(self.noise_var) - t2))

    def posterior(self, x: float) -> gauss.GaussianDist:
        s2 = self.noise_var
        return gauss.GaussianDist([self.theta / s2 * x], [[self.residual_var / s2]])

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        z = rng.standard_normal(n)
        return self.theta * z + rng.standard_normal(n) * np.sqrt(self.residual_var), z


@dataclass
class Dataset:
    spec: WorldSpec
    seed: int
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    z_train: np.ndarray
    z_val: np.ndarray
    z_test: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return f"{self.spec.kind}-{self.seed}"

    def to_dict(self) -> dict:
        d = {"spec": self.spec.to_dict(), "seed": self.seed}
        for k in ("train", "val", "test", "z_train", "z_val", "z_test"):
            d[k] = getattr(self, k).tolist()
        d["extra"] = self.extra
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Dataset":
        arrays = {k: np.array(d[k], dtype=np.float64) for k in ("train", "val", "test", "z_train", "z_val", "z_test")}
        return cls(spec=WorldSpec.from_dict(d["spec"]), seed=d["seed"], extra=d.get("extra", {}), **arrays)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Dataset":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def decoder(self) -> Decoder:
        """The ground-truth likelihood as a (frozen) decoder."""
        return ground_truth_decoder(self.spec, self.extra.get("mobius_net"))


# -- Mobius ---------------------------------------------------------------------

def mobius_map(z, a, b, c, d) -> np.ndarray:
    """``(a z + b) / (c z + d)`` in complex arithmetic, for rows ``z = (re, im)``."""
    z = np.asarray(z, dtype=np.float64)
    zc = z[..., 0] + 1j * z[..., 1]
    a, b, c, d = (complex(*v) for v in (a, b, c, d))
    den = c * zc + d
    if np.any(np.abs(den) < POLE_TOL):
        raise WorldError("Mobius map evaluated at its pole")
    w = (a * zc + b) / den
    return np.stack([w.real, w.imag], axis=-1)


@functools.lru_cache(maxsize=8)
def _mobius_network_cached(mobius: tuple, seed: int, tol: float) -> str:
    rng = np.random.default_rng([seed, 0x4D0B])
    net = MLP(2, list(MOBIUS_HIDDEN), 2, rng)
    # start near the target's value at the origin
    net.layers[-1].bias.data = mobius_map(np.zeros(2), *mobius)
    opt = ng.Adam(net.params(), lr=0.01)
    probe = rng.standard_normal((1000, 2))
    probe_target = mobius_map(probe, *mobius)
    err = np.inf
    for step in range(1, 60001):
        z = rng.standard_normal((1000, 2))
        target = mobius_map(z, *mobius)
        with ng.Tape() as tape:
            loss = ng.mean(ng.square(ng.sub(net(Tensor(z)), target)))
        opt.step(tape.grad(loss, net.params()))
        if step % 20000 == 0:
            opt.state.lr *= 0.3
        if step % 500 == 0:
            err = float(np.max(np.abs(net(Tensor(probe)).data - probe_target)))
            if err <= tol:
                break
    if err > tol:
        raise WorldError(f"Mobius approximator reached max error {err:.3g} > {tol}")
    return json.dumps({"net": net.to_dict(), "seed": seed, "tolerance": tol, "max_error": err, "steps": step})


def mobius_network(spec: WorldSpec, tol: float = MOBIUS_TOL, seed: int = 0) -> dict:
    """Train (once per map) the network that stands in for the Mobius map.

    The fit seed is fixed so that every replicate dataset shares one
    ground-truth function.
    """
    return json.loads(_mobius_network_cached(tuple(tuple(v) for v in spec.mobius), seed, tol))


# -- ground truth -----------------------------------------------------------------

def ground_truth_decoder(spec: WorldSpec, mobius_net: dict | None = None) -> Decoder:
    spec.validate()
    if spec.kind in ("LinearJTEx", "CubicJTEx"):
        dec = JointTrainingDecoder(spec.A, spec.B, spec.noise_var, cubic=spec.kind == "CubicJTEx")
    elif spec.kind == "Gaussian":
        dec = LoadingDecoder(spec.A, spec.noise_var)
    else:
        info = mobius_net or mobius_network(spec)
        dec = NetworkDecoder(MLP.from_dict(info["net"]), spec.noise_var)
    for p in dec.params():
        p.requires_grad = False
    return dec


def _split_seed(seed: int, rng: np.random.Generator | None) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(seed)


def sample_dataset(spec: WorldSpec, rng: np.random.Generator | None = None,
                   sizes: tuple[int, int, int] = (500, 500, 500)) -> Dataset:
    spec.validate()
    rng = _split_seed(spec.seed, rng)
    extra = {}
    mobius_net = None
    if spec.kind == "Mobius":
        mobius_net = mobius_network(spec)
        extra["mobius_net"] = mobius_net
    dec = ground_truth_decoder(spec, mobius_net)
    n = sum(sizes)
    z = rng.standard_normal((n, spec.latent_dim))
    eps = rng.standard_normal((n, spec.data_dim)) * np.sqrt(dec.noise_var)
    x = dec.mean(Tensor(z)).data + eps
    a, b = sizes[0], sizes[0] + sizes[1]
    return Dataset(spec, spec.seed, x[:a], x[a:b], x[b:], z[:a], z[a:b], z[b:], extra)


def linear_model(world) -> tuple[np.ndarray, np.ndarray]:
    """``(loading, noise_cov)`` of a linear-Gaussian world."""
    if isinstance(world, ScalarWorld):
        return np.array([[world.theta]]), np.array([[world.residual_var]])
    if isinstance(world, WorldSpec):
        if world.kind not in ("LinearJTEx", "Gaussian"):
            raise WorldError(f"{world.kind} is not linear-Gaussian")
        world = ground_truth_decoder(world)
    lg = world.linear_gaussian()
    if lg is None:
        raise WorldError(f"{world.kind} is not linear-Gaussian")
    return lg


def true_posterior(world, x, exact: bool = True, rng: np.random.Generator | None = None,
                   mobius_net: dict | None = None) -> gauss.GaussianDist:
    """Posterior p(z|x) under the ground-truth model.

    Linear worlds are conditioned exactly.  For the nonlinear worlds, pass
    ``exact=False`` to get a mean-field Gaussian fitted against the
    ground-truth likelihood; its ``approximate`` attribute is True.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if isinstance(world, ScalarWorld):
        return gauss.condition(world.joint(), x)
    if isinstance(world, WorldSpec) and world.kind in ("LinearJTEx", "Gaussian"):
        return gauss.condition(gauss.linear_gaussian_joint(*linear_model(world)), x)
    if exact:
        raise WorldError(f"no exact posterior for the nonlinear world {getattr(world, 'kind', world)}")
    dec = ground_truth_decoder(world, mobius_net)
    return fit_meanfield_posterior(dec, x, rng or np.random.default_rng(0))


class ApproximatePosterior(gauss.GaussianDist):
    """Mean-field posterior fitted by stochastic optimization; flags non-exactness."""

    approximate = True


def fit_meanfield_posterior(decoder: Decoder, x: np.ndarray, rng: np.random.Generator,
                            n_samples: int = 512, steps: int = 2000, lr: float = 0.02) -> ApproximatePosterior:
    """Minimize the negative ELBO of a single x over a diagonal Gaussian q(z)."""
    d = decoder.latent_dim
    eps = rng.standard_normal((n_samples, d))
    xt = Tensor(np.broadcast_to(x, (n_samples, len(x))))
    m = Tensor(np.zeros(d), requires_grad=True)
    lv = Tensor(np.zeros(d), requires_grad=True)
    opt = ng.Adam([m, lv], lr=lr)
    for _ in range(steps):
        with ng.Tape() as tape:
            z = ng.add(m, ng.mul(ng.exp(ng.mul(lv, 0.5)), eps))
            rec = ng.mean(decoder.log_likelihood(xt, z))
            kl = 0.5 * ng.sum(ng.sub(ng.add(ng.exp(lv), ng.square(m)), ng.add(lv, 1.0)))
            loss = ng.sub(kl, rec)
        opt.step(tape.grad(loss, [m, lv]))
    return ApproximatePosterior.diag(m.data.copy(), np.exp(lv.data))


def mutual_info(world) -> float:
    """I(X; Z) in nats for linear-Gaussian worlds; ``inf`` at the noiseless limit."""
    if isinstance(world, ScalarWorld):
        rest = world.residual_var
        if rest <= 0:
            return float("inf")
        return 0.5 * float(np.log(world.noise_var / rest))
    loading, noise = linear_model(world)
    if np.any(np.linalg.eigvalsh(noise) <= 0):
        return float("inf")
    sx = loading @ loading.T + noise
    return 0.5 * (np.linalg.slogdet(sx)[1] - np.linalg.slogdet(noise)[1])


def with_B(spec: WorldSpec, B) -> WorldSpec:
    return replace(spec, B=tuple(float(b) for b in B))
