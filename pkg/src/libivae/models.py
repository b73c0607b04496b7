"""Generative (decoder) and inference (encoder) networks for the four worlds.

Every decoder matches the functional form of its world's ground-truth
process; noise variances (and ``B`` for the joint-training examples) are
frozen buffers.  Encoders are MLPs whose last layer emits ``[mean, logvar]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numgrad as ng
from .numgrad import Tensor

LOGVAR_CLAMP = 15.0
INIT_SCALE = 0.05
LOG_2PI = np.log(2.0 * np.pi)

KINDS = ("LinearJTEx", "CubicJTEx", "Gaussian", "Mobius")


def _param(a) -> Tensor:
    return Tensor(np.array(a, dtype=np.float64), requires_grad=True)


class Linear:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None):
        w = rng.normal(0.0, INIT_SCALE, size=(n_in, n_out)) if rng is not None else np.zeros((n_in, n_out))
        self.weight = _param(w)
        self.bias = _param(np.zeros(n_out))

    def __call__(self, x: Tensor) -> Tensor:
        return ng.add(ng.matmul(x, self.weight), self.bias)

    def params(self) -> list[Tensor]:
        return [self.weight, self.bias]


def sigmoid_cbrt(h: Tensor) -> Tensor:
    """First half of the units through a sigmoid, second half through a signed cube root."""
    k = h.shape[1] // 2
    return ng.concat([ng.sigmoid(h[:, :k]), ng.cbrt(h[:, k:])], axis=1)


ACTIVATIONS = {"relu": ng.relu, "sigmoid": ng.sigmoid, "sigmoid_cbrt": sigmoid_cbrt}


class MLP:
    """Stack of affine layers; ``hidden`` is a list of ``(width, activation)``."""

    def __init__(self, n_in: int, hidden: list[tuple[int, str]], n_out: int,
                 rng: np.random.Generator | None = None):
        self.hidden = [tuple(h) for h in hidden]
        sizes = [n_in] + [w for w, _ in self.hidden] + [n_out]
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]

    @property
    def n_in(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def n_out(self) -> int:
        return self.layers[-1].weight.shape[1]

    def features(self, x) -> Tensor:
        """Activations feeding the output layer."""
        h = ng.as_tensor(x)
        for layer, (_, act) in zip(self.layers[:-1], self.hidden):
            h = ACTIVATIONS[act](layer(h))
        return h

    def __call__(self, x) -> Tensor:
        return self.layers[-1](self.features(x))

    def params(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.params()]

    def to_dict(self) -> dict:
        return {"n_in": self.n_in, "n_out": self.n_out, "hidden": [list(h) for h in self.hidden],
                "weights": [p.data.tolist() for p in self.params()]}

    @classmethod
    def from_dict(cls, d: dict) -> "MLP":
        net = cls(d["n_in"], [tuple(h) for h in d["hidden"]], d["n_out"])
        for p, w in zip(net.params(), d["weights"]):
            p.data = np.array(w, dtype=np.float64).reshape(p.shape)
        return net


def gaussian_loglik(x: Tensor, mean: Tensor, var: np.ndarray) -> Tensor:
    """Per-row log N(x; mean, diag(var)); ``var`` is a constant vector."""
    r = ng.sub(x, mean)
    quad = ng.sum(ng.mul(ng.square(r), 1.0 / var), axis=1)
    const = -0.5 * (np.sum(np.log(var)) + len(var) * LOG_2PI)
    return ng.add(ng.mul(quad, -0.5), const)


# -- decoders -----------------------------------------------------------------

class Decoder:
    kind: str
    latent_dim: int
    data_dim: int
    noise_var: np.ndarray

    def mean(self, z) -> Tensor:
        raise NotImplementedError

    def params(self) -> list[Tensor]:
        raise NotImplementedError

    def log_likelihood(self, x, z) -> Tensor:
        return gaussian_loglik(ng.as_tensor(x), self.mean(z), self.noise_var)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = rng.standard_normal((n, self.latent_dim))
        eps = rng.standard_normal((n, self.data_dim)) * np.sqrt(self.noise_var)
        return self.mean(Tensor(z)).data + eps

    def linear_gaussian(self):
        """``(loading, noise_cov)`` for linear decoders, else ``None``."""
        return None

    def state(self) -> dict:
        raise NotImplementedError

    def copy(self) -> "Decoder":
        return decoder_from_dict(self.to_dict())

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.state()}


class JointTrainingDecoder(Decoder):
    """``x = Cholesky(A A^T + B) z [^3] + eps``, eps ~ N(0, I s2 - B)."""

    def __init__(self, A, B, noise_var: float, cubic: bool = False):
        self.A = _param(A)
        self.B = np.asarray(B, dtype=np.float64).reshape(-1)
        self.s2 = float(noise_var)
        self.cubic = cubic
        self.kind = "CubicJTEx" if cubic else "LinearJTEx"
        self.latent_dim = self.A.shape[1]
        self.data_dim = self.A.shape[0]
        self.noise_var = self.s2 - self.B

    def loading(self) -> Tensor:
        return ng.cholesky(ng.add(ng.matmul(self.A, ng.transpose(self.A)), np.diag(self.B)))

    def mean(self, z) -> Tensor:
        h = ng.matmul(ng.as_tensor(z), ng.transpose(self.loading()))
        return ng.mul(ng.mul(h, h), h) if self.cubic else h

    def params(self) -> list[Tensor]:
        return [self.A]

    def linear_gaussian(self):
        if self.cubic:
            return None
        return self.loading().data, np.diag(self.noise_var)

    def state(self) -> dict:
        return {"A": self.A.data.tolist(), "B": self.B.tolist(), "noise_var": self.s2}


class LoadingDecoder(Decoder):
    """``x = z^T A + eps`` with isotropic noise."""

    kind = "Gaussian"

    def __init__(self, A, noise_var: float):
        self.A = _param(A)
        self.s2 = float(noise_var)
        self.latent_dim, self.data_dim = self.A.shape
        self.noise_var = np.full(self.data_dim, self.s2)

    def mean(self, z) -> Tensor:
        return ng.matmul(ng.as_tensor(z), self.A)

    def params(self) -> list[Tensor]:
        return [self.A]

    def linear_gaussian(self):
        return self.A.data.T.copy(), np.diag(self.noise_var)

    def state(self) -> dict:
        return {"A": self.A.data.tolist(), "noise_var": self.s2}


class NetworkDecoder(Decoder):
    kind = "Mobius"

    def __init__(self, net: MLP, noise_var: float):
        self.net = net
        self.s2 = float(noise_var)
        self.latent_dim = net.n_in
        self.data_dim = net.n_out
        self.noise_var = np.full(self.data_dim, self.s2)

    def mean(self, z) -> Tensor:
        return self.net(z)

    def params(self) -> list[Tensor]:
        return self.net.params()

    def state(self) -> dict:
        return {"net": self.net.to_dict(), "noise_var": self.s2}


def decoder_from_dict(d: dict) -> Decoder:
    kind = d["kind"]
    if kind in ("LinearJTEx", "CubicJTEx"):
        return JointTrainingDecoder(d["A"], d["B"], d["noise_var"], cubic=kind == "CubicJTEx")
    if kind == "Gaussian":
        return LoadingDecoder(d["A"], d["noise_var"])
    if kind == "Mobius":
        return NetworkDecoder(MLP.from_dict(d["net"]), d["noise_var"])
    raise ValueError(f"unknown decoder kind {kind!r}")


# -- encoders -----------------------------------------------------------------

class GaussianEncoder:
    """Amortized mean-field Gaussian q(z|x)."""

    def __init__(self, net: MLP):
        if net.n_out % 2:
            raise ValueError("encoder network must emit [mean, logvar]")
        self.net = net
        self.latent_dim = net.n_out // 2

    def __call__(self, x) -> tuple[Tensor, Tensor]:
        # the heads are separate products so the mean matches a point encoder bit for bit
        f = self.net.features(x)
        last, d = self.net.layers[-1], self.latent_dim
        mu = ng.add(ng.matmul(f, last.weight[:, :d]), last.bias[:d])
        lv = ng.add(ng.matmul(f, last.weight[:, d:]), last.bias[d:])
        return mu, ng.clip(lv, -LOGVAR_CLAMP, LOGVAR_CLAMP)

    def params(self) -> list[Tensor]:
        return self.net.params()

    def moments(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Numpy ``(mean, var)`` for a batch of x."""
        mu, lv = self(Tensor(np.atleast_2d(x)))
        return mu.data, np.exp(lv.data)

    def load_point(self, h: "PointEncoder", logvar) -> None:
        """Take trunk and mean head from ``h``; constant log-variance ``logvar`` per latent."""
        src, dst = h.net.layers, self.net.layers
        if len(src) != len(dst) or h.net.hidden != self.net.hidden:
            raise ValueError("encoder architectures differ")
        for a, b in zip(src[:-1], dst[:-1]):
            b.weight.data = a.weight.data.copy()
            b.bias.data = a.bias.data.copy()
        d = self.latent_dim
        w = np.zeros_like(dst[-1].weight.data)
        w[:, :d] = src[-1].weight.data
        dst[-1].weight.data = w
        dst[-1].bias.data = np.concatenate([src[-1].bias.data, np.broadcast_to(logvar, (d,))])

    def to_dict(self) -> dict:
        return {"net": self.net.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianEncoder":
        return cls(MLP.from_dict(d["net"]))

    def copy(self) -> "GaussianEncoder":
        return GaussianEncoder.from_dict(self.to_dict())


class PointEncoder:
    """Deterministic encoder ``z = h(x)`` used by the likelihood step."""

    def __init__(self, net: MLP):
        self.net = net

    def __call__(self, x) -> Tensor:
        return self.net(x)

    def params(self) -> list[Tensor]:
        return self.net.params()

    def load_mean_head(self, enc: GaussianEncoder) -> None:
        """Copy ``enc``'s trunk and mean head so that ``h(x) == mean(q(z|x))`` exactly."""
        src, dst = enc.net.layers, self.net.layers
        if len(src) != len(dst) or enc.net.hidden != self.net.hidden:
            raise ValueError("encoder architectures differ")
        for a, b in zip(src[:-1], dst[:-1]):
            b.weight.data = a.weight.data.copy()
            b.bias.data = a.bias.data.copy()
        d = enc.latent_dim
        dst[-1].weight.data = src[-1].weight.data[:, :d].copy()
        dst[-1].bias.data = src[-1].bias.data[:d].copy()

    def whiten(self, X: np.ndarray) -> None:
        """Rescale the output layer so that ``h(X)`` has zero mean and identity covariance.

        Square affine encoders are additionally made orientation-preserving.
        """
        last = self.net.layers[-1]
        Z = self(Tensor(X)).data
        mu = Z.mean(axis=0)
        cov = np.atleast_2d(np.cov(Z, rowvar=False, bias=True))
        evals, evecs = np.linalg.eigh(cov)
        C = evecs @ np.diag(1.0 / np.sqrt(np.maximum(evals, 1e-12))) @ evecs.T
        W = last.weight.data @ C
        if len(self.net.layers) == 1 and W.shape[0] == W.shape[1] and np.linalg.det(W) < 0:
            # keep x -> z orientation-preserving; a reflected start cannot rotate back
            # into a positive-diagonal Cholesky loading without collapsing the codes
            C[:, -1] *= -1.0
        last.weight.data = last.weight.data @ C
        last.bias.data = (last.bias.data - mu) @ C

    def to_dict(self) -> dict:
        return {"net": self.net.to_dict()}


# -- architectures ---------------------------------------------------------------

@dataclass(frozen=True)
class ArchSpec:
    kind: str
    latent_dim: int
    data_dim: int
    encoder_hidden: tuple = ()
    decoder_hidden: tuple = ()
    frozen: dict = field(default_factory=dict)

    def make_decoder(self, rng: np.random.Generator) -> Decoder:
        f = self.frozen
        if self.kind in ("LinearJTEx", "CubicJTEx"):
            A = rng.normal(0.0, INIT_SCALE, size=(self.data_dim, self.latent_dim))
            return JointTrainingDecoder(A, f["B"], f["noise_var"], cubic=self.kind == "CubicJTEx")
        if self.kind == "Gaussian":
            A = rng.normal(0.0, INIT_SCALE, size=(self.latent_dim, self.data_dim))
            return LoadingDecoder(A, f["noise_var"])
        if self.kind == "Mobius":
            return NetworkDecoder(MLP(self.latent_dim, list(self.decoder_hidden), self.data_dim, rng), f["noise_var"])
        raise ValueError(f"unknown world kind {self.kind!r}")

    def make_encoder(self, rng: np.random.Generator) -> GaussianEncoder:
        return GaussianEncoder(MLP(self.data_dim, list(self.encoder_hidden), 2 * self.latent_dim, rng))

    def make_point_encoder(self, rng: np.random.Generator) -> PointEncoder:
        return PointEncoder(MLP(self.data_dim, list(self.encoder_hidden), self.latent_dim, rng))


ENCODER_HIDDEN = {
    "LinearJTEx": (),
    "Gaussian": (),
    "Mobius": ((50, "relu"),),
    "CubicJTEx": ((4, "sigmoid_cbrt"), (20, "relu")),
}
