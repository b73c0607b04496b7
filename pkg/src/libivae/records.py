"""Run records: everything needed to rebuild and compare a trained model pair."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .models import Decoder, GaussianEncoder, decoder_from_dict


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, shortest round-trip float repr."""
    return json.dumps(_clean(obj), sort_keys=True, indent=1)


def digest(obj) -> str:
    return hashlib.sha256(json.dumps(_clean(obj), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class RunRecord:
    method: str
    dataset: str
    seed: int
    config: dict
    val_objective: float
    history: dict = field(default_factory=dict)
    decoder: dict = field(default_factory=dict)
    encoder: dict = field(default_factory=dict)
    point_encoder: dict | None = None
    status: str = "ok"
    attempts: int = 1
    extra: dict = field(default_factory=dict)

    @property
    def key(self) -> str:
        return f"{self.dataset}__{self.method}__{digest(self.config)}__s{self.seed}"

    def model(self) -> tuple[Decoder, GaussianEncoder]:
        return decoder_from_dict(self.decoder), GaussianEncoder.from_dict(self.encoder)

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        d = dict(d)
        if isinstance(d.get("val_objective"), str):
            d["val_objective"] = float(d["val_objective"])
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "RunRecord":
        return cls.from_dict(json.loads(Path(path).read_text()))
