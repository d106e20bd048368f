"""Versioned experiment configuration with strict JSON round-tripping."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from lrdlab.errors import InvalidArgumentError

FORMAT_VERSION = "1"

EXPERIMENTS = (
    "lrd-profile",
    "decay-check",
    "attention-lrd",
    "theorem1-equivalence",
    "stability-histogram",
    "tail-check",
    "oracle-suite",
)

FAULTS = ("ssm-lrd-sign",)


@dataclass
class ExperimentConfig:
    experiment: str = "oracle-suite"
    seed: int = 0
    format_version: str = FORMAT_VERSION
    # scalar-model dimensions (lrd-profile)
    H: int = 16
    T: int = 200
    t: int = 50
    k_max: int = 100
    eig_low: float = -1.0
    eig_high: float = -0.05
    delta: float = 1.0
    g_scale: float = 1.0
    sweep_seeds: int = 100
    # attention dimensions
    d: int = 4
    # verification sweeps
    instances: int = 100
    equivalence_instances: int = 200
    decay_k_max: int = 64
    # stability channels as [lambda_h, gamma] pairs
    channels: list = field(default_factory=lambda: [[0.9, 0.099], [0.5, 0.499]])
    horizon: int = 10000
    n_samples: int = 10000
    z_grid: list = field(default_factory=lambda: [1.0, 10.0, 100.0, 1000.0])
    workers: int = 1
    out: str = "results"
    plots: bool = True
    filter: str | None = None
    fault_injection: str | None = None

    def validate(self) -> ExperimentConfig:
        if self.format_version != FORMAT_VERSION:
            raise InvalidArgumentError(f"unsupported format_version {self.format_version!r}")
        if self.experiment not in EXPERIMENTS:
            raise InvalidArgumentError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if not 0 <= self.seed < 2**64:
            raise InvalidArgumentError("seed must be an unsigned 64-bit integer")
        for name in ("H", "T", "t", "k_max", "sweep_seeds", "d", "instances", "equivalence_instances",
                     "decay_k_max", "horizon", "n_samples", "workers"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise InvalidArgumentError(f"{name} must be a positive integer, got {value!r}")
        if self.t + self.k_max > self.T:
            raise InvalidArgumentError(f"t + k_max must not exceed T ({self.t} + {self.k_max} > {self.T})")
        if not self.eig_low <= self.eig_high <= 0:
            raise InvalidArgumentError("need eig_low <= eig_high <= 0")
        if not self.delta > 0:
            raise InvalidArgumentError("delta must be positive")
        for pair in self.channels:
            if len(pair) != 2 or not pair[0] > 0 or not pair[1] >= 0:
                raise InvalidArgumentError(f"channel {pair!r} must be [lambda_h > 0, gamma >= 0]")
        if any(z < 0 for z in self.z_grid):
            raise InvalidArgumentError("z_grid values must be non-negative")
        if self.fault_injection is not None and self.fault_injection not in FAULTS:
            raise InvalidArgumentError(f"unknown fault {self.fault_injection!r}")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {unknown}")
        try:
            return cls(**data).validate()
        except TypeError as exc:
            raise InvalidArgumentError(f"malformed config value: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidArgumentError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidArgumentError("config must be a JSON object")
        return cls.from_dict(data)
