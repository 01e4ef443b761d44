"""Run configuration: dataclasses with YAML round-trip and a stable hash.

A run is reproducible from (RunConfig, seed); the config snapshot travels
inside every checkpoint.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from tokmesh.base_model import ModelConfig
from tokmesh.losses import LossWeights
from tokmesh.temporal import TemporalConfig


@dataclass
class DataConfig:
    num_sequences: int = 16
    clip_len: int = 8
    dropout: float = 0.0
    vertices: int = 200
    body_seed: int = 0
    stride: int = 1
    max_amplitude: float = math.pi / 3
    beta_scale: float = 0.5
    joint_sigma: float = 2.0
    bone_halfwidth: float = 1.0
    vertex_sigma: float = 1.5


@dataclass
class PhaseConfig:
    steps: int = 200
    batch_size: int = 8
    mode: str = "image"  # "image" or "video"
    optimizer: str = "adam"  # "adam" or "sgd"
    lr: float = 1e-3
    lr_decay_steps: list[int] = field(default_factory=list)  # 10x decay at each milestone
    data_dropout: float = 0.0
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self) -> None:
        if self.mode not in ("image", "video"):
            raise ValueError(f"phase mode must be 'image' or 'video', got {self.mode!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")


def default_phases() -> list[PhaseConfig]:
    """Three-phase schedule: image-only warmup, mixed-supervision video with the
    temporal model (velocity weight still 0), then a full-supervision
    fine-tune with SGD, a small norm weight and the velocity term on."""
    return [
        PhaseConfig(
            steps=600, batch_size=16, mode="image", optimizer="adam", lr=1e-3,
            lr_decay_steps=[400], data_dropout=0.0, weights=LossWeights(velocity=0.0),
        ),
        PhaseConfig(
            steps=300, batch_size=4, mode="video", optimizer="adam", lr=1e-3,
            lr_decay_steps=[200], data_dropout=0.5, weights=LossWeights(velocity=0.0),
        ),
        PhaseConfig(
            steps=200, batch_size=4, mode="video", optimizer="sgd", lr=1e-4,
            data_dropout=0.0, weights=LossWeights(norm=0.01, velocity=600.0),
        ),
    ]


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    unit_scale: Optional[float] = None  # model units -> mm; metrics stay unitless if None
    fps: Optional[float] = None         # frames/s; enables mm/s^2 acceleration units
    threads: int = 1
    model: ModelConfig = field(default_factory=ModelConfig)
    temporal: TemporalConfig = field(default_factory=TemporalConfig)
    data: DataConfig = field(default_factory=DataConfig)
    phases: list[PhaseConfig] = field(default_factory=default_phases)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        model = ModelConfig(**d.pop("model", {}))
        temporal = TemporalConfig(**d.pop("temporal", {}))
        data = DataConfig(**d.pop("data", {}))
        phases_raw = d.pop("phases", None)
        if phases_raw is None:
            phases = default_phases()
        else:
            phases = []
            for p in phases_raw:
                p = dict(p)
                weights = LossWeights(**p.pop("weights", {}))
                phases.append(PhaseConfig(weights=weights, **p))
        return cls(model=model, temporal=temporal, data=data, phases=phases, **d)

    def to_yaml(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))

    @classmethod
    def from_yaml(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()))

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]
