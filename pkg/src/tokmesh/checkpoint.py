"""Checkpoints: all trainable tensors plus the config snapshot, phase and step.

Stored as a named-array archive whose meta block carries the RunConfig as
JSON-compatible dicts. Loading rebuilds the models from the config and
copies the exact bytes back, so save -> load round-trips bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from tokmesh.archive import ArchiveVersionError, load_archive, save_archive
from tokmesh.base_model import BaseModel
from tokmesh.config import RunConfig
from tokmesh.temporal import _make_temporal

CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    config: RunConfig
    phase: int
    step: int
    base_state: dict[str, np.ndarray]
    temporal_state: dict[str, np.ndarray] | None = None

    @property
    def has_temporal(self) -> bool:
        return self.temporal_state is not None


def _state_arrays(module: nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def checkpoint_from_models(config: RunConfig, base: BaseModel, temporal: nn.Module | None,
                           phase: int, step: int) -> Checkpoint:
    return Checkpoint(
        config=config,
        phase=phase,
        step=step,
        base_state=_state_arrays(base),
        temporal_state=_state_arrays(temporal) if temporal is not None else None,
    )


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    arrays = {f"base/{k}": v for k, v in ckpt.base_state.items()}
    if ckpt.temporal_state is not None:
        arrays.update({f"temporal/{k}": v for k, v in ckpt.temporal_state.items()})
    save_archive(
        path,
        arrays,
        meta={
            "kind": "checkpoint",
            "checkpoint_version": CHECKPOINT_VERSION,
            "config": ckpt.config.to_dict(),
            "phase": ckpt.phase,
            "step": ckpt.step,
            "has_temporal": ckpt.temporal_state is not None,
        },
    )


def load_checkpoint(path: str | Path) -> Checkpoint:
    ar = load_archive(path)
    if ar.meta.get("kind") != "checkpoint":
        raise ValueError(f"{path}: archive is not a checkpoint (kind={ar.meta.get('kind')!r})")
    version = ar.meta.get("checkpoint_version")
    if version != CHECKPOINT_VERSION:
        raise ArchiveVersionError(f"{path}: checkpoint version {version!r}, expected {CHECKPOINT_VERSION}")
    base_state = {}
    temporal_state = {} if ar.meta.get("has_temporal") else None
    for name, arr in ar.arrays.items():
        scope, key = name.split("/", 1)
        if scope == "base":
            base_state[key] = arr
        elif scope == "temporal":
            temporal_state[key] = arr
        else:
            raise ValueError(f"{path}: unexpected entry {name!r}")
    return Checkpoint(
        config=RunConfig.from_dict(ar.meta["config"]),
        phase=int(ar.meta["phase"]),
        step=int(ar.meta["step"]),
        base_state=base_state,
        temporal_state=temporal_state,
    )


def _load_state(module: nn.Module, state: dict[str, np.ndarray]) -> None:
    module.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in state.items()})


def build_models(ckpt: Checkpoint) -> tuple[BaseModel, nn.Module | None]:
    """Instantiate models from the checkpoint's config and restore their tensors."""
    base = BaseModel(ckpt.config.model)
    _load_state(base, ckpt.base_state)
    temporal = None
    if ckpt.temporal_state is not None:
        temporal = _make_temporal(ckpt.config.temporal)
        _load_state(temporal, ckpt.temporal_state)
    return base, temporal
