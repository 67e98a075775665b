"""Checkpoint directories: ``manifest.json`` plus one weight file per component."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Optional

import torch
from torch import nn

from .config import Config
from .errors import IncompatibleCheckpoint, MissingCheckpoint

MANIFEST = "manifest.json"
TRAINER_STATE = "trainer_state.pt"


@dataclass
class CheckpointManifest:
    stage: str
    iteration: int
    epoch: int
    config_hash: str
    config: dict
    components: Dict[str, str] = field(default_factory=dict)
    trainer_state: Optional[str] = None
    skipped_batches: int = 0
    path: Optional[str] = None

    def save(self, directory) -> None:
        d = asdict(self)
        d.pop("path")
        Path(directory, MANIFEST).write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "CheckpointManifest":
        path = Path(directory) / MANIFEST
        if not path.exists():
            raise MissingCheckpoint(f"no checkpoint manifest at {path}")
        manifest = cls(**json.loads(path.read_text()))
        manifest.path = str(Path(directory))
        return manifest

    def resolved_config(self) -> Config:
        return Config.from_dict(self.config)


def component_map(model: nn.Module) -> Dict[str, nn.Module]:
    """Split a model into the components stored as separate files."""
    from .models import AcousticNetwork, FusionNetwork, VisualNetwork

    if isinstance(model, FusionNetwork):
        return {"visual": model.visual, "acoustic": model.acoustic, "fusion": model}
    if isinstance(model, VisualNetwork):
        return {"visual": model}
    if isinstance(model, AcousticNetwork):
        return {"acoustic": model}
    raise TypeError(f"unsupported model type {type(model).__name__}")


def _fusion_only(state: dict) -> dict:
    return {k: v for k, v in state.items() if not k.startswith(("visual.", "acoustic."))}


def save_checkpoint(directory, model: nn.Module, manifest: CheckpointManifest, trainer_state: Optional[dict] = None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    components = {}
    for name, module in component_map(model).items():
        state = module.state_dict()
        if name == "fusion":
            state = _fusion_only(state)
        torch.save(state, directory / f"{name}.pt")
        components[name] = f"{name}.pt"
    manifest.components = components
    if trainer_state is not None:
        torch.save(trainer_state, directory / TRAINER_STATE)
        manifest.trainer_state = TRAINER_STATE
    manifest.save(directory)
    manifest.path = str(directory)
    return manifest


def load_component(manifest: CheckpointManifest, name: str, module: nn.Module) -> nn.Module:
    """Load one stored component into ``module``.

    Raises:
        IncompatibleCheckpoint: on missing/unexpected/mis-shaped tensors.
    """
    if name not in manifest.components:
        raise IncompatibleCheckpoint([f"checkpoint at {manifest.path} has no {name!r} component"])
    state = torch.load(Path(manifest.path) / manifest.components[name], map_location="cpu", weights_only=True)
    if name == "fusion":
        target = _fusion_only(module.state_dict())
    else:
        target = module.state_dict()
    problems = [f"missing tensor {k}" for k in target if k not in state]
    problems += [f"unexpected tensor {k}" for k in state if k not in target]
    problems += [
        f"shape mismatch for {k}: checkpoint {tuple(state[k].shape)} vs model {tuple(target[k].shape)}"
        for k in target
        if k in state and state[k].shape != target[k].shape
    ]
    if problems:
        raise IncompatibleCheckpoint(problems)
    module.load_state_dict(state, strict=(name != "fusion"))
    return module


def load_trainer_state(manifest: CheckpointManifest) -> Optional[dict]:
    if not manifest.trainer_state:
        return None
    return torch.load(Path(manifest.path) / manifest.trainer_state, map_location="cpu", weights_only=False)
