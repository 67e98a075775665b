"""Run configuration: nested dataclasses, YAML I/O and dotted-path overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import yaml

STATIC_ROUTINGS = ("emo_v_au_a", "emo_v_emo_a", "none")
FUSION_MODES = ("concat", "attention")


@dataclass
class VisualConfig:
    input_size: int = 112
    # 3 shared trunk layers followed by 2 layers per branch
    channel_widths: List[int] = field(default_factory=lambda: [32, 64, 128, 256, 512])
    # per direction, per branch; each branch encodes to 2 * hidden
    recurrent_hidden: int = 512
    recurrent_layers: int = 2
    head_hidden: int = 512
    emotion_classes: int = 7
    static_routing: str = "emo_v_au_a"
    emotion_head_branch: str = "valence"
    emotion_dim: int = 512
    au_dim: int = 256
    batch_norm: bool = True

    def __post_init__(self):
        if len(self.channel_widths) != 5:
            raise ValueError("channel_widths needs 5 entries: 3 shared + 2 per branch")
        if self.static_routing not in STATIC_ROUTINGS:
            raise ValueError(f"static_routing must be one of {STATIC_ROUTINGS}")
        if self.emotion_head_branch not in ("valence", "arousal"):
            raise ValueError("emotion_head_branch must be 'valence' or 'arousal'")

    @property
    def frame_feature_dim(self) -> int:
        return 2 * 2 * self.recurrent_hidden


@dataclass
class AcousticConfig:
    input_dim: int = 200
    recurrent_hidden: int = 256
    recurrent_layers: int = 2
    mlp_dim: int = 512

    @property
    def frame_feature_dim(self) -> int:
        return 2 * self.recurrent_hidden


@dataclass
class ModelConfig:
    visual: VisualConfig = field(default_factory=VisualConfig)
    acoustic: AcousticConfig = field(default_factory=AcousticConfig)


@dataclass
class FusionConfig:
    mode: str = "concat"
    projection_dim: int = 512
    scorer_hidden: int = 128
    joint_hidden: int = 512
    joint_layers: int = 2
    head_hidden: int = 512

    def __post_init__(self):
        if self.mode not in FUSION_MODES:
            raise ValueError(f"fusion.mode must be one of {FUSION_MODES}")


@dataclass
class DataConfig:
    corpus_dir: Optional[str] = None
    val_corpus_dir: Optional[str] = None
    audio_features_dir: Optional[str] = None
    window_length: int = 32
    windows_per_video: int = 200
    frame_size: int = 128
    crop_size: int = 112
    smoothing_sigma: float = 1.0
    bbox_variance_threshold: float = 25.0
    # audio-only training drops videos at or below this frame rate
    audio_only_min_fps: float = 15.0
    logmel_window_ms: float = 25.0


@dataclass
class TrainingConfig:
    batch_size: int = 64
    weight_decay: float = 1e-4
    lambda_emot: float = 0.5
    base_lr: float = 1e-7
    max_lr: float = 1e-4
    step_size_epochs: float = 3.0
    epochs: int = 30
    fusion_init_epochs: int = 3
    fusion_init_lr: float = 1e-5
    finetune_lr: float = 1e-5
    finetune_epochs: int = 10
    decay_factor: float = 0.5
    decay_patience: int = 2
    max_iterations: Optional[int] = None
    ccc_per_window: bool = False
    deterministic: bool = True
    visual_checkpoint: Optional[str] = None
    audio_checkpoint: Optional[str] = None
    fusion_checkpoint: Optional[str] = None
    pretrained_trunk: Optional[str] = None


@dataclass
class Config:
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    seed: int = 0

    def __post_init__(self):
        if self.fusion.projection_dim != self.model.acoustic.frame_feature_dim:
            raise ValueError(
                "fusion.projection_dim must equal the acoustic feature width "
                f"({self.model.acoustic.frame_feature_dim})"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def save(self, path) -> None:
        Path(path).write_text(self.to_yaml())

    def hash(self) -> str:
        """Digest of the architecture-relevant sections."""
        blob = json.dumps({"model": asdict(self.model), "fusion": asdict(self.fusion)}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "Config":
        return _build(cls, d or {})

    @classmethod
    def load(cls, path=None, overrides=()) -> "Config":
        raw = {}
        if path is not None:
            raw = yaml.safe_load(Path(path).read_text()) or {}
        for item in overrides:
            apply_override(raw, item)
        return cls.from_dict(raw)


def _build(cls, d: dict):
    if not isinstance(d, dict):
        raise TypeError(f"expected a mapping for {cls.__name__}, got {type(d).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(d) - set(fields)
    if unknown:
        raise KeyError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in d.items():
        sub = _NESTED.get((cls, name))
        kwargs[name] = _build(sub, value) if sub is not None else value
    return cls(**kwargs)


_NESTED = {
    (Config, "model"): ModelConfig,
    (Config, "data"): DataConfig,
    (Config, "training"): TrainingConfig,
    (Config, "fusion"): FusionConfig,
    (ModelConfig, "visual"): VisualConfig,
    (ModelConfig, "acoustic"): AcousticConfig,
}


def apply_override(raw: dict, item: str) -> dict:
    """Apply one ``dotted.key=value`` override to a raw config mapping in place.

    The value is parsed as YAML, so ``4``, ``1e-3``, ``[8, 16]`` and ``null``
    all become the expected Python types.
    """
    if "=" not in item:
        raise ValueError(f"override must look like key=value, got {item!r}")
    key, value = item.split("=", 1)
    parts = key.strip().split(".")
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    parsed = yaml.safe_load(value)
    # YAML 1.1 does not read "1e-3" as a float
    if isinstance(parsed, str):
        try:
            parsed = float(parsed)
        except ValueError:
            pass
    node[parts[-1]] = parsed
    return raw


def tiny_config(**sections) -> Config:
    """A desk-scale configuration used by tests and the quickstart."""
    raw = {
        "model": {
            "visual": {
                "input_size": 32,
                "channel_widths": [8, 16, 32, 32, 64],
                "recurrent_hidden": 64,
                "head_hidden": 64,
            },
            "acoustic": {"recurrent_hidden": 64, "mlp_dim": 128},
        },
        "fusion": {"projection_dim": 128, "scorer_hidden": 32, "joint_hidden": 64, "head_hidden": 64},
        "data": {"frame_size": 40, "crop_size": 32},
    }
    _deep_update(raw, sections)
    return Config.from_dict(raw)


def _deep_update(dst: dict, src: dict) -> dict:
    for k, v in src.items():
        if isinstance(v, dict) and isinstance(dst.get(k), dict):
            _deep_update(dst[k], v)
        else:
            dst[k] = v
    return dst
