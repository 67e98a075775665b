from .acoustic import AcousticNetwork, AcousticOutput
from .fusion import (
    FusedSequence,
    FusionNetwork,
    FusionOutput,
    JointHead,
    ModalityScorer,
    attention_fuse,
    attention_weights,
    concat_fuse,
    modality_weights,
)
from .visual import StaticFeatures, VisualNetwork, VisualOutput, load_pretrained_trunk, route_static, static_widths

__all__ = [
    "AcousticNetwork",
    "AcousticOutput",
    "FusedSequence",
    "FusionNetwork",
    "FusionOutput",
    "JointHead",
    "ModalityScorer",
    "StaticFeatures",
    "VisualNetwork",
    "VisualOutput",
    "attention_fuse",
    "attention_weights",
    "concat_fuse",
    "load_pretrained_trunk",
    "modality_weights",
    "route_static",
    "static_widths",
]
