"""Multi-modal, multi-task continuous valence/arousal estimation."""

from .config import Config, tiny_config
from .metrics import (
    LossWeights,
    MetricReport,
    SequencePair,
    ccc,
    ccc_loss,
    combined_loss,
    emotion_cross_entropy,
    evaluate_tracks,
)

__version__ = "0.1.0"

__all__ = [
    "Config",
    "LossWeights",
    "MetricReport",
    "SequencePair",
    "ccc",
    "ccc_loss",
    "combined_loss",
    "emotion_cross_entropy",
    "evaluate_tracks",
    "tiny_config",
]
