"""Bi-GRU encoder over synchronized log-Mel feature sequences."""

from __future__ import annotations

from dataclasses import dataclass

from torch import Tensor, nn

from ..config import AcousticConfig
from ..errors import ShapeMismatch


@dataclass
class AcousticOutput:
    frame_features: Tensor
    valence: Tensor
    arousal: Tensor


class AcousticNetwork(nn.Module):
    """Stacked log-Mel frames -> bi-GRU -> MLP -> per-frame valence/arousal.

    Fusion consumes ``frame_features`` (the GRU output); the MLP and the
    output layer only serve standalone training.
    """

    def __init__(self, cfg: AcousticConfig = AcousticConfig()):
        super().__init__()
        self.cfg = cfg
        width = cfg.frame_feature_dim
        self.rnn = nn.GRU(
            cfg.input_dim,
            cfg.recurrent_hidden,
            num_layers=cfg.recurrent_layers,
            batch_first=True,
            bidirectional=True,
        )
        self.mlp = nn.Sequential(
            nn.Linear(width, cfg.mlp_dim),
            nn.ReLU(inplace=True),
            nn.Linear(cfg.mlp_dim, cfg.mlp_dim),
            nn.ReLU(inplace=True),
        )
        self.out = nn.Linear(cfg.mlp_dim, 2)

    def encode(self, features: Tensor) -> Tensor:
        if features.dim() != 3 or features.shape[-1] != self.cfg.input_dim:
            raise ShapeMismatch(f"expected [B, T, {self.cfg.input_dim}] audio features, got {tuple(features.shape)}")
        # fresh zero state per call: windows never share recurrent state
        seq, _ = self.rnn(features)
        return seq

    def forward(self, features: Tensor) -> AcousticOutput:
        seq = self.encode(features)
        va = self.out(self.mlp(seq))
        if not self.training:
            va = va.clamp(-1.0, 1.0)
        return AcousticOutput(seq, va[..., 0], va[..., 1])
