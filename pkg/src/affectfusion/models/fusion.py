"""Late fusion of visual and acoustic frame features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import Tensor, nn

from ..config import AcousticConfig, FusionConfig, VisualConfig
from ..errors import ShapeMismatch
from .acoustic import AcousticNetwork
from .visual import FrameHead, StaticFeatures, VisualNetwork


@dataclass
class FusedSequence:
    fused: Tensor
    alpha: Optional[Tensor] = None  # [B, T, 2] as (visual, audio); attention mode only


@dataclass
class FusionOutput:
    valence: Tensor
    arousal: Tensor
    fused: FusedSequence


def modality_weights(score_v: Tensor, score_a: Tensor) -> Tensor:
    """Softmax over the two per-step modality scores.

    Returns:
        [..., 2] weights ordered (visual, audio).
    """
    return torch.softmax(torch.stack([score_v, score_a], dim=-1), dim=-1)


def attention_fuse(v: Tensor, a: Tensor, alpha: Tensor) -> Tensor:
    if v.shape != a.shape:
        raise ShapeMismatch(f"attention fusion needs equal shapes, got {tuple(v.shape)} and {tuple(a.shape)}")
    if alpha.shape != v.shape[:-1] + (2,):
        raise ShapeMismatch(f"alpha must be {tuple(v.shape[:-1]) + (2,)}, got {tuple(alpha.shape)}")
    return alpha[..., 0:1] * v + alpha[..., 1:2] * a


def concat_fuse(v_proj: Tensor, a: Tensor) -> Tensor:
    if v_proj.shape[:-1] != a.shape[:-1]:
        raise ShapeMismatch(f"cannot concatenate {tuple(v_proj.shape)} with {tuple(a.shape)}")
    return torch.cat([v_proj, a], dim=-1)


class ModalityScorer(nn.Module):
    """One-layer bi-GRU, scalar projection and sigmoid: a quality score in (0, 1) per step."""

    def __init__(self, in_dim: int, hidden: int = 128):
        super().__init__()
        self.rnn = nn.GRU(in_dim, hidden, num_layers=1, batch_first=True, bidirectional=True)
        self.proj = nn.Linear(2 * hidden, 1)

    def forward(self, x: Tensor) -> Tensor:
        seq, _ = self.rnn(x)
        return torch.sigmoid(self.proj(seq)).squeeze(-1)


def attention_weights(v: Tensor, a: Tensor, scorer_v: ModalityScorer, scorer_a: ModalityScorer) -> Tensor:
    if v.shape != a.shape:
        raise ShapeMismatch(f"modalities must share a shape, got {tuple(v.shape)} and {tuple(a.shape)}")
    return modality_weights(scorer_v(v), scorer_a(a))


class JointHead(nn.Module):
    """Bi-GRU over the fused sequence followed by two per-frame FC layers."""

    def __init__(self, in_dim: int, hidden: int, layers: int, head_hidden: int):
        super().__init__()
        self.in_dim = in_dim
        self.rnn = nn.GRU(in_dim, hidden, num_layers=layers, batch_first=True, bidirectional=True)
        self.fc = FrameHead(2 * hidden, head_hidden, 2)

    def forward(self, fused: Tensor):
        if fused.shape[-1] != self.in_dim:
            raise ShapeMismatch(f"joint head expects width {self.in_dim}, got {fused.shape[-1]}")
        seq, _ = self.rnn(fused)
        out = self.fc(seq)
        return out[..., 0], out[..., 1]


class FusionNetwork(nn.Module):
    """Visual and acoustic encoders joined by concat or attention fusion.

    The single-modality prediction heads stay attached to the encoders but
    are unused here.
    """

    def __init__(
        self,
        visual: Optional[VisualNetwork] = None,
        acoustic: Optional[AcousticNetwork] = None,
        cfg: FusionConfig = FusionConfig(),
        visual_cfg: VisualConfig = VisualConfig(),
        acoustic_cfg: AcousticConfig = AcousticConfig(),
    ):
        super().__init__()
        self.cfg = cfg
        self.visual = visual if visual is not None else VisualNetwork(visual_cfg)
        self.acoustic = acoustic if acoustic is not None else AcousticNetwork(acoustic_cfg)
        v_dim = self.visual.cfg.frame_feature_dim
        a_dim = self.acoustic.cfg.frame_feature_dim
        if cfg.projection_dim != a_dim:
            raise ShapeMismatch(f"projection_dim {cfg.projection_dim} must equal acoustic width {a_dim}")
        self.project_visual = nn.Linear(v_dim, cfg.projection_dim)
        if cfg.mode == "attention":
            self.scorer_v = ModalityScorer(cfg.projection_dim, cfg.scorer_hidden)
            self.scorer_a = ModalityScorer(a_dim, cfg.scorer_hidden)
            fused_dim = cfg.projection_dim
        else:
            fused_dim = cfg.projection_dim + a_dim
        self.joint = JointHead(fused_dim, cfg.joint_hidden, cfg.joint_layers, cfg.head_hidden)

    def encoders(self):
        return [self.visual, self.acoustic]

    def fuse(self, v_feat: Tensor, a_feat: Tensor) -> FusedSequence:
        v = self.project_visual(v_feat)
        if self.cfg.mode == "attention":
            alpha = attention_weights(v, a_feat, self.scorer_v, self.scorer_a)
            return FusedSequence(attention_fuse(v, a_feat, alpha), alpha)
        return FusedSequence(concat_fuse(v, a_feat))

    def forward(self, frames: Tensor, static: Optional[StaticFeatures], audio: Tensor) -> FusionOutput:
        sv, sa = self.visual.encode(frames, static)
        a_feat = self.acoustic.encode(audio)
        if a_feat.shape[:2] != sv.shape[:2]:
            raise ShapeMismatch("visual and acoustic sequences differ in [B, T]")
        fused = self.fuse(torch.cat([sv, sa], dim=-1), a_feat)
        valence, arousal = self.joint(fused.fused)
        if not self.training:
            valence = valence.clamp(-1.0, 1.0)
            arousal = arousal.clamp(-1.0, 1.0)
        return FusionOutput(valence, arousal, fused)
