"""Two-branch spatio-temporal visual network with static-feature injection."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import torch
from torch import Tensor, nn

from ..config import VisualConfig
from ..errors import IncompatibleCheckpoint, ShapeMismatch

logger = logging.getLogger(__name__)


@dataclass
class StaticFeatures:
    """Per-frame precomputed features from frozen 2D models.

    Shapes are [B, T, D] (or [T, D] for a single clip). Invalid frames are
    expected to hold zero vectors.
    """

    emotion: Tensor
    au: Tensor
    valid_mask: Optional[Tensor] = None

    def zeros_like(self) -> "StaticFeatures":
        return StaticFeatures(torch.zeros_like(self.emotion), torch.zeros_like(self.au), self.valid_mask)


@dataclass
class VisualOutput:
    valence: Tensor
    arousal: Tensor
    emotion_logits: Tensor
    frame_features: Tensor


def static_widths(routing: str, emotion_dim: int = 512, au_dim: int = 256):
    """Extra channels appended to the (valence, arousal) branches."""
    return {
        "emo_v_au_a": (emotion_dim, au_dim),
        "emo_v_emo_a": (emotion_dim, emotion_dim),
        "none": (0, 0),
    }[routing]


def route_static(branch_v: Tensor, branch_a: Tensor, static: Optional[StaticFeatures], routing: str):
    """Concatenate static features onto the per-frame branch features.

    Args:
        branch_v, branch_a: [B, T, C] 3D-conv features for each branch.
        static: per-frame static features, [B, T, D].
        routing: ``emo_v_au_a``, ``emo_v_emo_a`` or ``none``.

    Returns:
        The two widened feature tensors; concatenation is along channels only.
    """
    if routing == "none":
        return branch_v, branch_a
    if static is None:
        raise ShapeMismatch(f"routing {routing!r} needs static features")
    bt = branch_v.shape[:2]
    for name, t in (("emotion", static.emotion), ("au", static.au)):
        if t.shape[:2] != bt:
            raise ShapeMismatch(f"{name} static features {tuple(t.shape)} do not match frames {tuple(bt)}")
    if branch_a.shape[:2] != bt:
        raise ShapeMismatch("valence and arousal branch features disagree in [B, T]")
    to_arousal = static.au if routing == "emo_v_au_a" else static.emotion
    return (
        torch.cat([branch_v, static.emotion.to(branch_v.dtype)], dim=-1),
        torch.cat([branch_a, to_arousal.to(branch_a.dtype)], dim=-1),
    )


def _conv_block(cin: int, cout: int, pool: bool, batch_norm: bool) -> nn.Sequential:
    layers = [nn.Conv3d(cin, cout, kernel_size=3, stride=1, padding=1, bias=not batch_norm)]
    if batch_norm:
        layers.append(nn.BatchNorm3d(cout))
    layers.append(nn.ReLU(inplace=True))
    if pool:
        # spatial only, T is preserved
        layers.append(nn.MaxPool3d(kernel_size=(1, 2, 2), stride=(1, 2, 2)))
    return nn.Sequential(*layers)


class FrameHead(nn.Module):
    """Two fully-connected layers applied independently at every time step."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(in_dim, hidden), nn.ReLU(inplace=True), nn.Linear(hidden, out_dim))

    def forward(self, x: Tensor) -> Tensor:
        return self.net(x)


class VisualNetwork(nn.Module):
    """Shared 3D trunk, valence/arousal branches, per-branch bi-GRUs and heads.

    Parameter groups, by attribute prefix:
        ``trunk``: three shared conv layers.
        ``valence_branch`` / ``arousal_branch``: two conv layers each.
        ``valence_rnn``, ``arousal_rnn``, ``*_head``: recurrent encoders and heads.

    Each branch has its own recurrent encoder, so a loss on one dimension
    never reaches the other branch's exclusive weights. ``frame_features`` is
    the concatenation of both encoders' outputs.
    """

    def __init__(self, cfg: VisualConfig = VisualConfig()):
        super().__init__()
        self.cfg = cfg
        w = cfg.channel_widths
        bn = cfg.batch_norm
        self.trunk = nn.Sequential(
            _conv_block(3, w[0], True, bn),
            _conv_block(w[0], w[1], True, bn),
            _conv_block(w[1], w[2], True, bn),
        )
        self.valence_branch = nn.Sequential(_conv_block(w[2], w[3], True, bn), _conv_block(w[3], w[4], False, bn))
        self.arousal_branch = nn.Sequential(_conv_block(w[2], w[3], True, bn), _conv_block(w[3], w[4], False, bn))

        extra_v, extra_a = static_widths(cfg.static_routing, cfg.emotion_dim, cfg.au_dim)
        h = cfg.recurrent_hidden
        self.valence_rnn = nn.GRU(w[4] + extra_v, h, num_layers=cfg.recurrent_layers, batch_first=True, bidirectional=True)
        self.arousal_rnn = nn.GRU(w[4] + extra_a, h, num_layers=cfg.recurrent_layers, batch_first=True, bidirectional=True)
        self.valence_head = FrameHead(2 * h, cfg.head_hidden, 1)
        self.arousal_head = FrameHead(2 * h, cfg.head_hidden, 1)
        self.emotion_head = FrameHead(2 * h, cfg.head_hidden, cfg.emotion_classes)

    @staticmethod
    def _per_frame_pool(x: Tensor) -> Tensor:
        # [B, C, T, H, W] -> [B, T, C]
        return x.mean(dim=(3, 4)).transpose(1, 2)

    def encode(self, frames: Tensor, static: Optional[StaticFeatures] = None):
        """Run everything up to the recurrent encoders.

        Returns:
            (valence_sequence, arousal_sequence), each [B, T, 2 * hidden].
        """
        if frames.dim() != 5 or frames.shape[2] != 3:
            raise ShapeMismatch(f"frames must be [B, T, 3, H, W], got {tuple(frames.shape)}")
        size = self.cfg.input_size
        if frames.shape[-2:] != (size, size):
            raise ShapeMismatch(f"expected {size}x{size} frames, got {tuple(frames.shape[-2:])}")
        x = frames.transpose(1, 2)  # [B, 3, T, H, W]
        shared = self.trunk(x)
        fv = self._per_frame_pool(self.valence_branch(shared))
        fa = self._per_frame_pool(self.arousal_branch(shared))
        fv, fa = route_static(fv, fa, static, self.cfg.static_routing)
        sv, _ = self.valence_rnn(fv)
        sa, _ = self.arousal_rnn(fa)
        return sv, sa

    def forward(self, frames: Tensor, static: Optional[StaticFeatures] = None) -> VisualOutput:
        sv, sa = self.encode(frames, static)
        valence = self.valence_head(sv).squeeze(-1)
        arousal = self.arousal_head(sa).squeeze(-1)
        emotion_src = sv if self.cfg.emotion_head_branch == "valence" else sa
        emotion_logits = self.emotion_head(emotion_src)
        if not self.training:
            valence = valence.clamp(-1.0, 1.0)
            arousal = arousal.clamp(-1.0, 1.0)
        return VisualOutput(valence, arousal, emotion_logits, torch.cat([sv, sa], dim=-1))

    def parameter_groups(self):
        """Map each named parameter to its partition group."""
        groups = {}
        for name, _ in self.named_parameters():
            prefix = name.split(".", 1)[0]
            if prefix == "trunk":
                groups[name] = "trunk"
            elif prefix == "valence_branch":
                groups[name] = "valence_branch"
            elif prefix == "arousal_branch":
                groups[name] = "arousal_branch"
            else:
                groups[name] = "recurrent_heads"
        return groups


def load_pretrained_trunk(model: VisualNetwork, checkpoint, strict: bool = True) -> VisualNetwork:
    """Replace the shared-trunk weights from a saved state dict.

    ``checkpoint`` is a path or an already loaded mapping. Keys may carry a
    prefix such as ``visual.`` (fusion checkpoints); anything that does not
    address the trunk is ignored and logged. Shape mismatches always fail;
    with ``strict``, missing or unexpected trunk tensors fail too.

    Raises:
        IncompatibleCheckpoint: lists every offending tensor.
    """
    if isinstance(checkpoint, dict):
        state = checkpoint
    else:
        state = torch.load(checkpoint, map_location="cpu", weights_only=True)
    if "state_dict" in state and isinstance(state["state_dict"], dict):
        state = state["state_dict"]

    target = {k: v for k, v in model.state_dict().items() if k.startswith("trunk.")}
    found, ignored = {}, []
    for key, tensor in state.items():
        idx = key.find("trunk.")
        if idx >= 0 and (idx == 0 or key[idx - 1] == "."):
            found[key[idx:]] = tensor
        else:
            ignored.append(key)

    problems = []
    for key, tensor in found.items():
        if key not in target:
            if strict:
                problems.append(f"unexpected trunk tensor {key}")
        elif tuple(tensor.shape) != tuple(target[key].shape):
            problems.append(f"shape mismatch for {key}: checkpoint {tuple(tensor.shape)} vs model {tuple(target[key].shape)}")
    if strict:
        problems.extend(f"missing trunk tensor {k}" for k in target if k not in found)
    if problems:
        raise IncompatibleCheckpoint(problems)
    if ignored:
        logger.info("ignored %d non-trunk tensors: %s", len(ignored), ", ".join(ignored[:8]))

    with torch.no_grad():
        params = dict(model.named_parameters())
        buffers = dict(model.named_buffers())
        for key, tensor in found.items():
            if key in params:
                params[key].copy_(tensor)
            elif key in buffers:
                buffers[key].copy_(tensor)
    return model
