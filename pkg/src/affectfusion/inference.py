"""Model construction, batched forward passes and whole-video prediction."""

from __future__ import annotations

from typing import Dict, Optional, Tuple

import numpy as np
import torch
from torch import nn

from .config import Config
from .data.corpus import Corpus, build_clip, collate
from .data.store import label_mask
from .data.windows import segment_eval
from .metrics import MetricReport, SequencePair, evaluate_tracks
from .models import AcousticNetwork, FusionNetwork, StaticFeatures, VisualNetwork

# which network a checkpoint of each stage holds
STAGE_MODEL = {"visual": "visual", "audio": "acoustic", "fusion-init": "fusion", "finetune": "fusion"}


def build_model(kind: str, cfg: Config) -> nn.Module:
    if kind == "visual":
        return VisualNetwork(cfg.model.visual)
    if kind == "acoustic":
        return AcousticNetwork(cfg.model.acoustic)
    if kind == "fusion":
        return FusionNetwork(
            VisualNetwork(cfg.model.visual), AcousticNetwork(cfg.model.acoustic), cfg.fusion
        )
    raise ValueError(f"unknown model kind {kind!r}")


def run_model(model: nn.Module, batch: dict) -> Tuple[torch.Tensor, torch.Tensor, Optional[torch.Tensor]]:
    """(valence [B,T], arousal [B,T], emotion logits or None) for any network."""
    if isinstance(model, FusionNetwork):
        static = StaticFeatures(batch["static_emotion"], batch["static_au"], batch["static_mask"])
        out = model(batch["frames"], static, batch["audio"])
        return out.valence, out.arousal, None
    if isinstance(model, VisualNetwork):
        static = StaticFeatures(batch["static_emotion"], batch["static_au"], batch["static_mask"])
        out = model(batch["frames"], static)
        return out.valence, out.arousal, out.emotion_logits
    if isinstance(model, AcousticNetwork):
        out = model(batch["audio"])
        return out.valence, out.arousal, None
    raise TypeError(f"unsupported model type {type(model).__name__}")


@torch.no_grad()
def predict_video(model: nn.Module, corpus: Corpus, vid: str, cfg: Config, batch_size: int = 8, require_labels: bool = True):
    """Per-frame (valence, arousal) over a whole video.

    Returns None for a video without annotated frames when ``require_labels``.

    Uses non-overlapping windows and the central crop; outputs are clamped by
    the model's eval mode.
    """
    t = cfg.data.window_length
    n = corpus.meta[vid].frame_count
    windows = segment_eval(n, t, corpus.annotated_count(vid) if require_labels else None, vid)
    if not windows:
        return None
    was_training = model.training
    model.eval()
    valence = np.zeros(n, dtype=np.float64)
    arousal = np.zeros(n, dtype=np.float64)
    try:
        for i in range(0, len(windows), batch_size):
            chunk = windows[i : i + batch_size]
            batch = collate([build_clip(corpus, vid, w.start, t, "eval", None, cfg.data.crop_size) for w in chunk])
            v, a, _ = run_model(model, batch)
            for j, w in enumerate(chunk):
                valence[w.start : w.stop] = v[j, : w.valid].double().numpy()
                arousal[w.start : w.stop] = a[j, : w.valid].double().numpy()
    finally:
        model.train(was_training)
    return valence, arousal


def predict_corpus(model: nn.Module, corpus: Corpus, cfg: Config) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    out = {}
    for vid in corpus.video_ids:
        pred = predict_video(model, corpus, vid, cfg)
        if pred is not None:
            out[vid] = pred
    return out


def report_for(predictions: Dict[str, Tuple[np.ndarray, np.ndarray]], corpus: Corpus) -> MetricReport:
    tracks = {}
    for vid, (v, a) in predictions.items():
        lab = corpus.annotations(vid)
        tracks[vid] = (
            SequencePair(v, lab["valence"], label_mask(lab["valence"])),
            SequencePair(a, lab["arousal"], label_mask(lab["arousal"])),
        )
    return evaluate_tracks(tracks)


def evaluate_model(model: nn.Module, corpus: Corpus, cfg: Config) -> MetricReport:
    return report_for(predict_corpus(model, corpus, cfg), corpus)
