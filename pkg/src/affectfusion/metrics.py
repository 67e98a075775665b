"""Concordance correlation coefficient, CCC losses and the multi-task loss."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from .constants import NUM_EMOTIONS, UNLABELED
from .errors import DegenerateInput, EmptyEvaluation, ShapeMismatch


@dataclass
class SequencePair:
    """Aligned prediction/target tracks with an optional validity mask."""

    predictions: np.ndarray
    targets: np.ndarray
    valid_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.predictions = np.asarray(self.predictions, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.valid_mask is None:
            self.valid_mask = np.ones(self.predictions.shape, dtype=bool)
        else:
            self.valid_mask = np.asarray(self.valid_mask, dtype=bool)
        if not (self.predictions.shape == self.targets.shape == self.valid_mask.shape):
            raise ShapeMismatch(
                f"predictions {self.predictions.shape}, targets {self.targets.shape} "
                f"and mask {self.valid_mask.shape} must match"
            )

    def valid(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.predictions[self.valid_mask], self.targets[self.valid_mask]


@dataclass
class LossWeights:
    lambda_emot: float = 0.5

    def __post_init__(self):
        if self.lambda_emot < 0:
            raise ValueError("lambda_emot must be non-negative")


@dataclass
class MetricReport:
    ccc_valence: float
    ccc_arousal: float
    per_video: Dict[str, Tuple[Optional[float], Optional[float]]] = field(default_factory=dict)

    @property
    def ccc_mean(self) -> float:
        return 0.5 * (self.ccc_valence + self.ccc_arousal)

    def to_dict(self) -> dict:
        return {
            "ccc_valence": self.ccc_valence,
            "ccc_arousal": self.ccc_arousal,
            "ccc_mean": self.ccc_mean,
            "per_video": {k: list(v) for k, v in self.per_video.items()},
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetricReport":
        return cls(
            ccc_valence=d["ccc_valence"],
            ccc_arousal=d["ccc_arousal"],
            per_video={k: tuple(v) for k, v in d.get("per_video", {}).items()},
        )


def _ccc_tensor(pred: torch.Tensor, target: torch.Tensor, mask: Optional[torch.Tensor]) -> torch.Tensor:
    if pred.shape != target.shape:
        raise ShapeMismatch(f"prediction shape {tuple(pred.shape)} != target shape {tuple(target.shape)}")
    if mask is not None:
        if mask.shape != pred.shape:
            raise ShapeMismatch(f"mask shape {tuple(mask.shape)} != {tuple(pred.shape)}")
        mask = mask.to(torch.bool)
        pred = pred[mask]
        target = target[mask]
    else:
        pred = pred.reshape(-1)
        target = target.reshape(-1)
    if pred.numel() < 2:
        raise DegenerateInput(f"CCC needs at least 2 valid entries, got {pred.numel()}")

    mean_p = pred.mean()
    mean_t = target.mean()
    dp = pred - mean_p
    dt = target - mean_t
    # population (divide-by-N) moments
    var_p = (dp * dp).mean()
    var_t = (dt * dt).mean()
    cov = (dp * dt).mean()
    denominator = var_p + var_t + (mean_p - mean_t) ** 2
    if denominator.item() == 0.0:
        raise DegenerateInput("CCC denominator is zero: both sequences constant with equal means")
    return 2.0 * cov / denominator


def ccc(predictions, targets, mask=None) -> float:
    """Concordance correlation coefficient over the valid entries.

    Inputs may be numpy arrays, tensors or sequences; moments are computed in
    float64.

    Raises:
        DegenerateInput: fewer than two valid entries, or both sequences are
            constant with equal means.
    """
    pred = torch.as_tensor(np.asarray(predictions, dtype=np.float64))
    target = torch.as_tensor(np.asarray(targets, dtype=np.float64))
    m = None if mask is None else torch.as_tensor(np.asarray(mask, dtype=bool))
    return float(_ccc_tensor(pred, target, m))


def ccc_loss(predictions: torch.Tensor, targets: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """``1 - CCC`` as a differentiable scalar tensor.

    Invalid entries are dropped before the moments are taken, so they receive
    exactly zero gradient.
    """
    return 1.0 - _ccc_tensor(predictions, targets, mask)


def emotion_cross_entropy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy over labeled entries; zero if nothing is labeled.

    Args:
        logits: [..., 7] unnormalized class scores.
        labels: [...] class indices in 0..6, or ``UNLABELED``.
    """
    if logits.shape[-1] != NUM_EMOTIONS:
        raise ShapeMismatch(f"expected {NUM_EMOTIONS} emotion logits, got {logits.shape[-1]}")
    if logits.shape[:-1] != labels.shape:
        raise ShapeMismatch(f"logits {tuple(logits.shape)} do not match labels {tuple(labels.shape)}")
    labeled = labels != UNLABELED
    log_probs = F.log_softmax(logits, dim=-1)
    safe_labels = torch.where(labeled, labels, torch.zeros_like(labels)).long()
    picked = log_probs.gather(-1, safe_labels.unsqueeze(-1)).squeeze(-1)
    nll = torch.where(labeled, -picked, torch.zeros_like(picked))
    count = labeled.sum().clamp(min=1)
    return nll.sum() / count


def combined_loss(l_v, l_a, l_emot, weights: LossWeights = LossWeights()):
    return 0.5 * (l_v + l_a) + weights.lambda_emot * l_emot


def evaluate_tracks(per_video: Mapping[str, Tuple[SequencePair, SequencePair]]) -> MetricReport:
    """Global and per-video CCC for valence and arousal.

    Global values pool the valid frames of every video. A video whose own CCC
    is degenerate is reported as ``None`` for that dimension.
    """
    if not per_video:
        raise EmptyEvaluation("no videos to evaluate")

    pooled = {"v": ([], []), "a": ([], [])}
    report_rows = {}
    for vid, (val_pair, aro_pair) in per_video.items():
        row = []
        for key, pair in (("v", val_pair), ("a", aro_pair)):
            p, t = pair.valid()
            pooled[key][0].append(p)
            pooled[key][1].append(t)
            try:
                row.append(ccc(p, t))
            except DegenerateInput:
                row.append(None)
        report_rows[vid] = tuple(row)

    glob = {k: ccc(np.concatenate(p), np.concatenate(t)) for k, (p, t) in pooled.items()}
    return MetricReport(ccc_valence=glob["v"], ccc_arousal=glob["a"], per_video=report_rows)
