"""Window sampling for training and non-overlapping segmentation for inference."""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Window:
    start: int
    length: int  # window length T
    valid: int  # frames inside the video; the rest is padding

    @property
    def stop(self) -> int:
        return self.start + self.valid


def sample_windows(frame_count: int, t: int, count: int, rng: np.random.Generator) -> List[int]:
    """Start indices of ``count`` windows drawn uniformly from ``[0, frame_count - t]``.

    Videos shorter than ``t`` yield a single window starting at 0.
    """
    if frame_count < 1:
        raise ValueError("frame_count must be >= 1")
    if frame_count < t:
        return [0]
    return rng.integers(0, frame_count - t + 1, size=count).tolist()


def segment_eval(frame_count: int, t: int, annotated: Optional[int] = None, video_id: str = "") -> List[Window]:
    """Consecutive non-overlapping windows covering every frame.

    The last window is padded up to ``t``. ``annotated`` is the number of
    frames with labels; when it is 0 the video is skipped.
    """
    if annotated == 0 or frame_count == 0:
        logger.warning("video %s has no annotated frames; skipped", video_id or "<unnamed>")
        return []
    return [Window(s, t, min(t, frame_count - s)) for s in range(0, frame_count, t)]


def worker_rng(seed: int, video_id: str, epoch: int) -> np.random.Generator:
    """RNG keyed on (seed, video, epoch); independent of worker count and order."""
    return np.random.default_rng([seed, zlib.crc32(video_id.encode()), epoch])
