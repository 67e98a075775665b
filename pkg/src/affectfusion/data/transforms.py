"""Clip augmentation and landmark smoothing."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter1d

from ..errors import ShapeMismatch


def augment(frames: np.ndarray, rng: np.random.Generator = None, mode: str = "train", crop: int = 112, size: int = 128):
    """Crop (and in training, maybe flip) a whole clip consistently.

    Args:
        frames: [T, C, size, size] array.
        rng: required in train mode.
        mode: ``train`` draws one crop offset and one flip decision for the
            entire clip; ``eval`` takes the central crop.

    Returns:
        (cropped frames [T, C, crop, crop], (top, left), flipped)
    """
    if frames.ndim != 4 or frames.shape[-2:] != (size, size):
        raise ShapeMismatch(f"expected [T, C, {size}, {size}] frames, got {frames.shape}")
    if mode == "eval":
        top = left = (size - crop) // 2
        flip = False
    elif mode == "train":
        top, left = (int(v) for v in rng.integers(0, size - crop + 1, size=2))
        flip = bool(rng.random() < 0.5)
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    out = frames[:, :, top : top + crop, left : left + crop]
    if flip:
        out = out[..., ::-1]
    return np.ascontiguousarray(out), (top, left), flip


def bbox_variance(boxes: np.ndarray) -> float:
    """Mean temporal variance of bounding-box coordinates, boxes [T, 4]."""
    return float(np.var(np.asarray(boxes, dtype=np.float64), axis=0).mean())


def smooth_landmarks(landmarks: np.ndarray, bbox_var: float, threshold: float = 25.0, sigma: float = 1.0) -> np.ndarray:
    """Temporal Gaussian smoothing of landmark tracks, gated on box stability.

    When ``bbox_var >= threshold`` (the face moves a lot) the input is
    returned untouched. Otherwise every coordinate trajectory is convolved
    with a normalized Gaussian of radius ``3 * sigma`` using reflect padding.
    """
    landmarks = np.asarray(landmarks)
    if bbox_var >= threshold:
        return landmarks
    return gaussian_filter1d(landmarks.astype(np.float64), sigma, axis=0, mode="reflect", truncate=3.0)
