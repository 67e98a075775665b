"""Log-Mel features synchronized to the video frame clock."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.signal import get_window

from ..constants import CONTEXT, MEL_BINS, SAMPLE_RATE
from ..errors import AudioTooShort, ShapeMismatch

LOG_FLOOR = 1e-10


@dataclass
class VideoMetadata:
    video_id: str
    fps: float
    frame_count: int
    audio_sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.frame_count < 0:
            raise ValueError("frame_count must be non-negative")
        if self.fps <= 0:
            raise ValueError("fps must be positive")

    @property
    def duration(self) -> float:
        return self.frame_count / self.fps


@dataclass
class AudioFeatureTrack:
    """Stacked per-frame features [N, 200] and the frames that had audio."""

    features: np.ndarray
    mask: np.ndarray
    centers: Optional[np.ndarray] = None


def _exact_rate(fps) -> Fraction:
    # 29.97 and friends: use the decimal literal, not the binary float
    return Fraction(str(fps)) if isinstance(fps, float) else Fraction(fps)


def frame_centers(frame_count: int, fps, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Sample index of each frame's analysis-window center.

    Each center is rounded independently (half up) from the exact rational
    position ``i * sample_rate / fps``, so the error never exceeds half a
    sample regardless of video length.
    """
    step = Fraction(sample_rate) / _exact_rate(fps)
    num, den = step.numerator, step.denominator
    i = np.arange(frame_count, dtype=np.int64)
    # floor(i*num/den + 1/2) in integer arithmetic
    return (2 * i * num + den) // (2 * den)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int, fmin: float = 0.0, fmax: Optional[float] = None) -> np.ndarray:
    """Triangular HTK-style Mel filters, shape [n_mels, n_fft // 2 + 1]."""
    fmax = sample_rate / 2 if fmax is None else fmax
    fft_freqs = np.linspace(0.0, sample_rate / 2, n_fft // 2 + 1)
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (fft_freqs[None, :] - lower) / (center - lower)
    down = (upper - fft_freqs[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(up, down))


def stack_context(base: np.ndarray, context: int = CONTEXT) -> np.ndarray:
    """Concatenate each row with its ``context`` neighbours on both sides.

    Rows beyond the sequence edges are zero blocks. Output block order is
    frames ``i-context .. i+context``.
    """
    n, d = base.shape
    padded = np.zeros((n + 2 * context, d), dtype=base.dtype)
    padded[context : context + n] = base
    return np.concatenate([padded[k : k + n] for k in range(2 * context + 1)], axis=1)


def extract_logmel_synced(
    waveform: np.ndarray,
    meta: VideoMetadata,
    n_mels: int = MEL_BINS,
    window_ms: float = 25.0,
    context: int = CONTEXT,
) -> AudioFeatureTrack:
    """One stacked log-Mel vector per video frame.

    The analysis window advances in step with the video: frame ``i`` is
    analysed around sample ``round(i * sr / fps)``. Frames whose center falls
    past the end of the waveform are zero-filled and masked.

    Raises:
        AudioTooShort: the waveform covers less than half the video.
    """
    waveform = np.asarray(waveform, dtype=np.float64)
    if waveform.ndim != 1:
        raise ShapeMismatch("waveform must be mono (1-D)")
    sr = meta.audio_sample_rate
    n = meta.frame_count
    if len(waveform) / sr < 0.5 * meta.duration:
        raise AudioTooShort(
            f"{meta.video_id}: {len(waveform) / sr:.3f}s of audio for a {meta.duration:.3f}s video"
        )

    win_len = int(round(window_ms * sr / 1000.0))
    n_fft = 1 << (win_len - 1).bit_length()
    window = get_window("hann", win_len, fftbins=True)
    fbank = mel_filterbank(n_mels, n_fft, sr)

    centers = frame_centers(n, meta.fps, sr)
    mask = centers < len(waveform)
    half = win_len // 2
    padded = np.concatenate([np.zeros(half), waveform, np.zeros(win_len)])
    # centers shift by `half` in the padded signal, so each segment starts at the center
    idx = centers[mask][:, None] + np.arange(win_len)[None, :]
    segments = padded[idx] * window
    power = np.abs(np.fft.rfft(segments, n=n_fft, axis=1)) ** 2
    logmel = np.log(np.maximum(power @ fbank.T, LOG_FLOOR))

    base = np.zeros((n, n_mels), dtype=np.float64)
    base[mask] = logmel
    features = stack_context(base, context)
    features[~mask] = 0.0
    return AudioFeatureTrack(features.astype(np.float32), mask, centers)


def zero_track(frame_count: int, dim: int = MEL_BINS * (2 * CONTEXT + 1)) -> AudioFeatureTrack:
    """Stand-in for a video without usable audio."""
    return AudioFeatureTrack(np.zeros((frame_count, dim), dtype=np.float32), np.zeros(frame_count, dtype=bool))
