"""Corpus access and assembly of fixed-length clips."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import torch
from PIL import Image
from scipy.io import wavfile

from ..constants import AU_DIM, AUDIO_DIM, EMOTION_DIM, INVALID, UNLABELED
from ..errors import AudioTooShort
from .audio import AudioFeatureTrack, VideoMetadata, extract_logmel_synced, zero_track
from .store import FeatureStore, label_mask, read_annotations, read_json
from .transforms import augment
from .windows import sample_windows, worker_rng

logger = logging.getLogger(__name__)


def audio_feature_stats(tracks) -> Tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean/std over the valid frames of several tracks."""
    rows = [t.features[t.mask] for t in tracks if t.mask.any()]
    if not rows:
        return np.zeros(AUDIO_DIM, np.float32), np.ones(AUDIO_DIM, np.float32)
    stacked = np.concatenate(rows).astype(np.float64)
    std = stacked.std(axis=0)
    return stacked.mean(axis=0).astype(np.float32), np.where(std > 1e-6, std, 1.0).astype(np.float32)


def extract_video_audio(video_dir: Path, meta: VideoMetadata, window_ms: float = 25.0) -> Tuple[AudioFeatureTrack, bool]:
    """Features for one video; a zero track if the audio is absent or unusable.

    Returns:
        (track, missing) where ``missing`` flags the zero-filled fallback.
    """
    wav_path = video_dir / "audio.wav"
    if not wav_path.exists():
        return zero_track(meta.frame_count), True
    sr, samples = wavfile.read(wav_path)
    if samples.ndim > 1:
        samples = samples.mean(axis=1)
    if np.issubdtype(samples.dtype, np.integer):
        samples = samples.astype(np.float64) / float(np.iinfo(samples.dtype).max)
    meta = VideoMetadata(meta.video_id, meta.fps, meta.frame_count, int(sr))
    try:
        return extract_logmel_synced(samples, meta, window_ms=window_ms), False
    except AudioTooShort as exc:
        logger.warning("%s", exc)
        return zero_track(meta.frame_count), True


class Corpus:
    """Read access to one corpus directory (see ``synth_dataset`` for the layout).

    Audio features come from a preprocessed ``FeatureStore`` when one is
    given, otherwise they are extracted on first use. Decoded frames and
    features are cached in memory.
    """

    def __init__(self, root, audio_features_dir=None, window_ms: float = 25.0, cache: bool = True):
        self.root = Path(root)
        index = read_json(self.root / "index.json")
        self.frame_size = int(index.get("frame_size", 128))
        self.entries = {v["video_id"]: v for v in index["videos"]}
        self.meta: Dict[str, VideoMetadata] = {
            vid: VideoMetadata(vid, float(v["fps"]), int(v["frame_count"]), int(v.get("audio_sample_rate", 16000)))
            for vid, v in self.entries.items()
        }
        self.window_ms = window_ms
        self.cache = cache
        self._cache: Dict[Tuple[str, str], object] = {}
        feat_dir = Path(audio_features_dir) if audio_features_dir else self.root / "features" / "audio"
        self.audio_store = FeatureStore(feat_dir) if (feat_dir / "index.json").exists() else None
        self.emotion_store = FeatureStore(self.root / "static" / "emotion")
        self.au_store = FeatureStore(self.root / "static" / "au")
        self._audio_stats: Optional[Tuple[np.ndarray, np.ndarray]] = None

    @property
    def video_ids(self) -> List[str]:
        return sorted(self.meta)

    def _cached(self, kind: str, vid: str, fn):
        key = (kind, vid)
        if key in self._cache:
            return self._cache[key]
        value = fn()
        if self.cache:
            self._cache[key] = value
        return value

    def frames(self, vid: str) -> Tuple[np.ndarray, np.ndarray]:
        """uint8 frames [N, 3, S, S] and a presence mask; absent frames are zeros."""

        def load():
            n, s = self.meta[vid].frame_count, self.frame_size
            out = np.zeros((n, 3, s, s), dtype=np.uint8)
            present = np.zeros(n, dtype=bool)
            fdir = self.root / "videos" / vid / "frames"
            for i in range(n):
                p = fdir / f"{i:06d}.png"
                if p.exists():
                    out[i] = np.asarray(Image.open(p).convert("RGB")).transpose(2, 0, 1)
                    present[i] = True
            return out, present

        return self._cached("frames", vid, load)

    def annotations(self, vid: str) -> dict:
        path = self.root / "annotations" / f"{vid}.csv"

        def load():
            n = self.meta[vid].frame_count
            if not path.exists():
                return {
                    "valence": np.full(n, INVALID, np.float32),
                    "arousal": np.full(n, INVALID, np.float32),
                    "emotion": np.full(n, UNLABELED, np.int64),
                }
            return read_annotations(path, n)

        return self._cached("labels", vid, load)

    def raw_audio(self, vid: str) -> Tuple[AudioFeatureTrack, bool]:
        """Unnormalized stacked log-Mel track and its missing-audio flag."""

        def load():
            if self.audio_store is not None and vid in self.audio_store:
                entry = self.audio_store.index[vid]
                feats = self.audio_store.get(vid)
                mask = np.any(feats != 0.0, axis=1)
                return AudioFeatureTrack(feats, mask), bool(entry.get("missing_audio", False))
            if self.audio_store is not None:
                logger.warning("%s: no preprocessed audio features; zero-filled", vid)
                return zero_track(self.meta[vid].frame_count), True
            return extract_video_audio(self.root / "videos" / vid, self.meta[vid], self.window_ms)

        return self._cached("audio", vid, load)

    def audio_stats(self) -> Tuple[np.ndarray, np.ndarray]:
        if self._audio_stats is None:
            if self.audio_store is not None and "mean" in self.audio_store.meta:
                m = self.audio_store.meta
                self._audio_stats = (np.asarray(m["mean"], np.float32), np.asarray(m["std"], np.float32))
            else:
                self._audio_stats = audio_feature_stats(self.raw_audio(v)[0] for v in self.video_ids)
        return self._audio_stats

    def audio(self, vid: str) -> AudioFeatureTrack:
        """Standardized audio features; masked frames stay exactly zero."""

        def load():
            track, _ = self.raw_audio(vid)
            mean, std = self.audio_stats()
            feats = np.where(track.mask[:, None], (track.features - mean) / std, 0.0).astype(np.float32)
            return AudioFeatureTrack(feats, track.mask.copy())

        return self._cached("audio_norm", vid, load)

    def static(self, vid: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        def load():
            n = self.meta[vid].frame_count
            emo = np.zeros((n, EMOTION_DIM), np.float32)
            au = np.zeros((n, AU_DIM), np.float32)
            mask = np.zeros(n, dtype=bool)
            if vid in self.emotion_store and vid in self.au_store:
                emo, au = self.emotion_store.get(vid), self.au_store.get(vid)
                mask[:] = True
            return emo, au, mask

        return self._cached("static", vid, load)

    def annotated_count(self, vid: str) -> int:
        lab = self.annotations(vid)
        return int((label_mask(lab["valence"]) | label_mask(lab["arousal"])).sum())


def _take(array: np.ndarray, start: int, t: int, fill=0) -> np.ndarray:
    """Slice ``t`` rows from ``start``, padding past the end with ``fill``."""
    out = np.full((t,) + array.shape[1:], fill, dtype=array.dtype)
    chunk = array[start : start + t]
    out[: len(chunk)] = chunk
    return out


def build_clip(corpus: Corpus, vid: str, start: int, t: int, mode: str, rng=None, crop: int = 112) -> dict:
    """Assemble one window as a dict of numpy arrays.

    Padded or absent positions hold zero vectors in every stream and are
    masked out; labels there are INVALID/UNLABELED.
    """
    frames_u8, present = corpus.frames(vid)
    frames_u8 = _take(frames_u8, start, t)
    frame_mask = _take(present, start, t, False)
    frames = frames_u8.astype(np.float32) / 127.5 - 1.0
    frames, _, _ = augment(frames, rng, mode, crop=crop, size=corpus.frame_size)
    frames = np.where(frame_mask[:, None, None, None], frames, 0.0).astype(np.float32)

    track = corpus.audio(vid)
    emo, au, static_mask = corpus.static(vid)
    static_mask = _take(static_mask, start, t, False) & frame_mask
    lab = corpus.annotations(vid)
    valence = _take(lab["valence"], start, t, INVALID)
    arousal = _take(lab["arousal"], start, t, INVALID)
    emotion = _take(lab["emotion"], start, t, UNLABELED)
    return {
        "video_id": vid,
        "start": start,
        "frames": frames,
        "frame_mask": frame_mask,
        "audio": _take(track.features, start, t),
        "audio_mask": _take(track.mask, start, t, False),
        "static_emotion": np.where(static_mask[:, None], _take(emo, start, t), 0.0).astype(np.float32),
        "static_au": np.where(static_mask[:, None], _take(au, start, t), 0.0).astype(np.float32),
        "static_mask": static_mask,
        "valence": valence,
        "arousal": arousal,
        "valence_mask": label_mask(valence),
        "arousal_mask": label_mask(arousal),
        "emotion": emotion,
    }


def collate(clips: List[dict]) -> dict:
    batch = {}
    for key in clips[0]:
        values = [c[key] for c in clips]
        if isinstance(values[0], np.ndarray):
            batch[key] = torch.from_numpy(np.stack(values))
        else:
            batch[key] = values
    return batch


def training_windows(corpus: Corpus, t: int, per_video: int, seed: int, epoch: int, video_ids=None) -> List[Tuple[str, int, int]]:
    """Shuffled (video, start, window_seed) triples for one epoch."""
    items = []
    for vid in video_ids if video_ids is not None else corpus.video_ids:
        rng = worker_rng(seed, vid, epoch)
        for k, start in enumerate(sample_windows(corpus.meta[vid].frame_count, t, per_video, rng)):
            items.append((vid, start, k))
    order = np.random.default_rng([seed, epoch, 7]).permutation(len(items))
    return [items[i] for i in order]


def iterate_batches(
    corpus: Corpus,
    windows: List[Tuple[str, int, int]],
    batch_size: int,
    t: int,
    seed: int,
    epoch: int,
    crop: int,
    mode: str = "train",
) -> Iterator[dict]:
    """Batches in window order; each window's augmentation RNG depends only on
    (seed, video, epoch, window index)."""
    for i in range(0, len(windows), batch_size):
        clips = []
        for vid, start, k in windows[i : i + batch_size]:
            rng = np.random.default_rng([seed, epoch, k, *worker_rng(seed, vid, epoch).integers(0, 2**31, size=1)])
            clips.append(build_clip(corpus, vid, start, t, mode, rng, crop))
        yield collate(clips)
