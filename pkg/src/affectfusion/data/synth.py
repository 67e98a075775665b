"""Deterministic synthetic audio-visual corpus with analytically known labels.

Encoding:
    valence -> mean frame intensity (and audio pitch);
    arousal -> amplitude of a zero-mean checkerboard flicker that flips sign
               every frame (and the audio amplitude envelope);
    emotion -> valence quantized into 7 bins, partially unlabeled;
    static features -> a fixed direction scaled by the label, plus noise.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image
from scipy.io import wavfile

from ..constants import AU_DIM, EMOTION_DIM, INVALID, NUM_EMOTIONS, SAMPLE_RATE, UNLABELED
from .store import FeatureStore, write_annotations, write_json

DEFAULT_FPS = (7.5, 15, 24, 25, 30)
CHECKER = 4  # px per checkerboard cell
UNLABELED_FRACTION = 0.3


def synthetic_track(components, times) -> np.ndarray:
    """Evaluate the closed-form label signal ``tanh(sum a*sin(2*pi*f*t + phi))``."""
    times = np.asarray(times, dtype=np.float64)
    total = np.zeros_like(times)
    for amp, freq, phase in components:
        total += amp * np.sin(2.0 * np.pi * freq * times + phase)
    return np.tanh(total)


def _components(rng: np.random.Generator):
    amps = rng.uniform(0.5, 1.0, size=2)
    freqs = rng.uniform(0.1, 0.6, size=2)
    phases = rng.uniform(0.0, 2 * np.pi, size=2)
    return [[float(a), float(f), float(p)] for a, f, p in zip(amps, freqs, phases)]


def quantize_emotion(valence: np.ndarray) -> np.ndarray:
    return np.clip(np.floor((valence + 1.0) / 2.0 * NUM_EMOTIONS), 0, NUM_EMOTIONS - 1).astype(np.int64)


def render_frames(valence: np.ndarray, arousal: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """uint8 frames [T, size, size, 3]."""
    yy, xx = np.mgrid[0:size, 0:size]
    checker = np.where(((yy // CHECKER) + (xx // CHECKER)) % 2 == 0, 1.0, -1.0)
    texture = rng.normal(0.0, 0.02, size=(size, size, 3))
    tint = rng.uniform(-0.05, 0.05, size=3)
    t = np.arange(len(valence))
    base = 0.5 + 0.3 * valence
    flicker = 0.15 * (arousal + 1.0) / 2.0 * np.where(t % 2 == 0, 1.0, -1.0)
    img = base[:, None, None, None] + flicker[:, None, None, None] * checker[None, :, :, None]
    img = img + texture[None] + tint[None, None, None, :]
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def render_audio(valence_fn, arousal_fn, duration: float, rng: np.random.Generator, sr: int = SAMPLE_RATE) -> np.ndarray:
    """int16 mono waveform: two harmonics, pitch from valence, envelope from arousal."""
    times = np.arange(int(round(duration * sr))) / sr
    v = valence_fn(times)
    a = arousal_fn(times)
    freq = 300.0 + 150.0 * v
    phase = 2.0 * np.pi * np.cumsum(freq) / sr
    envelope = 0.05 + 0.4 * (a + 1.0) / 2.0
    signal = envelope * (np.sin(phase) + 0.5 * np.sin(2.0 * phase)) / 1.5
    signal = signal + rng.normal(0.0, 0.003, size=signal.shape)
    return np.round(np.clip(signal, -1.0, 1.0) * 32767.0).astype(np.int16)


def synth_dataset(
    out_dir,
    seed: int = 0,
    num_videos: int = 8,
    fps_list: Sequence[float] = DEFAULT_FPS,
    duration: float = 4.0,
    frame_size: int = 128,
    drop_audio: Iterable[int] = (),
) -> Path:
    """Write a synthetic corpus to ``out_dir`` and return its path.

    Layout::

        index.json                        video metadata + closed-form label parameters
        videos/<id>/frames/000000.png     frame_size x frame_size RGB
        videos/<id>/audio.wav             16 kHz mono int16 (absent if dropped)
        annotations/<id>.csv              frame,valence,arousal,emotion
        static/emotion/, static/au/       feature stores
    """
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    drop_audio = set(drop_audio)
    emo_dir = rng.normal(size=EMOTION_DIM)
    emo_dir /= np.linalg.norm(emo_dir) / np.sqrt(EMOTION_DIM)
    au_dir = rng.normal(size=AU_DIM)
    au_dir /= np.linalg.norm(au_dir) / np.sqrt(AU_DIM)
    emo_store = FeatureStore(out / "static" / "emotion")
    au_store = FeatureStore(out / "static" / "au")
    (out / "annotations").mkdir(parents=True, exist_ok=True)

    videos = []
    for i in range(num_videos):
        vid = f"video{i:03d}"
        fps = fps_list[i % len(fps_list)]
        frame_count = int(round(duration * fps))
        v_comp, a_comp = _components(rng), _components(rng)
        times = np.arange(frame_count) / fps
        valence = synthetic_track(v_comp, times)
        arousal = synthetic_track(a_comp, times)

        vdir = out / "videos" / vid / "frames"
        vdir.mkdir(parents=True, exist_ok=True)
        for t, frame in enumerate(render_frames(valence, arousal, frame_size, rng)):
            Image.fromarray(frame).save(vdir / f"{t:06d}.png")

        has_audio = i not in drop_audio
        audio = render_audio(
            lambda s, c=v_comp: synthetic_track(c, s),
            lambda s, c=a_comp: synthetic_track(c, s),
            frame_count / fps,
            rng,
        )
        if has_audio:
            wavfile.write(out / "videos" / vid / "audio.wav", SAMPLE_RATE, audio)

        # a short annotation gap per video exercises masking
        val_ann, aro_ann = valence.copy(), arousal.copy()
        gap = int(rng.integers(0, max(1, frame_count - 3)))
        val_ann[gap : gap + 3] = INVALID
        aro_ann[gap : gap + 3] = INVALID
        emotion = quantize_emotion(valence)
        emotion[rng.random(frame_count) < UNLABELED_FRACTION] = UNLABELED
        emotion[gap : gap + 3] = UNLABELED
        write_annotations(out / "annotations" / f"{vid}.csv", val_ann, aro_ann, emotion)

        emo = valence[:, None] * emo_dir[None, :] + rng.normal(0.0, 0.3, size=(frame_count, EMOTION_DIM))
        au = arousal[:, None] * au_dir[None, :] + rng.normal(0.0, 0.3, size=(frame_count, AU_DIM))
        emo_store.put(vid, emo)
        au_store.put(vid, au)

        videos.append(
            {
                "video_id": vid,
                "fps": fps,
                "frame_count": frame_count,
                "audio_sample_rate": SAMPLE_RATE,
                "has_audio": has_audio,
                "valence_components": v_comp,
                "arousal_components": a_comp,
            }
        )

    emo_store.save_index()
    au_store.save_index()
    write_json(out / "index.json", {"frame_size": frame_size, "seed": seed, "videos": videos})
    return out
