from .audio import (
    AudioFeatureTrack,
    VideoMetadata,
    extract_logmel_synced,
    frame_centers,
    mel_filterbank,
    stack_context,
    zero_track,
)
from .corpus import Corpus, build_clip, collate, iterate_batches, training_windows
from .store import FeatureStore, read_annotations, write_annotations
from .synth import synth_dataset, synthetic_track
from .transforms import augment, bbox_variance, smooth_landmarks
from .windows import Window, sample_windows, segment_eval, worker_rng

__all__ = [
    "AudioFeatureTrack",
    "Corpus",
    "FeatureStore",
    "VideoMetadata",
    "Window",
    "augment",
    "bbox_variance",
    "build_clip",
    "collate",
    "extract_logmel_synced",
    "frame_centers",
    "iterate_batches",
    "mel_filterbank",
    "read_annotations",
    "sample_windows",
    "segment_eval",
    "smooth_landmarks",
    "stack_context",
    "synth_dataset",
    "synthetic_track",
    "training_windows",
    "worker_rng",
    "write_annotations",
    "zero_track",
]
