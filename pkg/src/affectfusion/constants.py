"""Shared sentinels and fixed dimensions."""

# Sentinel for frames without a valence/arousal value or emotion label.
# Also the on-disk value in annotation CSVs.
INVALID = -5
UNLABELED = -5

NUM_EMOTIONS = 7
EMOTION_DIM = 512
AU_DIM = 256

MEL_BINS = 40
CONTEXT = 2
AUDIO_DIM = MEL_BINS * (2 * CONTEXT + 1)
SAMPLE_RATE = 16000
