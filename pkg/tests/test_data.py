import filecmp
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affectfusion.constants import INVALID, UNLABELED
from affectfusion.data import (
    Corpus,
    build_clip,
    collate,
    iterate_batches,
    sample_windows,
    segment_eval,
    synth_dataset,
    training_windows,
)
from affectfusion.data.store import FeatureStore, read_annotations, read_json, write_annotations
from affectfusion.data.synth import quantize_emotion, synthetic_track
from affectfusion.data.transforms import augment, bbox_variance, smooth_landmarks
from affectfusion.data.windows import worker_rng
from affectfusion.errors import ShapeMismatch
from affectfusion.metrics import ccc
from oracles import gaussian_smooth_oracle


class TestWindows:
    def test_uniform_range(self):
        starts = sample_windows(100, 32, 500, np.random.default_rng(0))
        assert len(starts) == 500
        assert min(starts) == 0 and max(starts) == 68

    def test_exact_length(self):
        assert set(sample_windows(32, 32, 20, np.random.default_rng(0))) == {0}

    def test_short_video(self):
        assert sample_windows(10, 32, 20, np.random.default_rng(0)) == [0]

    def test_zero_frames_rejected(self):
        with pytest.raises(ValueError):
            sample_windows(0, 32, 1, np.random.default_rng(0))

    def test_segment_eval(self):
        windows = segment_eval(100, 32)
        assert [w.start for w in windows] == [0, 32, 64, 96]
        assert windows[-1].valid == 4 and windows[-1].length == 32
        assert len(segment_eval(32, 32)) == 1

    def test_segment_eval_skips_unlabeled(self, caplog):
        with caplog.at_level(logging.WARNING):
            assert segment_eval(50, 32, annotated=0, video_id="v9") == []
        assert "v9" in caplog.text

    @given(st.integers(1, 500), st.integers(1, 64))
    @settings(max_examples=100)
    def test_segment_eval_covers_once(self, n, t):
        covered = np.zeros(n, dtype=int)
        for w in segment_eval(n, t):
            covered[w.start : w.stop] += 1
        assert np.all(covered == 1)

    def test_worker_rng_keyed(self):
        a = worker_rng(1, "video000", 0).integers(0, 1 << 30, 4)
        assert np.array_equal(a, worker_rng(1, "video000", 0).integers(0, 1 << 30, 4))
        assert not np.array_equal(a, worker_rng(1, "video000", 1).integers(0, 1 << 30, 4))
        assert not np.array_equal(a, worker_rng(1, "video001", 0).integers(0, 1 << 30, 4))


class TestAugment:
    frames = np.random.default_rng(0).uniform(-1, 1, size=(6, 3, 128, 128)).astype(np.float32)

    def test_eval_central_crop(self):
        out, offset, flip = augment(self.frames, None, "eval")
        assert offset == (8, 8) and not flip
        np.testing.assert_array_equal(out, self.frames[:, :, 8:120, 8:120])

    def test_train_same_offset_and_flip_for_clip(self):
        for seed in range(20):
            out, (top, left), flip = augment(self.frames, np.random.default_rng(seed), "train")
            ref = self.frames[:, :, top : top + 112, left : left + 112]
            if flip:
                ref = ref[..., ::-1]
            np.testing.assert_array_equal(out, ref)

    def test_both_flip_outcomes_occur(self):
        flips = {augment(self.frames, np.random.default_rng(s), "train")[2] for s in range(30)}
        assert flips == {True, False}

    def test_shape_checked(self):
        with pytest.raises(ShapeMismatch):
            augment(self.frames[:, :, :100, :100], None, "eval")


class TestLandmarks:
    def test_matches_convolution_oracle(self):
        rng = np.random.default_rng(0)
        lm = rng.normal(size=(40, 5, 2))
        out = smooth_landmarks(lm, bbox_var=1.0, sigma=1.5)
        for j in range(5):
            for c in range(2):
                np.testing.assert_allclose(out[:, j, c], gaussian_smooth_oracle(lm[:, j, c], 1.5), atol=1e-12)

    def test_impulse_sum_preserved(self):
        lm = np.zeros((31, 5, 2))
        lm[15] = 1.0
        out = smooth_landmarks(lm, bbox_var=0.0, sigma=2.0)
        assert abs(out.sum(axis=0) - 1.0).max() <= 1e-9
        assert out[15, 0, 0] < 1.0

    def test_constant_unchanged(self):
        lm = np.full((20, 5, 2), 3.25)
        np.testing.assert_allclose(smooth_landmarks(lm, 0.0, sigma=4.0), lm, atol=1e-12)

    def test_gate_returns_input(self):
        lm = np.random.default_rng(1).normal(size=(10, 5, 2))
        out = smooth_landmarks(lm, bbox_var=25.0, threshold=25.0)
        assert out.tobytes() == lm.tobytes()

    def test_bbox_variance(self):
        boxes = np.array([[0, 0, 10, 10], [2, 2, 12, 12]], dtype=float)
        assert bbox_variance(boxes) == pytest.approx(1.0)


class TestStore:
    def test_annotations_round_trip(self, tmp_path):
        v = np.array([0.5, INVALID, -0.25])
        a = np.array([0.1, INVALID, 1.0])
        e = np.array([3, UNLABELED, 6])
        write_annotations(tmp_path / "x.csv", v, a, e)
        lab = read_annotations(tmp_path / "x.csv", 5)
        np.testing.assert_allclose(lab["valence"], [0.5, INVALID, -0.25, INVALID, INVALID])
        assert lab["emotion"].tolist() == [3, UNLABELED, 6, UNLABELED, UNLABELED]

    def test_feature_store_round_trip(self, tmp_path):
        store = FeatureStore(tmp_path / "s")
        arr = np.random.default_rng(0).normal(size=(7, 200)).astype(np.float32)
        store.put("a", arr, missing_audio=False)
        store.meta = {"dim": 200}
        store.save_index()
        again = FeatureStore(tmp_path / "s")
        assert "a" in again and len(again) == 1 and again.meta == {"dim": 200}
        np.testing.assert_array_equal(again.get("a"), arr)


class TestSynth:
    def test_byte_identical(self, tmp_path):
        a = synth_dataset(tmp_path / "a", seed=5, num_videos=2, duration=0.5, frame_size=32)
        b = synth_dataset(tmp_path / "b", seed=5, num_videos=2, duration=0.5, frame_size=32)
        files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        assert files_a == files_b and files_a
        _, mismatch, errors = filecmp.cmpfiles(a, b, [str(p) for p in files_a], shallow=False)
        assert mismatch == [] and errors == []

    def test_stored_track_is_closed_form(self, small_corpus_dir):
        corpus = Corpus(small_corpus_dir)
        entry = corpus.entries["video000"]
        times = np.arange(entry["frame_count"]) / entry["fps"]
        expected = synthetic_track(entry["valence_components"], times)
        lab = corpus.annotations("video000")["valence"]
        valid = lab != INVALID
        assert (~valid).sum() == 3
        np.testing.assert_allclose(lab[valid], expected[valid], atol=1e-6)

    def test_emotion_quantized_from_valence(self, small_corpus):
        lab = small_corpus.annotations("video001")
        labeled = lab["emotion"] != UNLABELED
        assert 0 < labeled.mean() < 1
        q = quantize_emotion(lab["valence"][labeled].astype(np.float64))
        assert np.mean(q == lab["emotion"][labeled]) > 0.95  # rounding to 6 decimals may shift a bin edge

    def test_linear_probe_on_intensity(self, small_corpus):
        xs, ys = [], []
        for vid in small_corpus.video_ids:
            frames, _ = small_corpus.frames(vid)
            lab = small_corpus.annotations(vid)["valence"]
            valid = lab != INVALID
            xs.append(frames.reshape(len(frames), -1).mean(axis=1)[valid] / 255.0)
            ys.append(lab[valid])
        x, y = np.concatenate(xs), np.concatenate(ys).astype(np.float64)
        slope, intercept = np.polyfit(x, y, 1)
        assert ccc(slope * x + intercept, y) > 0.95

    def test_audio_dropped(self, small_corpus_dir):
        index = read_json(small_corpus_dir / "index.json")
        assert [v["has_audio"] for v in index["videos"]] == [True, True, True, False]
        assert not (small_corpus_dir / "videos" / "video003" / "audio.wav").exists()


class TestClips:
    def test_shapes_and_ranges(self, small_corpus):
        clip = build_clip(small_corpus, "video000", 0, 16, "eval", None, crop=32)
        assert clip["frames"].shape == (16, 3, 32, 32)
        assert clip["frames"].min() >= -1.0 and clip["frames"].max() <= 1.0
        assert clip["audio"].shape == (16, 200)
        assert clip["static_emotion"].shape == (16, 512) and clip["static_au"].shape == (16, 256)
        assert clip["frame_mask"].all() and clip["audio_mask"].all()

    def test_padded_tail_is_zero_and_masked(self, small_corpus):
        n = small_corpus.meta["video000"].frame_count
        clip = build_clip(small_corpus, "video000", n - 5, 16, "eval", None, crop=32)
        tail = slice(5, 16)
        assert not clip["frame_mask"][tail].any() and not clip["audio_mask"][tail].any()
        for key in ("frames", "audio", "static_emotion", "static_au"):
            assert np.all(clip[key][tail] == 0.0), key
        assert np.all(clip["valence"][tail] == INVALID) and not clip["valence_mask"][tail].any()
        assert np.all(clip["emotion"][tail] == UNLABELED)

    def test_missing_audio_zero_filled(self, small_corpus):
        track, missing = small_corpus.raw_audio("video003")
        assert missing and not track.mask.any()
        clip = build_clip(small_corpus, "video003", 0, 16, "eval", None, crop=32)
        assert np.all(clip["audio"] == 0.0) and not clip["audio_mask"].any()

    def test_audio_normalized_on_valid_frames(self, small_corpus):
        feats = np.concatenate([small_corpus.audio(v).features[small_corpus.audio(v).mask] for v in small_corpus.video_ids])
        np.testing.assert_allclose(feats.mean(axis=0), 0.0, atol=1e-3)
        np.testing.assert_allclose(feats.std(axis=0), 1.0, atol=1e-2)

    def test_training_batches_deterministic(self, small_corpus):
        def first_batch():
            windows = training_windows(small_corpus, 16, 2, seed=3, epoch=1)
            return next(iterate_batches(small_corpus, windows, 4, 16, 3, 1, 32))

        a, b = first_batch(), first_batch()
        assert a["video_id"] == b["video_id"] and a["start"] == b["start"]
        for key, value in a.items():
            if hasattr(value, "shape"):
                assert (value == b[key]).all(), key
        assert a["frames"].shape == (4, 16, 3, 32, 32)

    def test_epochs_differ(self, small_corpus):
        w0 = training_windows(small_corpus, 16, 2, seed=3, epoch=0)
        w1 = training_windows(small_corpus, 16, 2, seed=3, epoch=1)
        assert len(w0) == 8 and w0 != w1

    def test_collate_stacks(self, small_corpus):
        clips = [build_clip(small_corpus, v, 0, 8, "eval", None, crop=32) for v in small_corpus.video_ids[:2]]
        batch = collate(clips)
        assert tuple(batch["frames"].shape) == (2, 8, 3, 32, 32)
        assert batch["video_id"] == small_corpus.video_ids[:2]
