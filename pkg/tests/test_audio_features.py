from fractions import Fraction

import numpy as np
import pytest

from affectfusion.data.audio import (
    VideoMetadata,
    extract_logmel_synced,
    frame_centers,
    hz_to_mel,
    mel_filterbank,
    mel_to_hz,
    stack_context,
)
from affectfusion.errors import AudioTooShort, ShapeMismatch
from oracles import rational_centers

SR = 16000


def tone(seconds, freq=440.0, sr=SR):
    t = np.arange(int(round(seconds * sr))) / sr
    return 0.5 * np.sin(2 * np.pi * freq * t)


@pytest.mark.parametrize("fps", [7.5, 15, 24, 25, 30, 29.97, 23.976])
def test_centers_within_half_sample_of_rational_grid(fps):
    n = int(round(600 * fps))  # ten minutes: no drift may accumulate
    centers = frame_centers(n, fps)
    exact = rational_centers(n, fps)
    worst = max(abs(Fraction(int(c)) - e) for c, e in zip(centers, exact))
    assert worst <= Fraction(1, 2)


def test_centers_round_half_up():
    # 16000 / 30 * i = 533.33 * i; i=3 -> 1600 exact, i=1 -> 533.33 -> 533, i=2 -> 1066.67 -> 1067
    assert frame_centers(4, 30).tolist() == [0, 533, 1067, 1600]
    # 16000 / 24 = 666.67; centers straddle .5 only through exact fractions
    assert frame_centers(3, 24).tolist() == [0, 667, 1333]


def test_fps_25_hop_is_640():
    centers = frame_centers(250, 25)
    assert set(np.diff(centers).tolist()) == {640}


def test_fps_30_centers():
    centers = frame_centers(30, 30)
    expected = [int(Fraction(1600 * i, 3) + Fraction(1, 2)) for i in range(30)]
    assert centers.tolist() == expected


@pytest.mark.parametrize("fps", [7.5, 15, 24, 25, 30])
def test_feature_count_for_ten_seconds(fps):
    n = int(round(10 * fps))
    track = extract_logmel_synced(tone(10.0), VideoMetadata("v", fps, n))
    assert track.features.shape == (n, 200)
    assert track.mask.all()
    assert np.isfinite(track.features).all()


def test_context_edges_are_zero_blocks():
    track = extract_logmel_synced(tone(1.0), VideoMetadata("v", 30, 30))
    first, last = track.features[0], track.features[-1]
    assert np.all(first[:80] == 0.0) and np.all(first[80:120] != 0.0)
    assert np.all(last[120:] == 0.0)
    # the middle block of frame i reappears as the i-1 block of frame i+1
    np.testing.assert_array_equal(track.features[5, 80:120], track.features[6, 40:80])


def test_stack_context_layout():
    base = np.arange(12, dtype=float).reshape(4, 3) + 1
    out = stack_context(base, 2)
    assert out.shape == (4, 15)
    np.testing.assert_array_equal(out[1], np.concatenate([np.zeros(3), base[0], base[1], base[2], base[3]]))


def test_short_tail_is_zeroed_and_masked():
    fps, n = 25, 50
    wave = tone(1.5)  # covers frames 0..37
    track = extract_logmel_synced(wave, VideoMetadata("v", fps, n))
    expected = frame_centers(n, fps) < len(wave)
    np.testing.assert_array_equal(track.mask, expected)
    assert np.all(track.features[~track.mask] == 0.0)
    assert track.mask.sum() == 38


def test_audio_too_short():
    with pytest.raises(AudioTooShort):
        extract_logmel_synced(tone(0.9), VideoMetadata("v", 25, 50))
    # exactly half is accepted
    extract_logmel_synced(tone(1.0), VideoMetadata("v", 25, 50))


def test_stereo_rejected():
    with pytest.raises(ShapeMismatch):
        extract_logmel_synced(np.zeros((2, 16000)), VideoMetadata("v", 25, 25))


def test_silence_hits_log_floor():
    track = extract_logmel_synced(np.zeros(16000), VideoMetadata("v", 25, 25))
    np.testing.assert_allclose(track.features[10, 80:120], np.log(1e-10))


def test_tone_peak_in_matching_band():
    fb = mel_filterbank(40, 512, SR)
    freq = 1000.0
    track = extract_logmel_synced(tone(1.0, freq), VideoMetadata("v", 25, 25))
    band = int(np.argmax(track.features[10, 80:120]))
    fft_bin = int(round(freq * 512 / SR))
    assert fb[band, fft_bin] == pytest.approx(fb[:, fft_bin].max())


def test_mel_scale_round_trip_and_filterbank():
    f = np.array([0.0, 100.0, 1000.0, 8000.0])
    np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, atol=1e-9)
    assert hz_to_mel(1000.0) == pytest.approx(999.985, abs=1e-3)
    fb = mel_filterbank(40, 512, SR)
    assert fb.shape == (40, 257)
    assert fb.min() >= 0.0 and fb.max() <= 1.0
    assert np.all(fb.max(axis=1) > 0.0)


def test_metadata_validation():
    with pytest.raises(ValueError):
        VideoMetadata("v", 0.0, 10)
    with pytest.raises(ValueError):
        VideoMetadata("v", 25, -1)
