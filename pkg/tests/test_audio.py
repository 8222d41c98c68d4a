"""Waveform framing contracts.

The load-bearing property is the one-to-one correspondence between audio
windows and video frames; everything else (padding symmetry, stride
arithmetic, normalization) exists to support it.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from talkinghead.audio import (
    AudioClip,
    AudioFrameSeq,
    AudioRateError,
    FramingConfigError,
    compute_stride,
    frame_audio,
    peak_normalize,
    resample_to_divisible,
    rms_per_frame,
)


def test_stride_50khz_25fps():
    assert compute_stride(50_000, 25) == 2000


def test_stride_16khz_25fps():
    assert compute_stride(16_000, 25) == 640


def test_stride_44100_30fps_exact():
    # 44100 / 30 = 1470 exactly: accepted
    assert compute_stride(44_100, 30) == 1470


def test_stride_44100_29fps_rejected():
    with pytest.raises(AudioRateError, match="resample"):
        compute_stride(44_100, 29)


def test_stride_requires_positive_rates():
    with pytest.raises(ValueError):
        compute_stride(0, 25)
    with pytest.raises(ValueError):
        compute_stride(16_000, -1)


@given(
    stride=st.integers(min_value=1, max_value=4000),
    rate_video=st.integers(min_value=1, max_value=60),
)
def test_stride_is_exact_ratio(stride, rate_video):
    assert compute_stride(stride * rate_video, rate_video) == stride


def _clip(samples, rate=16_000):
    return AudioClip(samples=np.asarray(samples, dtype=np.float64), sample_rate=rate)


def test_frame_count_8000_sample_windows():
    # 3 s at 50 kHz, 25 fps: 75 windows of 0.16 s * 50000 = 8000 samples
    clip = _clip(np.random.default_rng(0).uniform(-1, 1, 150_000), rate=50_000)
    seq = frame_audio(clip, 25)
    assert seq.frames.shape == (75, 8000)
    assert seq.stride == 2000


def test_single_stride_clip_gives_one_centered_window():
    clip = _clip(np.ones(640))
    seq = frame_audio(clip, 25)
    assert len(seq) == 1
    pad = (seq.frame_len - seq.stride) // 2
    window = seq.frames[0]
    assert np.all(window[:pad] == 0.0)
    assert np.all(window[pad : pad + 640] == 1.0)
    assert np.all(window[pad + 640 :] == 0.0)


def test_zero_clip_frames_are_zero():
    seq = frame_audio(_clip(np.zeros(6400)), 25)
    assert np.all(seq.frames == 0.0)


def test_window_shorter_than_stride_rejected():
    clip = _clip(np.ones(16_000))
    with pytest.raises(FramingConfigError, match="overlap"):
        frame_audio(clip, 25, window_sec=0.01)  # 160 samples < stride 640


def test_non_integbreak_window_rejected():
    clip = _clip(np.ones(16_000), rate=16_000)
    with pytest.raises(FramingConfigError):
        frame_audio(clip, 25, window_sec=0.16001)


def test_empty_clip_rejected():
    with pytest.raises(ValueError):
        frame_audio(_clip(np.zeros(0)), 25)


# the one-to-one framing law, randomized across (rate, fps, T)
@settings(max_examples=200, deadline=None)
@given(
    stride=st.integers(min_value=40, max_value=2500),
    rate_video=st.integers(min_value=5, max_value=60),
    n_frames=st.integers(min_value=1, max_value=200),
    data=st.data(),
)
def test_framing_law_length_T_stride_gives_T_windows(stride, rate_video, n_frames, data):
    rate = stride * rate_video
    # pick a window length that is valid: >= stride, integer samples
    frame_len = data.draw(st.integers(min_value=stride, max_value=4 * stride))
    window_sec = frame_len / rate
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    clip = _clip(rng.uniform(-1, 1, n_frames * stride), rate=rate)
    seq = frame_audio(clip, rate_video, window_sec=window_sec)
    assert len(seq) == n_frames
    assert seq.frame_len == frame_len


@given(
    n_frames=st.integers(min_value=1, max_value=40),
    seed=st.integers(0, 2**31),
)
@settings(max_examples=60, deadline=None)
def test_overlap_removed_concatenation_reconstructs_waveform(n_frames, seed):
    rng = np.random.default_rng(seed)
    samples = rng.uniform(-1, 1, n_frames * 640)
    seq = frame_audio(_clip(samples), 25, normalize=False)
    pad = (seq.frame_len - seq.stride) // 2
    middles = seq.frames[:, pad : pad + seq.stride]
    rebuilt = middles.reshape(-1)[: len(samples)]
    np.testing.assert_array_equal(rebuilt, samples)


def test_prepending_stride_zeros_shifts_by_one_window():
    rng = np.random.default_rng(3)
    samples = rng.uniform(-1, 1, 5 * 640)
    base = frame_audio(_clip(samples), 25, normalize=False)
    shifted = frame_audio(_clip(np.concatenate([np.zeros(640), samples])), 25, normalize=False)
    assert len(shifted) == len(base) + 1
    np.testing.assert_array_equal(shifted.frames[1:], base.frames)


def test_peak_normalize_scales_to_unit_peak():
    out = peak_normalize(np.array([0.25, -0.5, 0.1]))
    assert np.max(np.abs(out)) == 1.0
    np.testing.assert_allclose(out, [0.5, -1.0, 0.2])


def test_peak_normalize_zero_signal_unchanged():
    out = peak_normalize(np.zeros(10))
    assert np.all(out == 0.0)


def test_rms_zero_frames():
    seq = frame_audio(_clip(np.zeros(3 * 640)), 25)
    np.testing.assert_array_equal(rms_per_frame(seq), np.zeros(3))


def test_rms_constant_frame_is_abs_value():
    frames = np.full((4, 100), -0.3)
    seq = AudioFrameSeq(frames=frames, stride=50, frame_len=100, source_rate=1000)
    np.testing.assert_allclose(rms_per_frame(seq), 0.3)


def test_rms_unit_impulse_is_inv_sqrt_len():
    frames = np.zeros((1, 256))
    frames[0, 17] = 1.0
    seq = AudioFrameSeq(frames=frames, stride=128, frame_len=256, source_rate=1000)
    np.testing.assert_allclose(rms_per_frame(seq), 1.0 / math.sqrt(256))


def test_clip_rejects_non_finite():
    with pytest.raises(ValueError, match="finite"):
        _clip([0.0, np.nan, 0.2])


def test_clip_rejects_2d():
    with pytest.raises(ValueError):
        _clip(np.zeros((4, 4)))


def test_resample_to_divisible_noop_when_divisible():
    clip = _clip(np.ones(16_000), rate=16_000)
    out = resample_to_divisible(clip, 25)
    assert out.sample_rate == 16_000
    assert out is clip


def test_resample_to_divisible_fixes_rate():
    rng = np.random.default_rng(0)
    clip = _clip(rng.uniform(-1, 1, 44_100), rate=44_100)
    out = resample_to_divisible(clip, 29)
    assert out.sample_rate % 29 == 0
    # 0.16 s must stay an integer number of samples at the new rate
    assert (out.sample_rate * 0.16) % 1 == pytest.approx(0.0, abs=1e-9)
    # duration approximately preserved
    assert out.duration == pytest.approx(clip.duration, rel=0.02)
