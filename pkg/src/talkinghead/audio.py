"""Waveform framing: one overlapping audio window per video frame.

The synthesis model consumes raw audio cut into windows that line up
one-to-one with video frames.  The cutting stride is the exact ratio of the
audio rate to the video rate; rate pairs that do not divide evenly are
rejected instead of silently resampled, because implicit resampling would
corrupt audio-visual sync.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AudioClip",
    "AudioFrameSeq",
    "AudioRateError",
    "FramingConfigError",
    "compute_stride",
    "frame_audio",
    "peak_normalize",
    "resample_to_divisible",
    "rms_per_frame",
]

DEFAULT_WINDOW_SEC = 0.16


class AudioRateError(ValueError):
    """Audio rate is not an integer multiple of the video rate."""


class FramingConfigError(ValueError):
    """Window configuration that cannot produce overlapping frames."""


@dataclass(frozen=True)
class AudioClip:
    """A mono waveform with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class AudioFrameSeq:
    """Overlapping windows of a waveform, one per video frame.

    ``frames`` is a (T, L) array cut from the symmetrically zero-padded
    source waveform; window ``t`` covers padded samples
    ``[t * stride, t * stride + L)``.
    """

    frames: np.ndarray
    stride: int
    frame_len: int
    source_rate: int

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise ValueError(f"frames must be a (T, L) array, got shape {frames.shape}")
        if frames.shape[0] < 1:
            raise ValueError("need at least one frame")
        if frames.shape[1] != self.frame_len:
            raise ValueError(
                f"frame_len {self.frame_len} does not match array width {frames.shape[1]}"
            )
        if self.stride <= 0 or self.frame_len <= 0:
            raise ValueError("stride and frame_len must be positive")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return self.frames.shape[0]


def compute_stride(rate_audio: int, rate_video: int) -> int:
    """Samples between consecutive windows: rate_audio / rate_video, exact.

    Raises :class:`AudioRateError` when the rates do not divide evenly;
    rounding here would slowly drift the windows out of sync with the video.
    """
    if rate_audio <= 0 or rate_video <= 0:
        raise ValueError("rates must be positive")
    if rate_audio % rate_video != 0:
        raise AudioRateError(
            f"audio rate {rate_audio} Hz is not divisible by the video rate "
            f"{rate_video} fps; resample the audio first (e.g. with "
            "resample_to_divisible or the CLI --resample flag)"
        )
    return rate_audio // rate_video


def peak_normalize(samples: np.ndarray) -> np.ndarray:
    """Scale so that max |s| = 1.  An all-zero signal is returned unchanged."""
    samples = np.asarray(samples, dtype=np.float64)
    peak = np.max(np.abs(samples)) if samples.size else 0.0
    if peak == 0.0:
        return samples.copy()
    return samples / peak


def frame_audio(
    clip: AudioClip,
    rate_video: int,
    window_sec: float = DEFAULT_WINDOW_SEC,
    normalize: bool = True,
) -> AudioFrameSeq:
    """Cut a waveform into overlapping per-video-frame windows.

    The waveform is zero-padded by (L - stride) / 2 samples on each end so
    that window ``t`` stays centered on video frame ``t``; the tail is
    additionally padded to complete the last window.  A waveform of exactly
    ``T * stride`` samples yields exactly ``T`` windows.
    """
    if len(clip) == 0:
        raise ValueError("cannot frame an empty clip")
    stride = compute_stride(clip.sample_rate, rate_video)
    frame_len_f = window_sec * clip.sample_rate
    frame_len = int(round(frame_len_f))
    if abs(frame_len_f - frame_len) > 1e-6:
        raise FramingConfigError(
            f"window of {window_sec} s is not an integer number of samples at "
            f"{clip.sample_rate} Hz"
        )
    if frame_len < stride:
        raise FramingConfigError(
            f"window length {frame_len} is shorter than the stride {stride}; "
            "windows would not overlap"
        )

    samples = peak_normalize(clip.samples) if normalize else clip.samples
    n = samples.shape[0]
    n_frames = math.ceil(n / stride)
    pad_left = (frame_len - stride) // 2
    pad_right = (n_frames - 1) * stride + frame_len - n - pad_left
    padded = np.concatenate(
        [np.zeros(pad_left), samples, np.zeros(pad_right)]
    )

    offsets = np.arange(n_frames)[:, None] * stride + np.arange(frame_len)[None, :]
    frames = padded[offsets]
    return AudioFrameSeq(
        frames=frames, stride=stride, frame_len=frame_len, source_rate=clip.sample_rate
    )


def rms_per_frame(seq: AudioFrameSeq) -> np.ndarray:
    """Root-mean-square energy of every window, as a T-vector."""
    return np.sqrt(np.mean(np.square(seq.frames), axis=1))


def resample_to_divisible(clip: AudioClip, rate_video: int, window_sec: float = DEFAULT_WINDOW_SEC) -> AudioClip:
    """Polyphase-resample to the nearest rate divisible by the video rate.

    The target rate must also make ``window_sec`` an integer number of
    samples, so candidates step through multiples of lcm(rate_video, q)
    where ``window_sec = p/q`` in lowest terms.
    """
    from fractions import Fraction

    from scipy.signal import resample_poly

    if clip.sample_rate % rate_video == 0:
        window = window_sec * clip.sample_rate
        if abs(window - round(window)) <= 1e-6:
            return clip

    q = Fraction(window_sec).limit_denominator(10_000).denominator
    step = abs(rate_video * q) // math.gcd(rate_video, q)
    target = max(step, int(round(clip.sample_rate / step)) * step)
    g = math.gcd(target, clip.sample_rate)
    resampled = resample_poly(clip.samples, target // g, clip.sample_rate // g)
    return AudioClip(samples=np.asarray(resampled, dtype=np.float64), sample_rate=target)
