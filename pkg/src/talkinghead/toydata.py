"""Synthetic talking-head dataset for desk-scale training and verification.

Each sample is a procedurally rendered cartoon face whose mouth opening at
frame ``t`` is a fixed monotone function of the RMS of audio window ``t``,
plus a synthesized waveform made of word-like tone bursts.  Words are coded
by burst DURATION (in video frames), which survives per-clip peak
normalization; a mouth-height reader can therefore recover the transcript
from the rendered frames, giving the dataset a built-in lip-sync oracle.

The renderer and the readers share every geometry constant through
:class:`ToyGeometry`, and those constants are recorded in a ``dataset.json``
header next to the manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioClip, AudioFrameSeq, compute_stride, frame_audio, rms_per_frame
from .media import (
    SampleManifestEntry,
    SplitSpec,
    VideoSeq,
    write_manifest,
    write_sample,
)

__all__ = [
    "ToyGeometry",
    "ToyWord",
    "TOY_FPS",
    "TOY_SAMPLE_RATE",
    "TOY_VOCABULARY",
    "make_toy_dataset",
    "load_toy_header",
    "toy_mouth_height",
    "extract_mouth_heights",
    "render_toy_face",
    "transcribe_mouth_heights",
]

TOY_FPS = 25
TOY_SAMPLE_RATE = 8000  # stride 320, window 1280 samples at 0.16 s


@dataclass(frozen=True)
class ToyWord:
    word: str
    frames: int  # burst duration in video frames
    carrier_hz: float


# Durations spaced 3 frames apart so the duration decoder has +-1 frame slack.
TOY_VOCABULARY = (
    ToyWord("ba", 2, 500.0),
    ToyWord("dee", 5, 625.0),
    ToyWord("goo", 8, 800.0),
    ToyWord("mum", 11, 1000.0),
)

MOUTH_COLOR = np.array([-0.70, -0.95, -0.95], dtype=np.float32)  # dark red interior

_LEAD_GAP = 3     # silent frames before the first burst
_TRAIL_GAP = 3    # and after the last
_WORD_GAP = 4     # silent frames between bursts
_BLEED = 2        # windows past a burst edge that still read as open


@dataclass(frozen=True)
class ToyGeometry:
    """Shared renderer/reader constants, all in pixels of an HxW frame."""

    height: int
    width: int
    mouth_row: int
    mouth_width: int
    mouth_min_px: int
    mouth_max_px: int
    rms_saturation: float
    match_tolerance: float
    open_threshold_px: float

    @classmethod
    def for_size(cls, height: int, width: int) -> "ToyGeometry":
        scale = height / 64.0
        h_min = 1
        h_max = max(h_min + 3, int(round(10 * scale)))
        return cls(
            height=height,
            width=width,
            mouth_row=int(round(0.72 * height)),
            mouth_width=int(round(0.30 * width)),
            mouth_min_px=h_min,
            mouth_max_px=h_max,
            rms_saturation=0.5,
            match_tolerance=0.45,
            open_threshold_px=h_min + 0.6 * (h_max - h_min),
        )

    def to_json(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "mouth_row": self.mouth_row,
            "mouth_width": self.mouth_width,
            "mouth_min_px": self.mouth_min_px,
            "mouth_max_px": self.mouth_max_px,
            "rms_saturation": self.rms_saturation,
            "match_tolerance": self.match_tolerance,
            "open_threshold_px": self.open_threshold_px,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "ToyGeometry":
        return cls(**raw)


def toy_mouth_height(rms: float | np.ndarray, geometry: ToyGeometry) -> np.ndarray:
    """The declared monotone map from window RMS to mouth opening (pixels).

    height = h_min + (h_max - h_min) * min(1, rms / rho); strictly increasing
    below the saturation point rho, constant h_max above it.
    """
    rms = np.asarray(rms, dtype=np.float64)
    span = geometry.mouth_max_px - geometry.mouth_min_px
    return geometry.mouth_min_px + span * np.minimum(1.0, rms / geometry.rms_saturation)


def _quantized_height(rms: np.ndarray, geometry: ToyGeometry) -> np.ndarray:
    return np.floor(toy_mouth_height(rms, geometry) + 0.5).astype(np.int64)


@dataclass(frozen=True)
class _SubjectStyle:
    background: np.ndarray
    skin: np.ndarray
    eye: np.ndarray
    nose: np.ndarray
    face_rx: float
    face_ry: float
    eye_row: float
    eye_dx: float
    eye_radius: float

    @classmethod
    def for_subject(cls, subject_id: int, seed: int) -> "_SubjectStyle":
        rng = np.random.default_rng([seed, 1000 + subject_id])
        background = rng.uniform(-0.1, 0.5, size=3)
        r = rng.uniform(0.3, 0.85)
        g = r - rng.uniform(0.15, 0.35)
        b = g - rng.uniform(0.15, 0.30)
        skin = np.array([r, g, b])
        eye = np.array([rng.uniform(-1.0, -0.6), rng.uniform(-1.0, -0.4), rng.uniform(-1.0, -0.4)])
        nose = skin * 0.8 - 0.1
        return cls(
            background=background.astype(np.float32),
            skin=skin.astype(np.float32),
            eye=eye.astype(np.float32),
            nose=nose.astype(np.float32),
            face_rx=rng.uniform(0.34, 0.42),
            face_ry=rng.uniform(0.40, 0.48),
            eye_row=rng.uniform(0.36, 0.43),
            eye_dx=rng.uniform(0.14, 0.20),
            eye_radius=rng.uniform(0.04, 0.06),
        )


def render_toy_face(style: _SubjectStyle, mouth_px: int, geometry: ToyGeometry) -> np.ndarray:
    """Rasterize one frame; the mouth is a centered rectangle mouth_px rows tall."""
    h, w = geometry.height, geometry.width
    px = np.empty((h, w, 3), dtype=np.float32)
    px[:] = style.background

    yy, xx = np.ogrid[:h, :w]
    cx, cy = w / 2.0, h / 2.0 + 0.02 * h
    face = ((xx - cx) / (style.face_rx * w)) ** 2 + ((yy - cy) / (style.face_ry * h)) ** 2 <= 1.0
    px[face] = style.skin

    ey, er = style.eye_row * h, style.eye_radius * h
    for ex in (w / 2.0 - style.eye_dx * w, w / 2.0 + style.eye_dx * w):
        eye = (xx - ex) ** 2 + (yy - ey) ** 2 <= er**2
        px[eye] = style.eye

    nr0, nr1 = int(round(0.55 * h)), int(round(0.60 * h))
    nc0, nc1 = int(round(cx - 0.02 * w)), int(round(cx + 0.02 * w)) + 1
    px[nr0:nr1, nc0:nc1] = style.nose

    k = int(np.clip(mouth_px, geometry.mouth_min_px, geometry.mouth_max_px))
    r0 = geometry.mouth_row - k // 2
    c0 = int(round(w / 2.0 - geometry.mouth_width / 2.0))
    px[r0 : r0 + k, c0 : c0 + geometry.mouth_width] = MOUTH_COLOR
    return px


def _mouth_band(geometry: ToyGeometry) -> tuple[slice, slice]:
    half = geometry.mouth_max_px // 2 + 2
    rows = slice(geometry.mouth_row - half, geometry.mouth_row + half + 1)
    c_mid = geometry.width // 2
    quarter = max(1, geometry.mouth_width // 4)
    cols = slice(c_mid - quarter, c_mid + quarter)
    return rows, cols


def extract_mouth_heights(video: VideoSeq, geometry: ToyGeometry) -> np.ndarray:
    """Count mouth-colored rows in the mouth band of every frame."""
    rows, cols = _mouth_band(geometry)
    band = video.pixels[:, rows, cols, :]  # (T, R, C, 3)
    row_means = band.mean(axis=2)  # (T, R, 3)
    dist = np.linalg.norm(row_means - MOUTH_COLOR[None, None, :], axis=2)
    return (dist < geometry.match_tolerance).sum(axis=1)


def transcribe_mouth_heights(heights: np.ndarray, geometry: ToyGeometry) -> list[str]:
    """Decode burst-duration words from a per-frame mouth-height track."""
    open_mask = np.asarray(heights) >= geometry.open_threshold_px
    words: list[str] = []
    run = 0
    targets = [w.frames + _BLEED for w in TOY_VOCABULARY]
    for flag in list(open_mask) + [False]:
        if flag:
            run += 1
            continue
        if run > 2:  # runs of <= 2 open frames are noise, not words
            idx = int(np.argmin([abs(run - t) for t in targets]))
            words.append(TOY_VOCABULARY[idx].word)
        run = 0
    return words


def _sample_words(rng: np.random.Generator, n_frames: int) -> list[tuple[ToyWord, int]]:
    """Pick 1-2 vocabulary words and burst start frames that fit in n_frames."""
    budget = n_frames - _LEAD_GAP - _TRAIL_GAP
    feasible = [w for w in TOY_VOCABULARY if w.frames <= budget]
    if not feasible:
        raise ValueError(f"n_frames={n_frames} leaves no room for any vocabulary word")
    shortest = min(w.frames for w in feasible)
    n_words = 2 if (budget >= 2 * shortest + _WORD_GAP and rng.random() < 0.7) else 1
    while True:
        picks = [feasible[rng.integers(len(feasible))] for _ in range(n_words)]
        used = sum(w.frames for w in picks) + _WORD_GAP * (n_words - 1)
        if used <= budget:
            break
        n_words = 1  # single feasible word always fits
    slack = budget - used
    starts = []
    pos = _LEAD_GAP + int(rng.integers(slack + 1))
    for word in picks:
        starts.append((word, pos))
        pos += word.frames + _WORD_GAP
    return starts


def _synth_waveform(placed: list[tuple[ToyWord, int]], n_frames: int, stride: int) -> np.ndarray:
    samples = np.zeros(n_frames * stride, dtype=np.float64)
    rate = TOY_SAMPLE_RATE
    for word, start in placed:
        a, b = start * stride, (start + word.frames) * stride
        t = np.arange(b - a)
        samples[a:b] = np.sin(2.0 * np.pi * word.carrier_hz * t / rate)
    # pass through the 16-bit grid so the rendered heights match what a
    # consumer recomputes after the WAV round trip
    return np.round(samples * 32767.0) / 32767.0


def make_toy_dataset(
    out_dir: str | Path,
    n_subjects: int = 5,
    n_samples: int = 500,
    n_frames: int = 25,
    height: int = 64,
    width: int = 64,
    seed: int = 0,
) -> tuple[Path, dict]:
    """Materialize a toy dataset; returns (manifest path, header dict).

    Deterministic for a given seed: same seed, same bytes.
    """
    if min(n_subjects, n_samples, n_frames) < 1:
        raise ValueError("counts must be >= 1")
    if height % 2 or width % 2:
        raise ValueError("height and width must be even")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    geometry = ToyGeometry.for_size(height, width)
    stride = compute_stride(TOY_SAMPLE_RATE, TOY_FPS)
    styles = [_SubjectStyle.for_subject(s, seed) for s in range(n_subjects)]

    entries: list[SampleManifestEntry] = []
    for i in range(n_samples):
        subject = i % n_subjects
        rng = np.random.default_rng([seed, 2, i])
        placed = _sample_words(rng, n_frames)
        samples = _synth_waveform(placed, n_frames, stride)
        clip = AudioClip(samples=samples, sample_rate=TOY_SAMPLE_RATE)
        windows = frame_audio(clip, TOY_FPS)
        heights = _quantized_height(rms_per_frame(windows), geometry)
        frames = np.stack(
            [render_toy_face(styles[subject], int(k), geometry) for k in heights[:n_frames]]
        )
        video = VideoSeq(pixels=frames, fps=TOY_FPS)

        sample_id = f"s{subject:02d}_{i:04d}"
        frames_dir = out_dir / sample_id / "frames"
        audio_path = out_dir / sample_id / "audio.wav"
        write_sample(frames_dir, audio_path, video, clip)
        # manifest entries carry paths relative to the manifest file, so the
        # dataset directory can be moved or regenerated byte-identically
        entries.append(
            SampleManifestEntry(
                sample_id=sample_id,
                subject_id=subject,
                frames_path=Path(sample_id) / "frames",
                audio_path=Path(sample_id) / "audio.wav",
                fps=TOY_FPS,
                sample_rate=TOY_SAMPLE_RATE,
                transcript=[w.word for w, _ in placed],
            )
        )

    manifest_path = write_manifest(out_dir / "manifest.jsonl", entries)
    split = _toy_split(n_subjects)
    header = {
        "kind": "toy-talking-heads",
        "seed": seed,
        "fps": TOY_FPS,
        "sample_rate": TOY_SAMPLE_RATE,
        "n_subjects": n_subjects,
        "n_samples": n_samples,
        "frames_per_sample": n_frames,
        "geometry": geometry.to_json(),
        "vocabulary": [
            {"word": w.word, "frames": w.frames, "carrier_hz": w.carrier_hz}
            for w in TOY_VOCABULARY
        ],
        "split": {
            "train_ids": sorted(split.train_ids),
            "val_ids": sorted(split.val_ids),
            "test_ids": sorted(split.test_ids),
        },
    }
    with open(out_dir / "dataset.json", "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path, header


def _toy_split(n_subjects: int) -> SplitSpec:
    n_train = max(1, int(round(n_subjects * 0.6)))
    n_val = max(1, int(round(n_subjects * 0.2)))
    if n_train + n_val >= n_subjects:
        n_train = max(1, n_subjects - 2)
        n_val = 1 if n_subjects >= 2 else 0
    ids = list(range(n_subjects))
    return SplitSpec(
        train_ids=frozenset(ids[:n_train]),
        val_ids=frozenset(ids[n_train : n_train + n_val]),
        test_ids=frozenset(ids[n_train + n_val :]),
    )


def load_toy_header(dataset_dir: str | Path) -> dict:
    with open(Path(dataset_dir) / "dataset.json", encoding="utf-8") as fh:
        return json.load(fh)
