"""Dataset bookkeeping: manifests, sample I/O, preprocessing, subject splits.

A dataset is a JSON-lines manifest, one object per sample, pointing at a
directory of PNG frames (``frame_%05d.png``) and a mono 16-bit PCM WAV.
Pixels are normalized linearly from [0, 255] to [-1, 1] on load; faces are
assumed to be pre-aligned (alignment is an external hook, see
:func:`run_alignment_hook`).
"""

from __future__ import annotations

import json
import os
import subprocess
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .audio import AudioClip

__all__ = [
    "Frame",
    "VideoSeq",
    "SampleManifestEntry",
    "SplitSpec",
    "ManifestError",
    "MediaValidationError",
    "GRID_SPLIT",
    "TCDTIMIT_SPLIT",
    "load_manifest",
    "write_manifest",
    "load_sample",
    "write_sample",
    "load_frame_dir",
    "load_image",
    "load_wav",
    "write_wav",
    "write_frame_png",
    "levels_to_unit",
    "unit_to_levels",
    "mirror_augment",
    "split_subjects",
    "run_alignment_hook",
]

FRAME_PATTERN = "frame_%05d.png"


class ManifestError(ValueError):
    """Malformed manifest file."""


class MediaValidationError(ValueError):
    """Media files missing or inconsistent with their manifest entry."""


@dataclass(frozen=True)
class Frame:
    """One image as an (H, W, 3) float array with values in [-1, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.ascontiguousarray(self.pixels, dtype=np.float32)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixels, got shape {pixels.shape}")
        h, w = pixels.shape[:2]
        if h % 2 or w % 2:
            raise ValueError(f"frame sides must be even, got {h}x{w}")
        lo, hi = float(pixels.min()), float(pixels.max())
        if lo < -1.0 - 1e-5 or hi > 1.0 + 1e-5:
            raise ValueError(f"pixel values outside [-1, 1]: range [{lo}, {hi}]")
        object.__setattr__(self, "pixels", np.clip(pixels, -1.0, 1.0))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class VideoSeq:
    """An ordered stack of same-sized frames plus the frame rate."""

    pixels: np.ndarray  # (T, H, W, 3) in [-1, 1]
    fps: int

    def __post_init__(self):
        pixels = np.ascontiguousarray(self.pixels, dtype=np.float32)
        if pixels.ndim != 4 or pixels.shape[3] != 3:
            raise ValueError(f"expected (T, H, W, 3) pixels, got shape {pixels.shape}")
        if pixels.shape[0] < 1:
            raise ValueError("a video needs at least one frame")
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        Frame(pixels[0])  # side checks (even sides, range) on a representative
        object.__setattr__(self, "pixels", pixels)

    @classmethod
    def from_frames(cls, frames: list[Frame], fps: int) -> "VideoSeq":
        shapes = {f.pixels.shape for f in frames}
        if len(shapes) > 1:
            raise ValueError(f"frames disagree on shape: {sorted(shapes)}")
        return cls(np.stack([f.pixels for f in frames]), fps)

    def __len__(self) -> int:
        return self.pixels.shape[0]

    def __getitem__(self, t: int) -> Frame:
        return Frame(self.pixels[t])

    @property
    def frames(self) -> list[Frame]:
        return [Frame(p) for p in self.pixels]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True)
class SampleManifestEntry:
    sample_id: str
    subject_id: int
    frames_path: Path
    audio_path: Path
    fps: int
    sample_rate: int
    transcript: list[str] | None = None

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.transcript is not None and any(not w for w in self.transcript):
            raise ValueError("transcript words must be nonempty")
        object.__setattr__(self, "frames_path", Path(self.frames_path))
        object.__setattr__(self, "audio_path", Path(self.audio_path))

    def to_json(self) -> dict:
        out = {
            "sample_id": self.sample_id,
            "subject_id": self.subject_id,
            "frames_path": str(self.frames_path),
            "audio_path": str(self.audio_path),
            "fps": self.fps,
            "sample_rate": self.sample_rate,
        }
        if self.transcript is not None:
            out["transcript"] = list(self.transcript)
        return out


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint subject-id sets for train / validation / test."""

    train_ids: frozenset[int]
    val_ids: frozenset[int]
    test_ids: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "train_ids", frozenset(self.train_ids))
        object.__setattr__(self, "val_ids", frozenset(self.val_ids))
        object.__setattr__(self, "test_ids", frozenset(self.test_ids))
        overlap = (
            (self.train_ids & self.val_ids)
            | (self.train_ids & self.test_ids)
            | (self.val_ids & self.test_ids)
        )
        if overlap:
            raise ValueError(f"splits share subject ids: {sorted(overlap)}")

    @property
    def all_ids(self) -> frozenset[int]:
        return self.train_ids | self.val_ids | self.test_ids


# Subject splits used throughout the experiments (appendix tables).
GRID_SPLIT = SplitSpec(
    train_ids=frozenset({1, 3, 5, 6, 7, 8, 10, 12, 14, 16, 17, 22, 26, 28, 32}),
    val_ids=frozenset({9, 20, 23, 27, 29, 30, 34}),
    test_ids=frozenset({2, 4, 11, 13, 15, 18, 19, 25, 31, 33}),
)
TCDTIMIT_SPLIT = SplitSpec(
    train_ids=frozenset(
        {1, 2, 3, 4, 5, 6, 7, 10, 11, 12, 13, 14, 16, 17, 19, 20, 21, 22, 23, 24,
         26, 27, 29, 30, 31, 32, 35, 37, 38, 39, 40, 42, 43, 46, 47, 48, 50, 51,
         52, 53, 57, 59}
    ),
    val_ids=frozenset({34, 36, 44, 45, 49, 54, 58}),
    test_ids=frozenset({8, 9, 15, 18, 25, 28, 33, 41, 55, 56}),
)

_REQUIRED_FIELDS = ("sample_id", "subject_id", "frames_path", "audio_path", "fps", "sample_rate")


def load_manifest(path: str | Path, check_media: bool = True) -> list[SampleManifestEntry]:
    """Read a JSON-lines manifest, one validated entry per line, in file order.

    Raises :class:`ManifestError` naming the offending line for malformed
    JSON or missing fields, and :class:`MediaValidationError` listing every
    missing media path when ``check_media`` is set.
    """
    path = Path(path)
    entries: list[SampleManifestEntry] = []
    base = path.parent
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            if not isinstance(raw, dict):
                raise ManifestError(f"{path}:{lineno}: entry must be a JSON object")
            missing = [k for k in _REQUIRED_FIELDS if k not in raw]
            if missing:
                raise ManifestError(
                    f"{path}:{lineno}: missing field(s) {', '.join(missing)}"
                )
            try:
                entry = SampleManifestEntry(
                    sample_id=str(raw["sample_id"]),
                    subject_id=int(raw["subject_id"]),
                    frames_path=_resolve(base, raw["frames_path"]),
                    audio_path=_resolve(base, raw["audio_path"]),
                    fps=int(raw["fps"]),
                    sample_rate=int(raw["sample_rate"]),
                    transcript=list(raw["transcript"]) if raw.get("transcript") is not None else None,
                )
            except (TypeError, ValueError) as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
            entries.append(entry)

    if check_media:
        missing_paths = []
        for entry in entries:
            if not entry.frames_path.is_dir():
                missing_paths.append(str(entry.frames_path))
            if not entry.audio_path.is_file():
                missing_paths.append(str(entry.audio_path))
        if missing_paths:
            raise MediaValidationError(
                "missing media: " + ", ".join(missing_paths)
            )
    return entries


def _resolve(base: Path, p: str | Path) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def write_manifest(path: str | Path, entries: list[SampleManifestEntry]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry.to_json()) + "\n")
    return path


def load_frame_dir(frames_path: str | Path) -> np.ndarray:
    """Decode a directory of PNG frames (lexicographic order) to (T, H, W, 3)."""
    frames_path = Path(frames_path)
    files = sorted(frames_path.glob("*.png"))
    if not files:
        raise MediaValidationError(f"no PNG frames under {frames_path}")
    arrays = []
    shape = None
    for f in files:
        with Image.open(f) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32)
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise MediaValidationError(
                f"frame size mismatch in {frames_path}: {f.name} is "
                f"{arr.shape[:2]}, expected {shape[:2]}"
            )
        arrays.append(levels_to_unit(arr))
    return np.stack(arrays)


def levels_to_unit(levels: np.ndarray) -> np.ndarray:
    """Map 8-bit levels [0, 255] to the float convention [-1, 1]."""
    return levels.astype(np.float32) * (2.0 / 255.0) - 1.0


def unit_to_levels(pixels: np.ndarray) -> np.ndarray:
    """Quantize [-1, 1] floats to 8-bit levels (inverse of levels_to_unit)."""
    return np.round((np.asarray(pixels) + 1.0) * (255.0 / 2.0)).astype(np.uint8)


def load_image(path: str | Path) -> np.ndarray:
    """Decode one image file to (H, W, 3) float32 in [-1, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return levels_to_unit(arr)


def load_wav(path: str | Path) -> AudioClip:
    """Read a mono 16-bit PCM WAV into samples in [-1, 1]."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise MediaValidationError(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise MediaValidationError(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit")
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0
    return AudioClip(samples=np.clip(samples, -1.0, 1.0), sample_rate=rate)


def write_wav(path: str | Path, clip: AudioClip) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ints = np.round(np.clip(clip.samples, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(ints.tobytes())
    return path


def load_sample(entry: SampleManifestEntry) -> tuple[VideoSeq, AudioClip, Frame]:
    """Load one sample: the video, its waveform, and the first frame as still."""
    try:
        pixels = load_frame_dir(entry.frames_path)
    except FileNotFoundError as exc:
        raise MediaValidationError(f"{entry.sample_id}: {exc}") from exc
    video = VideoSeq(pixels=pixels, fps=entry.fps)
    clip = load_wav(entry.audio_path)
    if clip.sample_rate != entry.sample_rate:
        raise MediaValidationError(
            f"{entry.sample_id}: manifest says {entry.sample_rate} Hz but "
            f"{entry.audio_path} is {clip.sample_rate} Hz"
        )
    return video, clip, video[0]


def write_sample(
    frames_dir: str | Path, audio_path: str | Path, video: VideoSeq, clip: AudioClip
) -> None:
    """Write frames as frame_%05d.png and audio as 16-bit PCM WAV."""
    frames_dir = Path(frames_dir)
    frames_dir.mkdir(parents=True, exist_ok=True)
    for t in range(len(video)):
        write_frame_png(frames_dir / (FRAME_PATTERN % t), video[t])
    write_wav(audio_path, clip)


def write_frame_png(path: str | Path, frame: "Frame | np.ndarray") -> Path:
    path = Path(path)
    pixels = frame.pixels if isinstance(frame, Frame) else np.asarray(frame)
    Image.fromarray(unit_to_levels(pixels), mode="RGB").save(path)
    return path


def mirror_augment(video: VideoSeq) -> VideoSeq:
    """Flip every frame left-right; shapes, order and fps are unchanged."""
    return VideoSeq(pixels=video.pixels[:, :, ::-1, :], fps=video.fps)


def split_subjects(
    dataset_name: str,
    entries: list[SampleManifestEntry],
    split: SplitSpec | None = None,
) -> tuple[list[SampleManifestEntry], list[SampleManifestEntry], list[SampleManifestEntry]]:
    """Partition entries into (train, val, test) by subject id.

    ``grid`` and ``tcdtimit`` use the published subject tables; ``custom``
    requires an explicit :class:`SplitSpec`.  An entry whose subject id is
    not in the chosen split is a validation error.
    """
    name = dataset_name.lower()
    if name == "grid":
        spec = GRID_SPLIT
    elif name == "tcdtimit":
        spec = TCDTIMIT_SPLIT
    elif name == "custom":
        if split is None:
            raise ValueError("custom split requires an explicit SplitSpec")
        spec = split
    else:
        raise ValueError(f"unknown dataset {dataset_name!r}; expected grid, tcdtimit or custom")

    buckets: dict[str, list[SampleManifestEntry]] = {"train": [], "val": [], "test": []}
    for entry in entries:
        if entry.subject_id in spec.train_ids:
            buckets["train"].append(entry)
        elif entry.subject_id in spec.val_ids:
            buckets["val"].append(entry)
        elif entry.subject_id in spec.test_ids:
            buckets["test"].append(entry)
        else:
            raise MediaValidationError(
                f"subject id {entry.subject_id} (sample {entry.sample_id}) is not "
                f"in the {dataset_name} split tables"
            )
    return buckets["train"], buckets["val"], buckets["test"]


def run_alignment_hook(cmd_template: str, in_dir: str | Path, out_dir: str | Path) -> None:
    """Run an external face-alignment command on one frame directory.

    ``cmd_template`` is a shell command with ``{in}`` and ``{out}``
    placeholders, e.g. ``"align-tool --src {in} --dst {out}"``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cmd = cmd_template.format(**{"in": str(in_dir), "out": str(out_dir)})
    result = subprocess.run(cmd, shell=True, capture_output=True, text=True)
    if result.returncode != 0:
        raise RuntimeError(
            f"alignment hook failed ({result.returncode}) for {in_dir}: "
            f"{result.stderr.strip() or result.stdout.strip()}"
        )
