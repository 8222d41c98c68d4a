"""Manifest, PNG/WAV round-trips, splits, mirroring."""

import json

import numpy as np
import pytest
from PIL import Image

from talkinghead.audio import AudioClip
from talkinghead.media import (
    FRAME_PATTERN,
    Frame,
    ManifestError,
    MediaValidationError,
    SampleManifestEntry,
    SplitSpec,
    VideoSeq,
    levels_to_unit,
    load_frame_dir,
    load_image,
    load_manifest,
    load_sample,
    load_wav,
    mirror_augment,
    run_alignment_hook,
    split_subjects,
    unit_to_levels,
    write_frame_png,
    write_manifest,
    write_sample,
    write_wav,
)


def _entry(tmp_path, sample_id="a", subject=0, n=3, size=16, rate=16_000):
    """Materialize a small valid sample on disk and return its entry."""
    rng = np.random.default_rng(hash(sample_id) % 2**32)
    pixels = rng.uniform(-1, 1, (n, size, size, 3)).astype(np.float32)
    clip = AudioClip(samples=rng.uniform(-1, 1, rate // 25 * n), sample_rate=rate)
    frames_dir = tmp_path / sample_id / "frames"
    audio_path = tmp_path / sample_id / "audio.wav"
    write_sample(frames_dir, audio_path, VideoSeq(pixels=pixels, fps=25), clip)
    return SampleManifestEntry(
        sample_id=sample_id,
        subject_id=subject,
        frames_path=frames_dir,
        audio_path=audio_path,
        fps=25,
        sample_rate=rate,
        transcript=["hi"],
    )


# --- pixel scale mapping ---------------------------------------------------


def test_levels_zero_maps_to_minus_one():
    assert levels_to_unit(np.zeros((2, 2, 3), dtype=np.uint8)).max() == -1.0


def test_levels_255_maps_to_plus_one():
    assert levels_to_unit(np.full((2, 2, 3), 255, dtype=np.uint8)).min() == 1.0


def test_level_128_maps_near_zero():
    val = levels_to_unit(np.full((1, 1, 3), 128, dtype=np.uint8))[0, 0, 0]
    assert val == pytest.approx(2 * 128 / 255 - 1, abs=1e-7)  # ~0.00392


def test_unit_levels_round_trip_all_bytes():
    levels = np.arange(256, dtype=np.uint8).reshape(16, 16, 1).repeat(3, axis=2)
    np.testing.assert_array_equal(unit_to_levels(levels_to_unit(levels)), levels)


def test_png_round_trip_within_quantization(tmp_path):
    rng = np.random.default_rng(0)
    pixels = rng.uniform(-1, 1, (8, 8, 3)).astype(np.float32)
    p = tmp_path / "f.png"
    write_frame_png(p, pixels)
    back = load_image(p)
    assert np.abs(back - pixels).max() <= 1.0 / 255.0


# --- manifest --------------------------------------------------------------


def test_empty_manifest_is_empty_list(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text("")
    assert load_manifest(p) == []


def test_manifest_preserves_order(tmp_path):
    e1 = _entry(tmp_path, "s1", subject=1)
    e2 = _entry(tmp_path, "s2", subject=2)
    path = write_manifest(tmp_path / "m.jsonl", [e1, e2])
    out = load_manifest(path)
    assert [e.sample_id for e in out] == ["s1", "s2"]


def test_manifest_missing_fps_names_field_and_line(tmp_path):
    e1 = _entry(tmp_path, "s1")
    raw = e1.to_json()
    del raw["fps"]
    p = tmp_path / "m.jsonl"
    p.write_text(json.dumps(e1.to_json()) + "\n" + json.dumps(raw) + "\n")
    with pytest.raises(ManifestError) as err:
        load_manifest(p)
    assert "fps" in str(err.value)
    assert "2" in str(err.value)


def test_manifest_malformed_line_names_line_number(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text("{not json\n")
    with pytest.raises(ManifestError, match="line 1"):
        load_manifest(p)


def test_manifest_missing_media_lists_paths(tmp_path):
    e = _entry(tmp_path, "s1")
    bad = SampleManifestEntry(
        sample_id="s1",
        subject_id=0,
        frames_path=tmp_path / "nope",
        audio_path=e.audio_path,
        fps=25,
        sample_rate=16_000,
    )
    p = write_manifest(tmp_path / "m.jsonl", [bad])
    with pytest.raises(MediaValidationError, match="nope"):
        load_manifest(p)


def test_manifest_relative_paths_resolve_against_file(tmp_path):
    e = _entry(tmp_path, "s1")
    rel = SampleManifestEntry(
        sample_id="s1",
        subject_id=0,
        frames_path="s1/frames",
        audio_path="s1/audio.wav",
        fps=25,
        sample_rate=16_000,
    )
    p = write_manifest(tmp_path / "m.jsonl", [rel])
    out = load_manifest(p)
    assert out[0].frames_path == e.frames_path


# --- sample loading --------------------------------------------------------


def test_load_sample_round_trip(tmp_path):
    entry = _entry(tmp_path, "rt")
    video, clip, still = load_sample(entry)
    assert video.pixels.shape == (3, 16, 16, 3)
    assert video.pixels.dtype == np.float32
    assert clip.sample_rate == 16_000
    np.testing.assert_array_equal(still.pixels, video.pixels[0])


def test_load_sample_pixel_error_within_quantization(tmp_path):
    rng = np.random.default_rng(1)
    pixels = rng.uniform(-1, 1, (2, 16, 16, 3)).astype(np.float32)
    clip = AudioClip(samples=rng.uniform(-1, 1, 1280), sample_rate=16_000)
    write_sample(tmp_path / "f", tmp_path / "a.wav", VideoSeq(pixels=pixels, fps=25), clip)
    back = load_frame_dir(tmp_path / "f")
    assert np.abs(back - pixels).max() <= 1.0 / 255.0


def test_frame_size_mismatch_rejected(tmp_path):
    d = tmp_path / "frames"
    d.mkdir()
    Image.new("RGB", (16, 16)).save(d / (FRAME_PATTERN % 0))
    Image.new("RGB", (8, 16)).save(d / (FRAME_PATTERN % 1))
    with pytest.raises(MediaValidationError, match="mismatch"):
        load_frame_dir(d)


def test_wav_round_trip_bit_exact(tmp_path):
    # values already on the 16-bit grid survive write/load exactly
    rng = np.random.default_rng(2)
    samples = np.round(rng.uniform(-1, 1, 4000) * 32767.0) / 32767.0
    write_wav(tmp_path / "a.wav", AudioClip(samples=samples, sample_rate=8000))
    back = load_wav(tmp_path / "a.wav")
    assert back.sample_rate == 8000
    np.testing.assert_array_equal(back.samples, samples)


def test_load_wav_missing_file(tmp_path):
    with pytest.raises((FileNotFoundError, MediaValidationError)):
        load_wav(tmp_path / "missing.wav")


# --- mirroring -------------------------------------------------------------


def test_mirror_flips_columns():
    pixels = np.zeros((1, 4, 4, 3), dtype=np.float32)
    pixels[0, :, 0, :] = 1.0
    out = mirror_augment(VideoSeq(pixels=pixels, fps=25))
    assert np.all(out.pixels[0, :, 3, :] == 1.0)
    assert np.all(out.pixels[0, :, 0, :] == 0.0)


def test_mirror_symmetric_frame_fixed_point():
    rng = np.random.default_rng(3)
    half = rng.uniform(-1, 1, (2, 4, 2, 3)).astype(np.float32)
    sym = np.concatenate([half, half[:, :, ::-1]], axis=2)
    out = mirror_augment(VideoSeq(pixels=sym, fps=25))
    np.testing.assert_array_equal(out.pixels, sym)


def test_mirror_is_involution():
    rng = np.random.default_rng(4)
    pixels = rng.uniform(-1, 1, (2, 6, 8, 3)).astype(np.float32)
    video = VideoSeq(pixels=pixels, fps=25)
    out = mirror_augment(mirror_augment(video))
    np.testing.assert_array_equal(out.pixels, pixels)
    assert out.fps == 25


# --- subject splits --------------------------------------------------------


def _grid_entry(subject):
    return SampleManifestEntry(
        sample_id=f"g{subject}",
        subject_id=subject,
        frames_path="x",
        audio_path="y",
        fps=25,
        sample_rate=50_000,
    )


def test_grid_subject_2_in_test_split():
    train, val, test = split_subjects("grid", [_grid_entry(2)])
    assert [e.subject_id for e in test] == [2]
    assert train == [] and val == []


def test_grid_subject_9_in_val_split():
    train, val, test = split_subjects("grid", [_grid_entry(9)])
    assert [e.subject_id for e in val] == [9]


# the published tables cover 32 of subjects 1..34; 21 and 24 are unlisted
GRID_ALL = sorted(
    {1, 3, 5, 6, 7, 8, 10, 12, 14, 16, 17, 22, 26, 28, 32}
    | {9, 20, 23, 27, 29, 30, 34}
    | {2, 4, 11, 13, 15, 18, 19, 25, 31, 33}
)


def test_grid_full_test_and_val_tables():
    entries = [_grid_entry(s) for s in GRID_ALL]
    train, val, test = split_subjects("grid", entries)
    assert {e.subject_id for e in test} == {2, 4, 11, 13, 15, 18, 19, 25, 31, 33}
    assert {e.subject_id for e in val} == {9, 20, 23, 27, 29, 30, 34}
    assert {e.subject_id for e in train} == {1, 3, 5, 6, 7, 8, 10, 12, 14, 16, 17, 22, 26, 28, 32}


def test_splits_partition_entries():
    entries = [_grid_entry(s) for s in GRID_ALL]
    train, val, test = split_subjects("grid", entries)
    ids = lambda es: {e.sample_id for e in es}
    assert ids(train) | ids(val) | ids(test) == ids(entries)
    assert not (ids(train) & ids(val)) and not (ids(val) & ids(test)) and not (ids(train) & ids(test))


def test_unknown_subject_rejected():
    with pytest.raises(ValueError, match="subject"):
        split_subjects("grid", [_grid_entry(99)])


def test_custom_split_overlap_rejected():
    with pytest.raises(ValueError):
        SplitSpec(train_ids=frozenset({0, 1}), val_ids=frozenset({1}), test_ids=frozenset({2}))


def test_custom_split_requires_spec():
    with pytest.raises(ValueError):
        split_subjects("custom", [_grid_entry(1)])


# --- alignment hook --------------------------------------------------------


def test_alignment_hook_runs_template(tmp_path):
    src = tmp_path / "in"
    src.mkdir()
    (src / "frame_00000.png").write_bytes(b"x")
    dst = tmp_path / "out"
    run_alignment_hook("cp {in}/*.png {out}/", src, dst)
    assert (dst / "frame_00000.png").read_bytes() == b"x"


def test_alignment_hook_failure_raises(tmp_path):
    with pytest.raises(RuntimeError):
        run_alignment_hook("false {in} {out}", tmp_path, tmp_path / "o")
