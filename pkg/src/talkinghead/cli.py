"""Command-line entry points.

    talkinghead toydata    --out DIR [--subjects N --samples N ...]
    talkinghead preprocess --manifest F --out DIR [--align-cmd T --mirror --resample]
    talkinghead train      --config F [--resume --ablation MODE]
    talkinghead generate   --checkpoint DIR --still PNG --audio WAV --out DIR [--seed N]
    talkinghead evaluate   --checkpoint DIR --manifest F --out DIR [--lipreader S ...]
    talkinghead ablate     --config F

Exit codes: 0 success, 1 validation problem (bad inputs/config), 2
runtime fault (training abort, backend failure).  Commands are
reproducible: the same inputs and seed give byte-identical frames and
reports (timestamps live only in checkpoint metadata).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plots
from .audio import AudioRateError, FramingConfigError, compute_stride, frame_audio, resample_to_divisible
from .backends import BackendError, make_embedder, make_lipreader
from .checkpoint import CheckpointError
from .config import ConfigError, load_run_config
from .evaluate import evaluate_dataset, load_generator
from .media import (
    FRAME_PATTERN,
    ManifestError,
    MediaValidationError,
    SampleManifestEntry,
    load_image,
    load_manifest,
    load_sample,
    load_wav,
    mirror_augment,
    run_alignment_hook,
    write_frame_png,
    write_manifest,
    write_sample,
    write_wav,
)
from .metrics import METRIC_COLUMNS
from .toydata import ToyGeometry, load_toy_header, make_toy_dataset
from .training import ABLATION_MODES, TrainingFault, load_split_samples, run_ablation, train

__all__ = ["CommandResult", "main", "build_parser"]

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

_VALIDATION_ERRORS = (
    ManifestError,
    MediaValidationError,
    AudioRateError,
    FramingConfigError,
    ConfigError,
    CheckpointError,
    ValueError,
    FileNotFoundError,
)


@dataclass
class CommandResult:
    exit_code: int
    artifacts: list[Path] = field(default_factory=list)
    log_path: Path | None = None
    message: str = ""


def _toy_lipreader_geometry(manifest: Path) -> ToyGeometry | None:
    header_path = Path(manifest).parent / "dataset.json"
    if header_path.exists():
        return ToyGeometry.from_json(load_toy_header(header_path.parent)["geometry"])
    return None


# ---------------------------------------------------------------------------
# subcommands


def cmd_toydata(args: argparse.Namespace) -> CommandResult:
    manifest, header = make_toy_dataset(
        args.out,
        n_subjects=args.subjects,
        n_samples=args.samples,
        n_frames=args.frames,
        height=args.size,
        width=args.size,
        seed=args.seed,
    )
    print(f"wrote {header['n_samples']} samples for {header['n_subjects']} subjects")
    print(f"manifest: {manifest}")
    return CommandResult(EXIT_OK, [manifest, Path(args.out) / "dataset.json"])


def cmd_preprocess(args: argparse.Namespace) -> CommandResult:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = load_manifest(args.manifest)
    processed: list[SampleManifestEntry] = []
    statuses: dict[str, str] = {}
    for entry in entries:
        try:
            video, clip, _ = load_sample(entry)
            if args.resample and clip.sample_rate % entry.fps:
                clip = resample_to_divisible(clip, entry.fps)
            frame_audio(clip, entry.fps)  # framing dry run: fails on bad rates
            sample_dir = out_dir / entry.sample_id
            frames_dir = sample_dir / "frames"
            audio_path = sample_dir / "audio.wav"
            if args.align_cmd:
                run_alignment_hook(args.align_cmd, entry.frames_path, frames_dir)
                write_wav(audio_path, clip)
            else:
                write_sample(frames_dir, audio_path, video, clip)
            processed.append(
                dataclasses.replace(
                    entry,
                    frames_path=frames_dir,
                    audio_path=audio_path,
                    sample_rate=clip.sample_rate,
                )
            )
            if args.mirror:
                mirrored = mirror_augment(video)
                m_dir = out_dir / f"{entry.sample_id}_mirror"
                write_sample(m_dir / "frames", m_dir / "audio.wav", mirrored, clip)
                processed.append(
                    dataclasses.replace(
                        entry,
                        sample_id=f"{entry.sample_id}_mirror",
                        frames_path=m_dir / "frames",
                        audio_path=m_dir / "audio.wav",
                        sample_rate=clip.sample_rate,
                    )
                )
            statuses[entry.sample_id] = "ok"
        except Exception as exc:
            statuses[entry.sample_id] = f"{type(exc).__name__}: {exc}"
    manifest_path = write_manifest(out_dir / "manifest.jsonl", processed)
    src_header = Path(args.manifest).parent / "dataset.json"
    if src_header.exists():
        (out_dir / "dataset.json").write_bytes(src_header.read_bytes())
    log_path = out_dir / "preprocess_log.json"
    with open(log_path, "w", encoding="utf-8") as fh:
        json.dump(statuses, fh, indent=2, sort_keys=True)
        fh.write("\n")
    failures = {k: v for k, v in statuses.items() if v != "ok"}
    for sample_id, why in sorted(failures.items()):
        print(f"FAILED {sample_id}: {why}", file=sys.stderr)
    print(f"processed {len(processed)} samples ({len(failures)} failed)")
    print(f"manifest: {manifest_path}")
    code = EXIT_VALIDATION if failures else EXIT_OK
    return CommandResult(code, [manifest_path], log_path)


def cmd_train(args: argparse.Namespace) -> CommandResult:
    run = load_run_config(args.config)
    cfg = run.train
    if args.ablation:
        cfg = dataclasses.replace(cfg, ablation=args.ablation)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    out_dir = Path(args.out) if args.out else run.out_dir
    samples = load_split_samples(run.manifest, run.dataset, run.window_sec)
    print(
        f"training ablation={cfg.ablation} on {len(samples['train'])} sequences "
        f"({len(samples['val'])} val) -> {out_dir}"
    )
    result = train(samples["train"], samples["val"], cfg, out_dir, resume=args.resume)
    fig = plots.plot_loss_curves(result.log, out_dir / "figures" / "loss_curves.png")
    csv_path = out_dir / "train_log.csv"
    artifacts = [result.checkpoint_dir, csv_path, out_dir / "epochs.json", fig]
    if result.aborted:
        print(f"ABORTED: {result.aborted}", file=sys.stderr)
        print(f"last good checkpoint: {result.checkpoint_dir}", file=sys.stderr)
        return CommandResult(EXIT_RUNTIME, artifacts, csv_path, result.aborted)
    print(
        f"best val SSIM {result.best_val_ssim:.4f} at epoch {result.best_epoch} "
        f"({result.epochs_run} epochs, {result.wall_time_sec:.0f} s"
        f"{', early stop' if result.stopped_early else ''})"
    )
    print(f"checkpoint: {result.checkpoint_dir}")
    return CommandResult(EXIT_OK, artifacts, csv_path)


def cmd_generate(args: argparse.Namespace) -> CommandResult:
    gen, meta = load_generator(args.checkpoint)
    window = gen.cfg.audio_window
    window_sec = float(meta.get("train_config", {}).get("window_sec", 0.16))
    required_rate = int(round(window / window_sec))

    still = load_image(args.still)
    if still.shape[:2] != (gen.cfg.height, gen.cfg.width):
        raise MediaValidationError(
            f"still is {still.shape[1]}x{still.shape[0]} but the checkpoint expects "
            f"{gen.cfg.width}x{gen.cfg.height}"
        )
    clip = load_wav(args.audio)
    if clip.sample_rate != required_rate:
        if args.resample:
            from scipy.signal import resample_poly
            from .audio import AudioClip
            from math import gcd

            g = gcd(required_rate, clip.sample_rate)
            samples = resample_poly(clip.samples, required_rate // g, clip.sample_rate // g)
            clip = AudioClip(samples=np.asarray(samples, dtype=np.float64), sample_rate=required_rate)
        else:
            raise AudioRateError(
                f"audio is {clip.sample_rate} Hz but this checkpoint was trained at "
                f"{required_rate} Hz; resample the audio first (or pass --resample)"
            )
    compute_stride(clip.sample_rate, args.fps)  # fails with guidance on bad fps
    seq = frame_audio(clip, args.fps, window_sec=window_sec)

    out_dir = Path(args.out)
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    video = gen.generate_sequence(still, seq, seed=args.seed)
    for t in range(len(video)):
        write_frame_png(frames_dir / (FRAME_PATTERN % t), video.pixels[t])

    meta_bytes = (Path(args.checkpoint) / "metadata.json").read_bytes()
    sidecar = {
        "fps": args.fps,
        "seed": args.seed,
        "n_frames": len(video),
        "checkpoint": str(args.checkpoint),
        "checkpoint_hash": hashlib.sha256(meta_bytes).hexdigest()[:16],
        "audio": str(args.audio),
        "sample_rate": clip.sample_rate,
    }
    sidecar_path = out_dir / "generate.json"
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    strip = plots.plot_frame_strip(video.pixels, out_dir / "figures" / "frame_strip.png")
    artifacts = [frames_dir, sidecar_path, strip]

    if args.mux_cmd:
        import subprocess

        out_file = out_dir / "video.mp4"
        cmd = args.mux_cmd.format(frames=frames_dir, audio=args.audio, out=out_file)
        proc = subprocess.run(cmd, shell=True, capture_output=True, text=True)
        if proc.returncode != 0:
            print(f"muxer failed ({proc.returncode}): {proc.stderr.strip()}", file=sys.stderr)
            return CommandResult(EXIT_RUNTIME, artifacts, sidecar_path, "muxer failed")
        artifacts.append(out_file)

    print(f"wrote {len(video)} frames to {frames_dir}")
    return CommandResult(EXIT_OK, artifacts, sidecar_path)


def cmd_evaluate(args: argparse.Namespace) -> CommandResult:
    embedder = make_embedder(args.embedder)
    lipreader = make_lipreader(args.lipreader, _toy_lipreader_geometry(Path(args.manifest)))
    report = evaluate_dataset(
        args.checkpoint,
        args.manifest,
        dataset_name=args.dataset,
        split=args.split,
        embedder=embedder,
        lipreader=lipreader,
        seed=args.seed,
        max_samples=args.max_samples,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "report.csv"
    csv_path.write_text(report.to_csv(), encoding="utf-8")
    json_path = out_dir / "report.json"
    json_path.write_text(report.to_json() + "\n", encoding="utf-8")
    agg = report.aggregate()
    fig = plots.plot_metric_bars(
        [{"sample_id": "model", **{c: agg[c] for c in METRIC_COLUMNS}}],
        out_dir / "figures" / "metrics.png",
    )
    print(report.format_table())
    print(f"report: {csv_path}")
    if report.failures:
        for row in report.failures:
            print(f"FAILED {row.sample_id}: {row.error}", file=sys.stderr)
        return CommandResult(EXIT_RUNTIME, [csv_path, json_path, fig], json_path,
                             f"{len(report.failures)} samples failed")
    return CommandResult(EXIT_OK, [csv_path, json_path, fig], json_path)


def cmd_ablate(args: argparse.Namespace) -> CommandResult:
    run = load_run_config(args.config)
    out_dir = Path(args.out) if args.out else run.out_dir
    samples = load_split_samples(run.manifest, run.dataset, run.window_sec)
    embedder = make_embedder(run.embedder)
    lipreader = make_lipreader(run.lipreader, _toy_lipreader_geometry(run.manifest))
    outcome = run_ablation(samples, run.train, out_dir, embedder, lipreader)
    fig = plots.plot_metric_bars(outcome["rows"], out_dir / "figures" / "ablation.png")
    print(outcome["table"])
    artifacts = [out_dir / "ablation.json", out_dir / "ablation.txt", fig]
    return CommandResult(EXIT_OK, artifacts, out_dir / "ablation.json")


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="talkinghead",
        description="Talking-head video synthesis from a still image and raw audio.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toydata", help="materialize the synthetic benchmark dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--subjects", type=int, default=5, help="number of synthetic subjects")
    p.add_argument("--samples", type=int, default=500, help="total number of samples")
    p.add_argument("--frames", type=int, default=25, help="frames per sample")
    p.add_argument("--size", type=int, default=64, help="frame height/width in pixels")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_toydata)

    p = sub.add_parser("preprocess", help="validate, align and rewrite a dataset")
    p.add_argument("--manifest", required=True, help="input manifest.jsonl")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--align-cmd", default=None,
                   help="face alignment command with {in} and {out} placeholders")
    p.add_argument("--mirror", action="store_true", help="write mirrored copies")
    p.add_argument("--resample", action="store_true",
                   help="resample audio whose rate is not divisible by the fps")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train from a TOML run config")
    p.add_argument("--config", required=True, help="run config TOML")
    p.add_argument("--out", default=None, help="override [data].out_dir")
    p.add_argument("--resume", action="store_true", help="continue from checkpoint_last")
    p.add_argument("--ablation", choices=ABLATION_MODES, default=None,
                   help="override [train].ablation")
    p.add_argument("--seed", type=int, default=None, help="override [train].seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="synthesize a video from a still and a WAV")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--still", required=True, help="identity still image (PNG)")
    p.add_argument("--audio", required=True, help="mono 16-bit WAV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fps", type=int, default=25, help="output frame rate")
    p.add_argument("--resample", action="store_true",
                   help="resample the audio to the checkpoint's training rate")
    p.add_argument("--mux-cmd", default=None,
                   help="muxer command with {frames}, {audio}, {out} placeholders")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--dataset", default="auto", help="auto | grid | tcdtimit")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--embedder", default="stub",
                   help="stub | none | cmd:TEMPLATE | http(s)://URL")
    p.add_argument("--lipreader", default=None,
                   help="toy | none | cmd:TEMPLATE | http(s)://URL")
    p.add_argument("--max-samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train and compare l1_only / l1_adv_img / full")
    p.add_argument("--config", required=True, help="run config TOML")
    p.add_argument("--out", default=None, help="override [data].out_dir")
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result: CommandResult = args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TrainingFault, BackendError, RuntimeError) as exc:
        print(f"fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
