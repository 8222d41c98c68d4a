"""Adversarial training loop with validation-driven early stopping.

Per batch: both discriminators take one ascent step on their pair
objectives, then the generator takes one descent step on the
non-saturating adversarial terms plus the weighted lower-half L1.  The
frame discriminator sees one uniformly sampled timestep per video; the
sequence discriminator sees whole (video, audio) sequences.  Sequences
are bucketed by length, padded to the bucket maximum and masked, so the
recurrent nets never train on padding.

Learning rates follow the published schedule: generator 2e-4 and frame
discriminator 1e-3, both multiplied by 0.9 per epoch after epoch 20; the
sequence discriminator stays at a fixed 5e-5.  Training stops when
validation SSIM has not improved for `patience` epochs, keeping the
best-validation checkpoint.  A non-finite loss aborts the run, leaving
the last good checkpoint on disk.
"""

from __future__ import annotations

import dataclasses
import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import metrics
from .audio import frame_audio
from .checkpoint import load_checkpoint, save_checkpoint
from .losses import (
    LossReport,
    PROB_EPS,
    disc_pair_value,
    generator_adversarial,
    l1_lower_half_masked,
    total_objective,
)
from .media import (
    SampleManifestEntry,
    SplitSpec,
    VideoSeq,
    levels_to_unit,
    load_manifest,
    load_sample,
    split_subjects,
    unit_to_levels,
)
from .models import (
    ArchConfig,
    FrameDiscriminator,
    Generator,
    NOISE_DIM,
    SequenceDiscriminator,
    draw_noise,
    frames_to_tensor,
)

__all__ = [
    "TrainConfig",
    "TrainResult",
    "TrainingLog",
    "TrainingFault",
    "LoadedSample",
    "prepare_samples",
    "load_split_samples",
    "train",
    "run_ablation",
    "ABLATION_MODES",
    "ABLATION_ORDER",
]

ABLATION_MODES = ("l1_only", "l1_adv_img", "full")
ABLATION_ORDER = ("ground_truth",) + ABLATION_MODES

BEST_CHECKPOINT = "checkpoint_best"
LAST_CHECKPOINT = "checkpoint_last"


class TrainingFault(RuntimeError):
    """Training aborted (non-finite loss); the message names the last
    good checkpoint."""


@dataclass(frozen=True)
class TrainConfig:
    # objective
    lambda_l1: float = 400.0
    ablation: str = "full"
    saturating_generator: bool = False
    seq_negatives: bool = True  # shuffled/mismatched negatives for the sequence disc
    # optimizers
    lr_generator: float = 2e-4
    lr_frame_disc: float = 1e-3
    lr_seq_disc: float = 5e-5
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    decay_start_epoch: int = 20
    decay_rate: float = 0.10
    # loop
    batch_size: int = 16
    max_epochs: int = 50
    patience: int = 10
    seed: int = 0
    # validation
    val_max_samples: int = 24
    val_seed: int = 9000
    # architecture
    height: int = 64
    width: int = 64
    window_sec: float = 0.16
    channel_scale: float = 1.0
    noise_variance: float = 0.6

    def __post_init__(self):
        if self.ablation not in ABLATION_MODES:
            raise ValueError(f"ablation must be one of {ABLATION_MODES}, got {self.ablation!r}")
        for name in ("lr_generator", "lr_frame_disc", "lr_seq_disc"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.lambda_l1 < 0:
            raise ValueError("lambda_l1 must be >= 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if not 0 <= self.decay_rate < 1:
            raise ValueError("decay_rate must be in [0, 1)")

    def lr_at(self, base: float, epoch: int) -> float:
        """base for epoch <= decay_start_epoch, then *(1-decay_rate) per epoch."""
        excess = max(0, epoch - self.decay_start_epoch)
        return base * (1.0 - self.decay_rate) ** excess

    def arch(self, audio_window: int) -> ArchConfig:
        return ArchConfig(
            height=self.height,
            width=self.width,
            audio_window=audio_window,
            channel_scale=self.channel_scale,
            noise_variance=self.noise_variance,
        )

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, raw: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**raw)


@dataclass(frozen=True)
class LoadedSample:
    """One sequence held in memory: 8-bit frames plus framed audio."""

    sample_id: str
    subject_id: int
    frames_u8: np.ndarray  # (T, H, W, 3) uint8
    windows: np.ndarray  # (T, L) float32, peak-normalized
    transcript: list[str]
    fps: int = 25

    @property
    def length(self) -> int:
        return self.frames_u8.shape[0]

    def frames_float(self) -> np.ndarray:
        return levels_to_unit(self.frames_u8)


def prepare_samples(
    entries: list[SampleManifestEntry], window_sec: float = 0.16
) -> list[LoadedSample]:
    """Load and frame every sample; video and audio are cut to the common
    length when they disagree (with a warning)."""
    out = []
    for entry in entries:
        video, clip, _ = load_sample(entry)
        seq = frame_audio(clip, entry.fps, window_sec=window_sec)
        steps = min(len(video), seq.frames.shape[0])
        if len(video) != seq.frames.shape[0]:
            warnings.warn(
                f"{entry.sample_id}: {len(video)} frames vs {seq.frames.shape[0]} "
                f"audio windows, truncating to {steps}",
                RuntimeWarning,
                stacklevel=2,
            )
        out.append(
            LoadedSample(
                sample_id=entry.sample_id,
                subject_id=entry.subject_id,
                frames_u8=unit_to_levels(video.pixels[:steps]),
                windows=seq.frames[:steps].astype(np.float32),
                transcript=list(entry.transcript or []),
                fps=entry.fps,
            )
        )
    return out


def load_split_samples(
    manifest_path: str | Path,
    dataset_name: str = "auto",
    window_sec: float = 0.16,
) -> dict[str, list[LoadedSample]]:
    """Manifest -> {"train": [...], "val": [...], "test": [...]}.

    dataset_name "auto" looks for a dataset.json header next to the
    manifest (toy datasets) and falls back to the named split tables.
    """
    manifest_path = Path(manifest_path)
    entries = load_manifest(manifest_path)
    name, split = dataset_name, None
    if name == "auto":
        header_path = manifest_path.parent / "dataset.json"
        if header_path.exists():
            with open(header_path, encoding="utf-8") as fh:
                header = json.load(fh)
            split = SplitSpec(
                train_ids=frozenset(header["split"]["train_ids"]),
                val_ids=frozenset(header["split"]["val_ids"]),
                test_ids=frozenset(header["split"]["test_ids"]),
            )
            name = "custom"
        else:
            raise ValueError(
                f"no dataset.json next to {manifest_path}; pass dataset_name explicitly"
            )
    train_e, val_e, test_e = split_subjects(name, entries, split)
    return {
        "train": prepare_samples(train_e, window_sec),
        "val": prepare_samples(val_e, window_sec),
        "test": prepare_samples(test_e, window_sec),
    }


@dataclass
class TrainingLog:
    steps: list[LossReport] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "train_log.csv"
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(LossReport.csv_header() + "\n")
            for report in self.steps:
                fh.write(report.csv_row() + "\n")
        json_path = out_dir / "epochs.json"
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(self.epochs, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return csv_path, json_path


@dataclass
class TrainResult:
    checkpoint_dir: Path
    log: TrainingLog
    best_epoch: int
    best_val_ssim: float
    epochs_run: int
    global_step: int
    stopped_early: bool
    wall_time_sec: float
    aborted: str | None = None


def _make_batches(
    lengths: np.ndarray, batch_size: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Length-bucketed batches in a shuffled order."""
    order = rng.permutation(len(lengths))
    order = order[np.argsort(lengths[order], kind="stable")]
    chunks = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    return [chunks[i] for i in rng.permutation(len(chunks))]


def _collate(samples: list[LoadedSample]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Pad to the longest sequence: (real (B,T,3,H,W), windows (B,T,L), mask (B,T))."""
    batch = len(samples)
    t_max = max(s.length for s in samples)
    h, w = samples[0].frames_u8.shape[1:3]
    win_len = samples[0].windows.shape[1]
    real = torch.zeros(batch, t_max, 3, h, w)
    windows = torch.zeros(batch, t_max, win_len)
    mask = torch.zeros(batch, t_max)
    for i, s in enumerate(samples):
        real[i, : s.length] = frames_to_tensor(s.frames_float())
        windows[i, : s.length] = torch.from_numpy(s.windows)
        mask[i, : s.length] = 1.0
    return real, windows, mask


def _shuffle_time(real: torch.Tensor, lengths: torch.Tensor, rng: np.random.Generator) -> torch.Tensor:
    """Independently permute the valid frames of every sequence."""
    out = real.clone()
    for i in range(real.shape[0]):
        n = int(lengths[i])
        perm = rng.permutation(n)
        out[i, :n] = real[i, perm]
    return out


def _validate(
    gen: Generator,
    val_samples: list[LoadedSample],
    config: TrainConfig,
) -> dict:
    """Mean per-frame SSIM and PSNR of generated vs real validation video."""
    gen.eval()
    noise_rng = torch.Generator().manual_seed(config.val_seed)
    ssims, psnrs, l1s = [], [], []
    try:
        with torch.no_grad():
            subset = val_samples[: config.val_max_samples]
            for start in range(0, len(subset), config.batch_size):
                chunk = subset[start : start + config.batch_size]
                real, windows, mask = _collate(chunk)
                eps = draw_noise(
                    (len(chunk), real.shape[1], NOISE_DIM), config.noise_variance, noise_rng
                )
                fake = gen(real[:, 0], windows, eps)
                half = real.shape[-2] // 2
                for i, sample in enumerate(chunk):
                    ref = sample.frames_float()
                    out = fake[i, : sample.length].movedim(1, -1).numpy()
                    ssims.append(np.mean([metrics.ssim(a, b) for a, b in zip(ref, out)]))
                    psnrs.append(np.mean([metrics.psnr(a, b) for a, b in zip(ref, out)]))
                    l1s.append(
                        np.abs(ref[:, half:] - out[:, half:]).sum() / sample.length
                    )
    finally:
        gen.train()
    return {
        "val_ssim": float(np.mean(ssims)) if ssims else float("nan"),
        "val_psnr": float(np.mean(psnrs)) if psnrs else float("nan"),
        "val_l1": float(np.mean(l1s)) if l1s else float("nan"),
        "val_count": len(ssims),
    }


def train(
    train_samples: list[LoadedSample],
    val_samples: list[LoadedSample],
    config: TrainConfig,
    out_dir: str | Path,
    resume: bool = False,
) -> TrainResult:
    """Run the training loop; returns the best-validation checkpoint.

    Writes `checkpoint_best/` and `checkpoint_last/` plus the step CSV and
    epoch JSON logs under out_dir.
    """
    if not train_samples:
        raise ValueError("no training samples")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t_start = time.monotonic()

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    audio_window = train_samples[0].windows.shape[1]
    arch = config.arch(audio_window)

    gen = Generator(arch)
    use_img_adv = config.ablation in ("l1_adv_img", "full")
    use_seq_adv = config.ablation == "full"
    modules: dict[str, torch.nn.Module] = {"generator": gen}
    optimizers: dict[str, torch.optim.Optimizer] = {}
    betas = (config.adam_beta1, config.adam_beta2)
    optimizers["generator"] = torch.optim.Adam(gen.parameters(), lr=config.lr_generator, betas=betas)
    d_img = d_seq = None
    if use_img_adv:
        d_img = FrameDiscriminator(arch)
        modules["frame_disc"] = d_img
        optimizers["frame_disc"] = torch.optim.Adam(
            d_img.parameters(), lr=config.lr_frame_disc, betas=betas
        )
    if use_seq_adv:
        d_seq = SequenceDiscriminator(arch)
        modules["seq_disc"] = d_seq
        optimizers["seq_disc"] = torch.optim.Adam(
            d_seq.parameters(), lr=config.lr_seq_disc, betas=betas
        )

    log = TrainingLog()
    start_epoch, global_step = 1, 0
    best_ssim, best_epoch, since_best = float("-inf"), 0, 0
    wall_base = 0.0
    last_dir = out_dir / LAST_CHECKPOINT
    best_dir = out_dir / BEST_CHECKPOINT
    if resume and (last_dir / "metadata.json").exists():
        meta = load_checkpoint(last_dir, modules, optimizers)
        start_epoch = int(meta["epoch"]) + 1
        global_step = int(meta["global_step"])
        best_ssim = float(meta.get("best_val_ssim", float("-inf")))
        best_epoch = int(meta.get("best_epoch", 0))
        since_best = int(meta.get("epochs_since_best", 0))
        wall_base = float(meta.get("wall_time_sec", 0.0))
        torch.manual_seed(config.seed + start_epoch)
        rng = np.random.default_rng([config.seed, start_epoch])

    lengths_all = np.array([s.length for s in train_samples])

    def _meta(epoch: int, val: dict) -> dict:
        return {
            "arch": arch.to_json(),
            "train_config": config.to_json(),
            "seed": config.seed,
            "epoch": epoch,
            "global_step": global_step,
            "best_val_ssim": best_ssim,
            "best_epoch": best_epoch,
            "epochs_since_best": since_best,
            "wall_time_sec": wall_base + (time.monotonic() - t_start),
            **val,
        }

    def _finish(epochs_run: int, stopped_early: bool, aborted: str | None) -> TrainResult:
        log.write(out_dir)
        ckpt = best_dir if (best_dir / "metadata.json").exists() else last_dir
        return TrainResult(
            checkpoint_dir=ckpt,
            log=log,
            best_epoch=best_epoch,
            best_val_ssim=best_ssim,
            epochs_run=epochs_run,
            global_step=global_step,
            stopped_early=stopped_early,
            wall_time_sec=wall_base + (time.monotonic() - t_start),
            aborted=aborted,
        )

    epoch = start_epoch - 1
    for epoch in range(start_epoch, config.max_epochs + 1):
        lr_g = config.lr_at(config.lr_generator, epoch)
        lr_di = config.lr_at(config.lr_frame_disc, epoch)
        optimizers["generator"].param_groups[0]["lr"] = lr_g
        if d_img is not None:
            optimizers["frame_disc"].param_groups[0]["lr"] = lr_di

        gen.train()
        for batch_idx in _make_batches(lengths_all, config.batch_size, rng):
            chunk = [train_samples[i] for i in batch_idx]
            real, windows, mask = _collate(chunk)
            lengths = mask.sum(dim=1)
            batch, steps = real.shape[0], real.shape[1]
            eps = draw_noise((batch, steps, NOISE_DIM), config.noise_variance)
            fake = gen(real[:, 0], windows, eps)

            # one uniformly sampled valid timestep per video for the frame disc
            t_pick = torch.from_numpy(
                np.array([rng.integers(int(n)) for n in lengths.numpy()])
            )
            rows = torch.arange(batch)
            cond = real[:, 0]
            v_img = v_seq = 0.0
            if d_img is not None:
                p_real = d_img(real[rows, t_pick], cond)
                p_fake = d_img(fake[rows, t_pick].detach(), cond)
                pair = disc_pair_value(p_real, p_fake)
                optimizers["frame_disc"].zero_grad(set_to_none=True)
                (-pair).backward()
                optimizers["frame_disc"].step()
                v_img = float(pair.detach())
            if d_seq is not None:
                p_real_s = d_seq(real, windows, lengths)
                p_fake_s = d_seq(fake.detach(), windows, lengths)
                pair_s = disc_pair_value(p_real_s, p_fake_s)
                d_seq_obj = pair_s
                if config.seq_negatives:
                    shuffled = _shuffle_time(real, lengths, rng)
                    p_shuf = d_seq(shuffled, windows, lengths)
                    aux = torch.log((1.0 - p_shuf).clamp(PROB_EPS, 1.0)).mean()
                    if batch > 1:
                        p_mis = d_seq(real, windows.roll(1, dims=0), lengths)
                        aux = 0.5 * (
                            aux + torch.log((1.0 - p_mis).clamp(PROB_EPS, 1.0)).mean()
                        )
                    d_seq_obj = pair_s + aux
                optimizers["seq_disc"].zero_grad(set_to_none=True)
                (-d_seq_obj).backward()
                optimizers["seq_disc"].step()
                v_seq = float(pair_s.detach())

            l1 = l1_lower_half_masked(real, fake, mask)
            g_loss = config.lambda_l1 * l1
            if d_img is not None:
                g_loss = g_loss + generator_adversarial(
                    d_img(fake[rows, t_pick], cond), config.saturating_generator
                )
            if d_seq is not None:
                g_loss = g_loss + generator_adversarial(
                    d_seq(fake, windows, lengths), config.saturating_generator
                )
            optimizers["generator"].zero_grad(set_to_none=True)
            g_loss.backward()
            optimizers["generator"].step()

            global_step += 1
            l1_value = float(l1.detach())
            try:
                report = LossReport(
                    step=global_step,
                    l_adv_img=v_img,
                    l_adv_seq=v_seq,
                    l_l1=l1_value,
                    total=total_objective(v_img + v_seq, l1_value, config.lambda_l1),
                    lr_generator=lr_g,
                    lr_frame_disc=lr_di if d_img is not None else 0.0,
                    lr_seq_disc=config.lr_seq_disc if d_seq is not None else 0.0,
                )
            except ValueError as exc:
                snapshot = {
                    "step": global_step,
                    "epoch": epoch,
                    "l_adv_img": v_img,
                    "l_adv_seq": v_seq,
                    "l_l1": l1_value,
                    "error": str(exc),
                }
                with open(out_dir / "abort_diagnostic.json", "w", encoding="utf-8") as fh:
                    json.dump(snapshot, fh, indent=2)
                return _finish(epoch, False, f"non-finite loss at step {global_step}: {exc}")
            log.steps.append(report)

        val = _validate(gen, val_samples, config)
        improved = np.isfinite(val["val_ssim"]) and val["val_ssim"] > best_ssim
        if improved:
            best_ssim, best_epoch, since_best = val["val_ssim"], epoch, 0
        else:
            since_best += 1
        log.epochs.append(
            {
                "epoch": epoch,
                "lr_generator": lr_g,
                "lr_frame_disc": lr_di if d_img is not None else 0.0,
                "lr_seq_disc": config.lr_seq_disc if d_seq is not None else 0.0,
                "global_step": global_step,
                **val,
                "best_val_ssim": best_ssim,
            }
        )
        save_checkpoint(last_dir, modules, optimizers, _meta(epoch, val))
        if improved:
            save_checkpoint(best_dir, modules, optimizers, _meta(epoch, val))
        if since_best >= config.patience:
            return _finish(epoch, True, None)

    return _finish(epoch, False, None)


def _ground_truth_row(
    test_samples: list[LoadedSample], embedder, lipreader
) -> metrics.SampleMetrics:
    """Reference-free metrics on the real test videos (PSNR/SSIM are N/A)."""
    fdbms, cpbds, acds, wers = [], [], [], []
    for sample in test_samples:
        frames = sample.frames_float()
        fdbms.append(np.mean([metrics.fdbm(f) for f in frames]))
        cpbds.append(np.mean([metrics.cpbd(f) for f in frames]))
        if embedder is not None:
            acds.append(metrics.acd(frames[0], frames, embedder))
        if lipreader is not None and sample.transcript:
            video = VideoSeq(pixels=frames, fps=sample.fps)
            wers.append(metrics.wer(sample.transcript, lipreader.transcribe(video)))
    row = metrics.SampleMetrics(sample_id="ground_truth")
    row.fdbm = float(np.mean(fdbms)) if fdbms else float("nan")
    row.cpbd = float(np.mean(cpbds)) if cpbds else float("nan")
    row.acd = float(np.mean(acds)) if acds else float("nan")
    row.wer = float(np.mean(wers)) if wers else None
    return row


def run_ablation(
    samples: dict[str, list[LoadedSample]],
    base_config: TrainConfig,
    out_dir: str | Path,
    embedder=None,
    lipreader=None,
) -> dict:
    """Train and evaluate {l1_only, l1_adv_img, full}, plus a ground-truth row.

    Returns {"rows": [...], "reports": {...}, "table": str}; rows come in
    the fixed order ground_truth, l1_only, l1_adv_img, full.  PSNR/SSIM on
    the ground-truth row are N/A (a video is a perfect reconstruction of
    itself); WER is N/A without a lipreader.
    """
    from .evaluate import evaluate_generated  # deferred: evaluate imports models

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    reports: dict[str, metrics.MetricsReport] = {}

    gt = _ground_truth_row(samples["test"], embedder, lipreader)
    gt_row = gt.as_row()
    gt_row["psnr"] = gt_row["ssim"] = "N/A"
    rows.append(gt_row)

    results: dict[str, TrainResult] = {}
    for mode in ABLATION_MODES:
        config = dataclasses.replace(base_config, ablation=mode)
        result = train(samples["train"], samples["val"], config, out_dir / mode)
        if result.aborted:
            raise TrainingFault(
                f"{mode} run aborted: {result.aborted}; last good checkpoint at "
                f"{result.checkpoint_dir}"
            )
        results[mode] = result
        report = evaluate_generated(
            result.checkpoint_dir,
            samples["test"],
            embedder=embedder,
            lipreader=lipreader,
            seed=base_config.seed,
        )
        report.metadata["label"] = mode
        reports[mode] = report
        agg = report.aggregate()
        rows.append({"sample_id": mode, **{c: agg[c] for c in metrics.METRIC_COLUMNS}})

    table = _format_ablation_table(rows)
    with open(out_dir / "ablation.json", "w", encoding="utf-8") as fh:
        json.dump({"rows": rows}, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    with open(out_dir / "ablation.txt", "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    return {"rows": rows, "reports": reports, "results": results, "table": table}


def _format_ablation_table(rows: list[dict]) -> str:
    header = f"{'config':<16}" + "".join(f"{c.upper():>10}" for c in metrics.METRIC_COLUMNS)
    lines = [header]
    for row in rows:
        cells = []
        for col in metrics.METRIC_COLUMNS:
            value = row.get(col)
            if value is None or value == "N/A" or (isinstance(value, float) and np.isnan(value)):
                cells.append(f"{'N/A':>10}")
            else:
                cells.append(f"{float(value):>10.4f}")
        lines.append(f"{str(row['sample_id']):<16}" + "".join(cells))
    return "\n".join(lines)
