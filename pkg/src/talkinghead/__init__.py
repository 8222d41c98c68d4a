"""Talking-head video synthesis from a still image and raw audio.

The package is organised around a recurrent image generator conditioned on
an identity frame and a sliding window of waveform samples, two adversarial
discriminators (per-frame and sequence-level), and the training / evaluation
machinery needed to reproduce the desk-scale experiments: a synthetic
audio-visual dataset, no-reference and full-reference image metrics, and an
ablation harness.

Typical entry points:

    from talkinghead import make_toy_dataset, TrainConfig, train
    from talkinghead import evaluate_dataset, run_ablation

or the ``talkinghead`` console script for the command-line workflow.
"""

from .audio import (
    AudioClip,
    AudioFrameSeq,
    AudioRateError,
    FramingConfigError,
    compute_stride,
    frame_audio,
    resample_to_divisible,
)
from .backends import (
    BackendError,
    StubFaceEmbedder,
    ToyOracleLipreader,
    make_embedder,
    make_lipreader,
)
from .checkpoint import CheckpointError, load_checkpoint, load_metadata, save_checkpoint
from .config import ConfigError, RunConfig, load_run_config
from .evaluate import (
    evaluate_dataset,
    evaluate_generated,
    generate_for_sample,
    load_generator,
    seq_disc_separability,
)
from .losses import (
    LossReport,
    disc_pair_value,
    generator_adversarial,
    l1_lower_half,
    total_objective,
)
from .media import (
    Frame,
    ManifestError,
    MediaValidationError,
    SampleManifestEntry,
    VideoSeq,
    load_manifest,
    load_sample,
    load_wav,
    write_manifest,
    write_sample,
    write_wav,
)
from .metrics import MetricsReport, SampleMetrics, acd, cpbd, fdbm, psnr, ssim, wer
from .models import (
    ArchConfig,
    AudioEncoder,
    FrameDiscriminator,
    Generator,
    IdentityEncoder,
    SequenceDiscriminator,
)
from .toydata import TOY_FPS, TOY_SAMPLE_RATE, TOY_VOCABULARY, ToyGeometry, make_toy_dataset
from .training import ABLATION_MODES, TrainConfig, TrainingFault, run_ablation, train

__version__ = "0.1.0"

__all__ = [
    "ABLATION_MODES",
    "ArchConfig",
    "AudioClip",
    "AudioEncoder",
    "AudioFrameSeq",
    "AudioRateError",
    "BackendError",
    "CheckpointError",
    "ConfigError",
    "Frame",
    "FrameDiscriminator",
    "FramingConfigError",
    "Generator",
    "IdentityEncoder",
    "LossReport",
    "ManifestError",
    "MediaValidationError",
    "MetricsReport",
    "RunConfig",
    "SampleManifestEntry",
    "SampleMetrics",
    "SequenceDiscriminator",
    "TOY_FPS",
    "TOY_SAMPLE_RATE",
    "TOY_VOCABULARY",
    "ToyGeometry",
    "ToyOracleLipreader",
    "TrainConfig",
    "TrainingFault",
    "StubFaceEmbedder",
    "VideoSeq",
    "acd",
    "compute_stride",
    "cpbd",
    "disc_pair_value",
    "evaluate_dataset",
    "evaluate_generated",
    "fdbm",
    "frame_audio",
    "generate_for_sample",
    "generator_adversarial",
    "l1_lower_half",
    "load_checkpoint",
    "load_generator",
    "load_manifest",
    "load_metadata",
    "load_run_config",
    "load_sample",
    "load_wav",
    "make_embedder",
    "make_lipreader",
    "make_toy_dataset",
    "psnr",
    "resample_to_divisible",
    "run_ablation",
    "save_checkpoint",
    "seq_disc_separability",
    "ssim",
    "total_objective",
    "train",
    "wer",
    "write_manifest",
    "write_sample",
    "write_wav",
    "__version__",
]
