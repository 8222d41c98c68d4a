"""TOML run configuration for the command-line entry points.

A run config has three sections::

    [data]
    manifest = "toy/manifest.jsonl"
    dataset = "auto"          # auto | grid | tcdtimit (auto reads dataset.json)
    out_dir = "runs/exp1"

    [train]                   # any TrainConfig field, e.g.
    ablation = "full"
    batch_size = 16
    seed = 0

    [backends]
    embedder = "stub"         # stub | none | cmd:... | http(s)://...
    lipreader = "toy"         # toy | none | cmd:... | http(s)://...

Unknown keys anywhere are an error naming the field.  The environment
variables TALKINGHEAD_EMBEDDER and TALKINGHEAD_LIPREADER override the
backend entries, so endpoints can be swapped without editing configs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import tomli

from .training import TrainConfig

__all__ = ["RunConfig", "load_run_config", "ConfigError"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    manifest: Path
    out_dir: Path
    dataset: str = "auto"
    train: TrainConfig = TrainConfig()
    embedder: str | None = "stub"
    lipreader: str | None = None
    window_sec: float = 0.16


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}")

    unknown = set(raw) - {"data", "train", "backends"}
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")

    data = raw.get("data", {})
    allowed_data = {"manifest", "dataset", "out_dir", "window_sec"}
    bad = set(data) - allowed_data
    if bad:
        raise ConfigError(f"{path}: unknown [data] fields {sorted(bad)}")
    if "manifest" not in data:
        raise ConfigError(f"{path}: [data] section needs a 'manifest' field")

    try:
        train = TrainConfig.from_json(raw.get("train", {}))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: [train] {exc}")

    backends = raw.get("backends", {})
    bad = set(backends) - {"embedder", "lipreader"}
    if bad:
        raise ConfigError(f"{path}: unknown [backends] fields {sorted(bad)}")

    base = path.parent

    def _resolve(p: str) -> Path:
        p = Path(p)
        return p if p.is_absolute() else base / p

    return RunConfig(
        manifest=_resolve(str(data["manifest"])),
        out_dir=_resolve(str(data.get("out_dir", "runs/default"))),
        dataset=str(data.get("dataset", "auto")),
        train=train,
        embedder=os.environ.get("TALKINGHEAD_EMBEDDER", backends.get("embedder", "stub")),
        lipreader=os.environ.get("TALKINGHEAD_LIPREADER", backends.get("lipreader")),
        window_sec=float(data.get("window_sec", 0.16)),
    )
