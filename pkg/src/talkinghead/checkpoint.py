"""Checkpoint directory format: one .npy file per named tensor.

A checkpoint is a directory holding every parameter and buffer of every
network as `<module>.<state_key>.npy`, optimizer tensors under an
`optim.` prefix, and a `metadata.json` with the architecture config,
seed, epoch/step counters and whatever the caller records (wall time,
validation metrics).  Plain numpy files keep the format inspectable and
independent of pickle.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
import torch
from torch import nn

__all__ = ["save_checkpoint", "load_checkpoint", "load_metadata", "CheckpointError"]

METADATA_FILE = "metadata.json"


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(
    out_dir: str | Path,
    modules: dict[str, nn.Module],
    optimizers: dict[str, torch.optim.Optimizer] | None = None,
    metadata: dict | None = None,
) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, module in modules.items():
        for key, tensor in module.state_dict().items():
            np.save(out_dir / f"{name}.{key}.npy", tensor.detach().cpu().numpy())

    optim_meta: dict = {}
    for name, opt in (optimizers or {}).items():
        sd = opt.state_dict()
        scalars: dict = {}
        for pid, bucket in sd["state"].items():
            for key, value in bucket.items():
                if torch.is_tensor(value):
                    np.save(out_dir / f"optim.{name}.{pid}.{key}.npy", value.cpu().numpy())
                else:
                    scalars.setdefault(str(pid), {})[key] = value
        optim_meta[name] = {
            "param_groups": sd["param_groups"],
            "scalars": scalars,
            "state_keys": {
                str(pid): sorted(k for k, v in bucket.items() if torch.is_tensor(v))
                for pid, bucket in sd["state"].items()
            },
        }

    meta = dict(metadata or {})
    meta.setdefault("saved_at_unix", time.time())
    meta["modules"] = {n: sorted(m.state_dict().keys()) for n, m in modules.items()}
    meta["optim"] = optim_meta
    with open(out_dir / METADATA_FILE, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return out_dir


def load_metadata(ckpt_dir: str | Path) -> dict:
    path = Path(ckpt_dir) / METADATA_FILE
    if not path.exists():
        raise CheckpointError(f"not a checkpoint directory (no {METADATA_FILE}): {ckpt_dir}")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _load_tensor(path: Path) -> torch.Tensor:
    if not path.exists():
        raise CheckpointError(f"missing tensor file: {path}")
    return torch.from_numpy(np.load(path))


def load_checkpoint(
    ckpt_dir: str | Path,
    modules: dict[str, nn.Module],
    optimizers: dict[str, torch.optim.Optimizer] | None = None,
) -> dict:
    """Restore module (and optionally optimizer) state in place.

    Modules must already be built with the architecture recorded in the
    metadata; returns that metadata.
    """
    ckpt_dir = Path(ckpt_dir)
    meta = load_metadata(ckpt_dir)
    for name, module in modules.items():
        expected = meta.get("modules", {}).get(name)
        keys = expected if expected is not None else sorted(module.state_dict().keys())
        state = {key: _load_tensor(ckpt_dir / f"{name}.{key}.npy") for key in keys}
        module.load_state_dict(state)

    for name, opt in (optimizers or {}).items():
        entry = meta.get("optim", {}).get(name)
        if entry is None:
            raise CheckpointError(f"checkpoint has no optimizer state for {name!r}")
        state: dict = {}
        for pid, keys in entry["state_keys"].items():
            bucket = {k: _load_tensor(ckpt_dir / f"optim.{name}.{pid}.{k}.npy") for k in keys}
            bucket.update(entry["scalars"].get(pid, {}))
            state[int(pid)] = bucket
        opt.load_state_dict({"state": state, "param_groups": entry["param_groups"]})
    return meta
