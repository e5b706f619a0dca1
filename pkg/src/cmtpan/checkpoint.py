"""Checkpoints: one raw tensor file per parameter plus a JSON manifest.

Parameters are stored as little-endian float64 so a reloaded model
reproduces the trained one exactly.
"""

from __future__ import annotations

import os
from pathlib import Path

from .data import IntegrityError, read_manifest, read_tensor, write_manifest, write_tensor
from .model import ModelConfig, Params, param_shapes
from .tensor import Tensor


def save_checkpoint(params: Params, config: ModelConfig, directory: str | os.PathLike,
                    seed: int, extra: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = [write_tensor(directory, name, t.data, "f64le") for name, t in params.items()]
    manifest = {
        "kind": "checkpoint", "version": 1, "seed": seed, "config": config.to_dict(),
        "entries": entries, **(extra or {}),
    }
    write_manifest(directory, manifest)
    return directory


def load_checkpoint(directory: str | os.PathLike) -> tuple[Params, ModelConfig, dict]:
    directory = Path(directory)
    manifest = read_manifest(directory)
    if manifest.get("kind") != "checkpoint":
        raise IntegrityError(f"{directory}: not a checkpoint manifest")
    config = ModelConfig.from_dict(manifest["config"])
    expected = param_shapes(config)
    stored = {e["name"]: e for e in manifest["entries"]}
    if set(stored) != set(expected):
        missing = sorted(set(expected) - set(stored))
        unknown = sorted(set(stored) - set(expected))
        raise IntegrityError(f"{directory}: parameters disagree with config (missing {missing[:3]}, unknown {unknown[:3]})")
    params: Params = {}
    for name in expected:
        entry = stored[name]
        if tuple(entry["shape"]) != expected[name]:
            raise IntegrityError(f"{entry['file']}: shape {entry['shape']} but config needs {list(expected[name])}")
        params[name] = Tensor(read_tensor(directory, entry), requires_grad=True, name=name)
    return params, config, manifest
