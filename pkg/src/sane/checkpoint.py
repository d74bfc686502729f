"""Named-tensor checkpoints: one .npz of arrays plus a JSON manifest of names and shapes."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autodiff import Tensor

FORMAT = "sane-checkpoint/1"


class CheckpointError(ValueError):
    pass


def _paths(path) -> tuple[Path, Path]:
    base = Path(path)
    stem = base.with_suffix("") if base.suffix in (".npz", ".json") else base
    return stem.with_suffix(".npz"), stem.with_suffix(".json")


def save_checkpoint(path, weights: dict[str, Tensor | np.ndarray], arch: dict[str, Tensor | np.ndarray] | None = None, **meta) -> Path:
    """Write ``weights`` and optional architecture vectors; returns the .npz path."""
    arrays, manifest = {}, []
    for group, tensors in (("weight", weights), ("arch", arch or {})):
        for name, t in tensors.items():
            data = np.asarray(t.data if isinstance(t, Tensor) else t, dtype=np.float64)
            key = f"{group}:{name}"
            if key in arrays:
                raise CheckpointError(f"duplicate tensor name {name!r}")
            arrays[key] = data
            manifest.append({"name": name, "group": group, "shape": list(data.shape)})
    npz, js = _paths(path)
    npz.parent.mkdir(parents=True, exist_ok=True)
    with open(npz, "wb") as f:
        np.savez(f, **arrays)
    doc = {"format": FORMAT, "tensors": manifest, "meta": meta}
    js.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return npz


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray], dict]:
    """Returns (weights, arch, meta); shapes are checked against the manifest."""
    npz, js = _paths(path)
    try:
        doc = json.loads(js.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{js.name}: cannot read manifest ({exc})") from exc
    if doc.get("format") != FORMAT:
        raise CheckpointError(f"{js.name}: unsupported format {doc.get('format')!r}")
    out: dict[str, dict[str, np.ndarray]] = {"weight": {}, "arch": {}}
    with np.load(npz) as data:
        for entry in doc["tensors"]:
            key = f"{entry['group']}:{entry['name']}"
            if key not in data:
                raise CheckpointError(f"{npz.name}: missing tensor {entry['name']!r}")
            arr = data[key]
            if list(arr.shape) != entry["shape"]:
                raise CheckpointError(f"{npz.name}: {entry['name']!r} has shape {arr.shape}, manifest says {entry['shape']}")
            out[entry["group"]][entry["name"]] = arr
    return out["weight"], out["arch"], doc.get("meta", {})
