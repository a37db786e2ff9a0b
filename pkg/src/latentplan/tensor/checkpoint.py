"""Checkpoint container: one JSON manifest line, then a raw float32 blob.

Layout: ``<manifest-json>\n<blob>`` where the manifest lists every tensor's
name, shape, dtype and byte offset into the blob. Floats are little-endian
32-bit; round-trips are bit-exact. Counters and other scalars ride in the
manifest's ``meta`` object.
"""

from __future__ import annotations

import json
from typing import Dict, Optional, Tuple

import numpy as np

FORMAT = "latentplan-checkpoint-v1"


class CheckpointError(Exception):
    pass


def save_arrays(path: str, arrays: Dict[str, np.ndarray], meta: Optional[dict] = None) -> None:
    entries = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f4")
        raw = arr.tobytes()
        entries.append(
            {"name": name, "shape": list(arr.shape), "dtype": "<f4", "offset": offset, "nbytes": len(raw)}
        )
        blobs.append(raw)
        offset += len(raw)
    manifest = {"format": FORMAT, "meta": meta or {}, "tensors": entries}
    line = json.dumps(manifest, separators=(",", ":"), sort_keys=True)
    if "\n" in line:
        raise CheckpointError("manifest must be a single line")
    with open(path, "wb") as f:
        f.write(line.encode("utf-8"))
        f.write(b"\n")
        for raw in blobs:
            f.write(raw)


def load_arrays(path: str) -> Tuple[Dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        header = f.readline()
        blob = f.read()
    try:
        manifest = json.loads(header.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt manifest: {e}") from e
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"unknown checkpoint format: {manifest.get('format')!r}")
    arrays: Dict[str, np.ndarray] = {}
    for ent in manifest["tensors"]:
        shape = tuple(ent["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = ent["offset"] + ent["nbytes"]
        if ent["nbytes"] != count * 4 or end > len(blob):
            raise CheckpointError(f"blob truncated or entry inconsistent for {ent['name']!r}")
        arr = np.frombuffer(blob[ent["offset"] : end], dtype="<f4").reshape(shape)
        arrays[ent["name"]] = arr.copy()
    return arrays, manifest.get("meta", {})


def restore_into(named_params, arrays: Dict[str, np.ndarray], prefix: str = "") -> None:
    """Copy arrays into parameters by name; validates everything before any
    mutation so a mismatch never leaves a partially loaded model."""
    named = list(named_params)
    for name, p in named:
        key = prefix + name
        if key not in arrays:
            raise CheckpointError(f"checkpoint missing parameter {key!r}")
        if tuple(arrays[key].shape) != tuple(p.shape):
            raise CheckpointError(
                f"shape mismatch for {key!r}: checkpoint {arrays[key].shape}, model {tuple(p.shape)}"
            )
    for name, p in named:
        src = arrays[prefix + name]
        p.data = src.astype(p.data.dtype, copy=True)
