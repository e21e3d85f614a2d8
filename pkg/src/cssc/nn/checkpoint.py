"""Checkpoints: a JSON document naming tensors plus a flat float64 blob.

The blob holds every tensor in declaration order as little-endian 64-bit
floats with no padding.  ``save_checkpoint("run.json", ...)`` writes
``run.json`` and ``run.bin`` side by side.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..core import CsscError

FORMAT = "cssc-checkpoint"
VERSION = 1


class CheckpointError(CsscError):
    pass


def save_checkpoint(path, tensors: dict, metadata: dict | None = None) -> Path:
    path = Path(path)
    blob_path = path.with_suffix(".bin")
    entries, chunks, offset = [], [], 0
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
        chunks.append(arr.ravel())
    blob = np.concatenate(chunks) if chunks else np.zeros(0, dtype="<f8")
    blob_path.write_bytes(blob.astype("<f8").tobytes())
    doc = {"format": FORMAT, "version": VERSION, "dtype": "<f8",
           "blob": blob_path.name, "count": int(offset), "tensors": entries,
           "metadata": metadata or {}}
    path.write_text(json.dumps(doc, indent=2))
    return path


def load_checkpoint(path) -> tuple[dict, dict]:
    """Return ``(tensors, metadata)``."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} document")
    blob = np.frombuffer((path.parent / doc["blob"]).read_bytes(), dtype="<f8")
    if blob.size != doc["count"]:
        raise CheckpointError(f"blob holds {blob.size} values, expected {doc['count']}")
    tensors = {}
    for entry in doc["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape, dtype=np.int64))
        tensors[entry["name"]] = blob[entry["offset"]:entry["offset"] + n].reshape(shape).astype(np.float64)
    return tensors, doc.get("metadata", {})
