"""Checkpoint storage: a JSON manifest plus one raw little-endian float64 blob.

The manifest lists each array's name, shape, dtype and byte offset into the
blob.  Round trips are bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MANIFEST_NAME = "manifest.json"
BLOB_NAME = "arrays.bin"
FORMAT_VERSION = 1


def save_arrays(dirpath, arrays: dict[str, np.ndarray], meta: dict | None = None):
    """Write named float64 arrays to dirpath as manifest + blob."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        raw = arr.tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": "<f8",
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        chunks.append(raw)
        offset += len(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "meta": meta or {},
        "entries": entries,
    }
    (d / BLOB_NAME).write_bytes(b"".join(chunks))
    (d / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_arrays(dirpath) -> tuple[dict[str, np.ndarray], dict]:
    """Read arrays and meta back; inverse of save_arrays, bit-exact."""
    d = Path(dirpath)
    manifest = json.loads((d / MANIFEST_NAME).read_text(encoding="utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(
            f"unsupported checkpoint format_version: {manifest.get('format_version')}"
        )
    blob = (d / BLOB_NAME).read_bytes()
    arrays = {}
    for e in manifest["entries"]:
        raw = blob[e["offset"] : e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(raw, dtype=e["dtype"]).reshape(e["shape"]).copy()
    return arrays, manifest.get("meta", {})


def checkpoint_exists(dirpath) -> bool:
    d = Path(dirpath)
    return (d / MANIFEST_NAME).is_file() and (d / BLOB_NAME).is_file()
