"""Binary model checkpoints.

Layout: an 8-byte magic, a little-endian u32 length, a canonical JSON
manifest of that length, then the raw tensor payloads back to back.  Each
manifest entry records name, dtype (always f32), shape and byte offset into
the payload region; tensors are stored row-major little-endian.  Training
runs in float64, values are truncated to 32 bits on save.

The manifest also carries whatever metadata the caller passes (model
variant flags, config hash, RNG seed, vocabulary), making checkpoints
self-describing.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"ARCSTCK1"


class CheckpointError(Exception):
    pass


def save_checkpoint(path, tensors: dict, meta: dict) -> None:
    """Write named float arrays plus a metadata manifest."""
    entries = []
    payloads = []
    offset = 0
    for name, array in tensors.items():
        data = np.ascontiguousarray(array, dtype="<f4")
        entries.append({
            "name": name,
            "dtype": "f32",
            "shape": list(data.shape),
            "offset": offset,
            "nbytes": data.nbytes,
        })
        payloads.append(data.tobytes())
        offset += data.nbytes
    manifest = dict(meta)
    manifest["entries"] = entries
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<I", len(blob)))
        handle.write(blob)
        for payload in payloads:
            handle.write(payload)


def read_manifest(path) -> dict:
    with open(path, "rb") as handle:
        magic = handle.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (length,) = struct.unpack("<I", handle.read(4))
        return json.loads(handle.read(length).decode("utf-8"))


def load_checkpoint(path) -> tuple[dict, dict]:
    """Return ({name: float64 array}, manifest-without-entries)."""
    with open(path, "rb") as handle:
        magic = handle.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (length,) = struct.unpack("<I", handle.read(4))
        manifest = json.loads(handle.read(length).decode("utf-8"))
        base = handle.tell()
        tensors = {}
        for entry in manifest["entries"]:
            handle.seek(base + entry["offset"])
            raw = handle.read(entry["nbytes"])
            if len(raw) != entry["nbytes"]:
                raise CheckpointError(f"{path}: truncated payload for {entry['name']}")
            array = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"])
            tensors[entry["name"]] = array.astype(np.float64)
    meta = {k: v for k, v in manifest.items() if k != "entries"}
    return tensors, meta
