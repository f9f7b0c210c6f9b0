"""Binary checkpoint format.

Layout: 4-byte magic ``HPO1`` + 8-byte little-endian metadata length + UTF-8
JSON metadata + concatenated little-endian IEEE-754 arrays. The metadata
carries the config hash, seed, epoch and a tensor manifest with names, shapes,
dtypes and byte offsets into the payload. Round trips are bit-exact.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import CheckpointError, NonFiniteError

MAGIC = b"HPO1"
_DTYPE_TAGS = {"<f8": np.dtype("<f8"), "<f4": np.dtype("<f4")}


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    config_hash: str
    seed: int
    epoch: int
    extra: dict = field(default_factory=dict)


def save_checkpoint(
    path,
    tensors: Mapping[str, np.ndarray],
    config_hash: str,
    seed: int,
    epoch: int,
    extra: dict | None = None,
) -> None:
    manifest = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"refusing to save non-finite tensor {name!r}")
        tag = "<f4" if arr.dtype == np.float32 else "<f8"
        blob = np.ascontiguousarray(arr, dtype=_DTYPE_TAGS[tag]).tobytes()
        manifest.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": tag,
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    meta = {
        "config_hash": config_hash,
        "seed": int(seed),
        "epoch": int(epoch),
        "manifest": manifest,
        "extra": extra or {},
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(meta_bytes)))
        fh.write(meta_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path, expected_config_hash: str | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError(
            f"bad magic {raw[:4]!r}, expected {MAGIC!r}", code="magic-mismatch"
        )
    (meta_len,) = struct.unpack("<Q", raw[4:12])
    if len(raw) < 12 + meta_len:
        raise CheckpointError("metadata truncated", code="truncated")
    try:
        meta = json.loads(raw[12 : 12 + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"metadata unreadable: {err}", code="truncated") from None
    payload = raw[12 + meta_len :]

    if expected_config_hash is not None and meta["config_hash"] != expected_config_hash:
        raise CheckpointError(
            f"config hash mismatch: checkpoint {meta['config_hash']} vs current "
            f"{expected_config_hash}",
            code="config-hash-mismatch",
        )

    tensors: dict[str, np.ndarray] = {}
    cursor = 0
    for entry in meta["manifest"]:
        offset, nbytes = int(entry["offset"]), int(entry["nbytes"])
        if offset != cursor:
            raise CheckpointError(
                f"manifest offsets overlap or leave gaps at {entry['name']!r}",
                code="manifest-mismatch",
            )
        if offset + nbytes > len(payload):
            raise CheckpointError(
                f"payload truncated: {entry['name']!r} ends past the file",
                code="truncated",
            )
        dtype = _DTYPE_TAGS.get(entry["dtype"])
        if dtype is None:
            raise CheckpointError(
                f"unknown dtype tag {entry['dtype']!r}", code="manifest-mismatch"
            )
        shape = tuple(int(s) for s in entry["shape"])
        expected = int(np.prod(shape)) * dtype.itemsize if shape else dtype.itemsize
        if expected != nbytes:
            raise CheckpointError(
                f"shape/size mismatch for {entry['name']!r}", code="manifest-mismatch"
            )
        arr = np.frombuffer(payload[offset : offset + nbytes], dtype=dtype).reshape(shape)
        tensors[entry["name"]] = arr.copy()
        cursor = offset + nbytes
    if cursor != len(payload):
        raise CheckpointError("payload has trailing bytes", code="manifest-mismatch")

    return Checkpoint(
        tensors=tensors,
        config_hash=meta["config_hash"],
        seed=int(meta["seed"]),
        epoch=int(meta["epoch"]),
        extra=meta.get("extra", {}),
    )
