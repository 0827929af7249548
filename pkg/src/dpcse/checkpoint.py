"""Self-describing binary checkpoints with per-array checksums.

Layout::

    magic (8 bytes) | version u32 LE | header_len u64 LE | header JSON | payload

The header lists every array's name, shape, dtype, payload offset, and
CRC-32; ``meta`` carries JSON-serializable run state (config echo, seed,
epoch, optimizer step).  Arrays are raw little-endian C-order bytes.  The
whole file is a pure function of its contents — no timestamps — so saving
the same state twice produces byte-identical files.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"DPCKPT01"
VERSION = 1


class CheckpointError(ValueError):
    """A checkpoint file is malformed, corrupt, or from another version."""


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    """Write ``arrays`` and ``meta`` in the container format above."""
    entries = []
    payload = bytearray()
    for name, value in arrays.items():
        shape = np.asarray(value).shape  # ascontiguousarray promotes 0-d to 1-d
        arr = np.ascontiguousarray(value)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = le.tobytes()
        entries.append({
            "name": name,
            "shape": list(shape),
            "dtype": le.dtype.str,
            "offset": len(payload),
            "nbytes": len(raw),
            "crc32": zlib.crc32(raw),
        })
        payload += raw
    header = json.dumps({"meta": meta, "arrays": entries},
                        sort_keys=True).encode()
    blob = MAGIC + struct.pack("<IQ", VERSION, len(header)) + header + bytes(payload)
    Path(path).write_bytes(blob)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint, verifying the magic, version, and every CRC."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 12 or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack_from("<IQ", raw, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version}")
    header_start = len(MAGIC) + 12
    try:
        header = json.loads(raw[header_start:header_start + header_len])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    payload = raw[header_start + header_len:]
    arrays = {}
    for entry in header["arrays"]:
        chunk = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        if len(chunk) < entry["nbytes"]:
            raise CheckpointError(
                f"{path}: truncated payload for array {entry['name']!r}")
        if zlib.crc32(chunk) != entry["crc32"]:
            raise CheckpointError(
                f"{path}: checksum mismatch for array {entry['name']!r}")
        arr = np.frombuffer(chunk, dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return arrays, header["meta"]
