"""Binary parameter checkpoints.

Layout: magic ``b"VDLS"``, format version (u32 LE), then one record per
tensor: name length (u32), UTF-8 name, rank (u32), extents (u32 each),
raw little-endian float32 values. Records are read until end of file.
Roundtrips are bit-exact.

Model metadata (configs, normalization, bindings, loss curves) lives in
a JSON sidecar next to the binary file: ``<path>.json``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"VDLS"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=np.float32)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            for extent in arr.shape:
                fh.write(struct.pack("<I", extent))
            fh.write(arr.astype("<f4", copy=False).tobytes())


def load_tensors(path) -> dict[str, np.ndarray]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    offset = 8
    tensors: dict[str, np.ndarray] = {}
    while offset < len(blob):
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        shape = struct.unpack_from(f"<{rank}I", blob, offset)
        offset += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        values = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        tensors[name] = values.reshape(shape).astype(np.float32)
    return tensors


def file_digest(path) -> str:
    """Stable identifier for a checkpoint: SHA-256 of the binary file."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_sidecar(path, meta: dict) -> None:
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_sidecar(path) -> dict:
    sidecar = Path(str(path) + ".json")
    if not sidecar.exists():
        raise CheckpointError(f"missing checkpoint sidecar {sidecar}")
    return json.loads(sidecar.read_text())
