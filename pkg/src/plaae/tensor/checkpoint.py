"""Binary checkpoint container.

Layout::

    b"PLAAECKP"                      8-byte magic
    uint64 little-endian             header length in bytes
    JSON header (utf-8)              {"format": 1, "meta": {...},
                                      "tensors": [{"name", "shape", "offset"}]}
    payload                          concatenated little-endian float64 arrays

``offset`` is in bytes from the start of the payload.  Round trips are
bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import PlaaeError

MAGIC = b"PLAAECKP"
FORMAT_VERSION = 1
_LE_F64 = np.dtype("<f8")


class CheckpointError(PlaaeError, IOError):
    pass


def save_checkpoint(path, tensors, meta=None):
    entries, chunks, offset = [], [], 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype=_LE_F64)
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps(
        {"format": FORMAT_VERSION, "meta": meta or {}, "tensors": entries}, sort_keys=True
    ).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for c in chunks:
            fh.write(c)
    return path


def read_header(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a PLAAE checkpoint (bad magic)")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n).decode("utf-8"))
    if header.get("format") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format {header.get('format')}")
    return header, 16 + n


def load_checkpoint(path):
    """Return ``(tensors, meta)``."""
    try:
        header, start = read_header(path)
        payload = Path(path).read_bytes()[start:]
    except (OSError, ValueError, struct.error) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    tensors = {}
    for e in header["tensors"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = np.frombuffer(payload, dtype=_LE_F64, count=count, offset=e["offset"])
        tensors[e["name"]] = arr.astype(np.float64).reshape(e["shape"])
    return tensors, header["meta"]
