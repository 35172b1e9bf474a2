"""Flat binary checkpoint container with a JSON index header.

Layout: 8-byte magic, uint64 header length, UTF-8 JSON header, then the raw
little-endian payloads back to back. The header lists (name, shape, dtype,
offset, nbytes) per record plus a free-form metadata dict. Round trips are
bit-exact.
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from ..errors import IoError

_MAGIC = b"MFCKPT01"


def save_checkpoint(path: str | os.PathLike, tensors: dict[str, np.ndarray],
                    meta: dict | None = None) -> None:
    records = []
    payloads = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        raw = arr.tobytes()
        records.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": arr.dtype.str,
            "offset": offset,
            "nbytes": len(raw),
        })
        payloads.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta or {}, "tensors": records}, sort_keys=True).encode()
    try:
        with open(path, "wb") as f:
            f.write(_MAGIC)
            f.write(struct.pack("<Q", len(header)))
            f.write(header)
            for raw in payloads:
                f.write(raw)
    except OSError as e:
        raise IoError(f"cannot write checkpoint {path}: {e}") from e


def load_checkpoint(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise IoError(f"cannot read checkpoint {path}: {e}") from e
    if blob[: len(_MAGIC)] != _MAGIC:
        raise IoError(f"{path} is not a checkpoint file")
    (hlen,) = struct.unpack("<Q", blob[len(_MAGIC): len(_MAGIC) + 8])
    hstart = len(_MAGIC) + 8
    header = json.loads(blob[hstart: hstart + hlen].decode())
    base = hstart + hlen
    tensors: dict[str, np.ndarray] = {}
    for rec in header["tensors"]:
        start = base + rec["offset"]
        raw = blob[start: start + rec["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(rec["dtype"])).reshape(rec["shape"]).copy()
        tensors[rec["name"]] = arr
    return tensors, header["meta"]
