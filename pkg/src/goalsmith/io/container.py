"""Single-file artifact container: JSON header + raw little-endian blobs.

Layout: 4-byte magic, 8-byte little-endian header length, UTF-8 JSON header,
then the blob bytes back to back. The header carries arbitrary metadata plus
an index of blob offsets/shapes/dtypes. Files are immutable once written.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"GSC1"

_DTYPES = {"float32": "<f4", "float64": "<f8", "int64": "<i8", "uint8": "|u1"}


class ContainerError(RuntimeError):
    pass


def save_container(path, meta: dict, arrays: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    index = {}
    payload = bytearray()
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            arr = arr.astype(np.float32)
            dtype = "float32"
        raw = np.ascontiguousarray(arr).astype(_DTYPES[dtype]).tobytes()
        index[name] = {"offset": len(payload), "shape": list(arr.shape), "dtype": dtype}
        payload.extend(raw)
    header = json.dumps({"meta": meta, "blobs": index}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(bytes(payload))
    return path


def load_container(path):
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ContainerError(f"{path} is not a goalsmith container")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = fh.read()
    arrays = {}
    for name, entry in header["blobs"].items():
        dt = np.dtype(_DTYPES[entry["dtype"]])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype=dt, count=count, offset=start)
        arrays[name] = arr.reshape(entry["shape"]).copy()
    return header["meta"], arrays


def content_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def array_hash(*arrays) -> str:
    h = hashlib.sha256()
    for arr in arrays:
        arr = np.ascontiguousarray(arr)
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()
