"""Deterministic checkpoint container: JSON header plus raw float64 blobs.

Layout: magic line, one JSON header line (tensor directory + metadata),
then the concatenated C-order little-endian array bytes. Writing the same
tensors and metadata twice produces byte-identical files, which numpy's
zip-based formats do not guarantee.
"""

import json

import numpy as np

MAGIC = b"GRIDCAST-CKPT-1\n"


def save_checkpoint(path, tensors, meta=None):
    """Write named float64 arrays and a JSON-serializable meta dict."""
    directory = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        raw = arr.tobytes()
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"tensors": directory, "meta": meta or {}}, sort_keys=True, ensure_ascii=True
    )
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header.encode("ascii") + b"\n")
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path):
    """Read a checkpoint; returns ({name: array}, meta)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path} is not a gridcast checkpoint")
        header = json.loads(fh.readline().decode("ascii"))
        blob = fh.read()
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=start)
        tensors[entry["name"]] = arr.reshape(shape).copy()
    return tensors, header["meta"]
