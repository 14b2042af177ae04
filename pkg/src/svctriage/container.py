"""Versioned binary container for model files.

Layout: magic line, 8-byte big-endian header length, canonical JSON header
(metadata plus a tensor manifest with names, dtypes, shapes, offsets),
then raw little-endian tensor bytes in name order.  Writing the same model
twice produces identical bytes.
"""

from __future__ import annotations

import json

import numpy as np

from .records import DataError

MAGIC = b"SVTRIAGE1\n"


def write_container(path, meta: dict, arrays: dict) -> None:
    names = sorted(arrays)
    manifest = []
    offset = 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype == np.float64 or arr.dtype == np.float32:
            arr = arr.astype("<f8")
        elif arr.dtype.kind in "iub":
            arr = arr.astype("<i8")
        else:
            raise DataError(f"unsupported tensor dtype {arr.dtype} for {name!r}")
        blob = arr.tobytes()
        manifest.append(
            {
                "name": name,
                "dtype": str(arr.dtype),
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {"meta": meta, "manifest": manifest}, sort_keys=True, ensure_ascii=False
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "big"))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_container(path) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise DataError(f"{path}: not a svctriage model container")
        header_len = int.from_bytes(fh.read(8), "big")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        payload = fh.read()
    arrays: dict[str, np.ndarray] = {}
    for entry in header["manifest"]:
        start = entry["offset"]
        blob = payload[start:start + entry["nbytes"]]
        arr = np.frombuffer(blob, dtype=entry["dtype"]).reshape(entry["shape"])
        arrays[entry["name"]] = arr.copy()
    return header["meta"], arrays
