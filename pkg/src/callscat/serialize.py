"""Binary formats shared by tensors, feature matrices and models.

* Sidecar pair: ``<stem>.bin`` holds one little-endian float64 array in C
  order and ``<stem>.json`` holds its shape plus free-form metadata.
* Container: a single file ``MAGIC | u32 version | u32 header length |
  JSON header | raw arrays``. The header lists every array with dtype,
  shape and byte offset. Keys are sorted so equal content gives equal bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import AudioFormatError

MAGIC = b"CSCT"
VERSION = 1


def write_sidecar(stem, values: np.ndarray, meta: dict) -> None:
    stem = Path(stem)
    values = np.ascontiguousarray(values, dtype="<f8")
    header = dict(meta, dtype="<f8", shape=list(values.shape))
    stem.with_suffix(".bin").write_bytes(values.tobytes())
    stem.with_suffix(".json").write_text(json.dumps(header, indent=1, sort_keys=True) + "\n")


def read_sidecar(stem) -> tuple[np.ndarray, dict]:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    raw = stem.with_suffix(".bin").read_bytes()
    values = np.frombuffer(raw, dtype=header["dtype"]).reshape(header["shape"]).copy()
    return values, header


def write_container(path, header: dict, arrays: dict[str, np.ndarray]) -> None:
    specs, blobs, offset = {}, [], 0
    for name in sorted(arrays):
        a = np.asarray(arrays[name])
        a = np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<"))
        b = a.tobytes()
        specs[name] = {"dtype": a.dtype.str, "shape": list(a.shape), "offset": offset, "nbytes": len(b)}
        blobs.append(b)
        offset += len(b)
    head = json.dumps({"meta": header, "arrays": specs}, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(head)) + head)
        for b in blobs:
            fh.write(b)


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC or len(data) < 12:
        raise AudioFormatError(f"{path}: not a callscat container")
    version, n = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise AudioFormatError(f"{path}: unsupported container version {version}")
    head = json.loads(data[12:12 + n])
    base = 12 + n
    arrays = {}
    for name, s in head["arrays"].items():
        start = base + s["offset"]
        arrays[name] = np.frombuffer(data[start:start + s["nbytes"]], dtype=s["dtype"]).reshape(s["shape"]).copy()
    return head["meta"], arrays
