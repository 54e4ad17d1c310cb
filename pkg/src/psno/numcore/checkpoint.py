"""Binary parameter checkpoints.

Layout (little endian): b"NOPSCK01", u32 header length, UTF-8 JSON header,
then each parameter as raw float64 in header order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .params import ParamSet

MAGIC = b"NOPSCK01"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: ParamSet, header: dict) -> None:
    header = dict(header)
    header["params"] = [[name, list(shape)] for name, shape in params.shapes().items()]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name, a in params.items():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ParamSet, dict]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if len(data) < 12:
        raise CheckpointError(f"{path}: truncated header")
    (length,) = struct.unpack("<I", data[8:12])
    if len(data) < 12 + length:
        raise CheckpointError(f"{path}: truncated header")
    header = json.loads(data[12:12 + length].decode("utf-8"))
    offset = 12 + length
    arrays = {}
    for name, shape in header["params"]:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(data):
            raise CheckpointError(f"{path}: truncated parameter {name}")
        arrays[name] = np.frombuffer(data[offset:end], dtype="<f8").reshape(shape).astype(np.float64)
        offset = end
    if offset != len(data):
        raise CheckpointError(f"{path}: trailing bytes")
    return ParamSet(arrays), header
