"""
Named-tensor container.

Layout (all integers little-endian)::

    b"DFNT" | u32 format version | u32 header length | header (UTF-8 JSON)
    u32 tensor count
    per tensor: u32 name length | name (UTF-8) | u32 rank | u64 extents...
                | float64 values, little-endian, row-major

Files are written to a sibling temporary file and moved into place, so an
interrupted write never leaves a half-written container under the final name.
"""
import json
import os
import struct
from pathlib import Path

import numpy as np

from difashion.exceptions import CheckpointError

MAGIC = b"DFNT"
FORMAT_VERSION = 1


def _as_array(value):
    data = getattr(value, "data", value)
    return np.ascontiguousarray(data, dtype="<f8")


def encode_tensors(tensors, header=None):
    header_bytes = json.dumps(header or {}, sort_keys=True).encode("utf-8")
    chunks = [
        MAGIC,
        struct.pack("<II", FORMAT_VERSION, len(header_bytes)),
        header_bytes,
        struct.pack("<I", len(tensors)),
    ]
    for name, value in tensors.items():
        array = _as_array(value)
        name_bytes = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct.pack("<I", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        chunks.append(array.tobytes(order="C"))
    return b"".join(chunks)


class _Reader:
    def __init__(self, payload, source):
        self.payload = payload
        self.offset = 0
        self.source = source

    def take(self, count):
        end = self.offset + count
        if end > len(self.payload):
            raise CheckpointError(f"Truncated tensor container {self.source}")
        chunk = self.payload[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_tensors(payload, source="<bytes>"):
    reader = _Reader(payload, source)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{source} is not a tensor container")
    version, header_length = reader.unpack("<II")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{source} has container format {version}, "
            f"this build reads format {FORMAT_VERSION}"
        )
    try:
        header = json.loads(reader.take(header_length).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"Corrupt header in {source}", str(exc)) from exc

    (count,) = reader.unpack("<I")
    tensors = {}
    for _ in range(count):
        (name_length,) = reader.unpack("<I")
        name = reader.take(name_length).decode("utf-8")
        (rank,) = reader.unpack("<I")
        shape = reader.unpack(f"<{rank}Q") if rank else ()
        size = int(np.prod(shape)) if rank else 1
        values = np.frombuffer(reader.take(8 * size), dtype="<f8")
        tensors[name] = values.astype(np.float64).reshape(shape)
    if reader.offset != len(payload):
        raise CheckpointError(f"Trailing bytes after tensors in {source}")
    return tensors, header


def write_tensors(path, tensors, header=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temporary = path.with_name(path.name + ".tmp")
    with open(temporary, "wb") as handle:
        handle.write(encode_tensors(tensors, header))
        handle.flush()
        os.fsync(handle.fileno())
    os.replace(temporary, path)
    return path


def read_tensors(path):
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"Cannot read tensor container {path}", str(exc)) from exc
    return decode_tensors(payload, source=str(path))
