"""Binary checkpoint container (CKPT v1).

Layout, little-endian::

    b"CLNG"  u32 version
    u32 metadata length, UTF-8 ``key=value`` lines (sorted by key)
    u32 tensor count
    per tensor: u32 name length, name bytes, u32 rank, rank x u64 dims, float32 data
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .._io import atomic_write_bytes
from ..errors import CheckpointMismatchError, ParseError

MAGIC = b"CLNG"
FORMAT_VERSION = 1


def encode_checkpoint(metadata: dict, tensors: dict) -> bytes:
    meta_lines = []
    for key in sorted(metadata):
        value = str(metadata[key])
        if "\n" in value or "=" in key or "\n" in key:
            raise ValueError(f"metadata {key!r} must be a single-line key=value pair")
        meta_lines.append(f"{key}={value}\n")
    meta = "".join(meta_lines).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<I", len(meta)), meta]
    chunks.append(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw_name = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def write_checkpoint(path, metadata: dict, tensors: dict) -> None:
    atomic_write_bytes(path, encode_checkpoint(metadata, tensors))


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise ParseError(f"truncated checkpoint at byte {self.pos}", None, self.path)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(data: bytes, path=None):
    """Returns (metadata dict of strings, tensors dict of float32 arrays)."""
    r = _Reader(data, path)
    if r.take(4) != MAGIC:
        raise ParseError("not a chanlingo checkpoint (bad magic)", None, path)
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointMismatchError("format_version", FORMAT_VERSION, version)
    (meta_len,) = r.unpack("<I")
    metadata = {}
    for line in r.take(meta_len).decode("utf-8").splitlines():
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(f"bad metadata line {line!r}", None, path)
        metadata[key] = value
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<I")
        name = r.take(name_len).decode("utf-8")
        (rank,) = r.unpack("<I")
        shape = r.unpack(f"<{rank}Q") if rank else ()
        n = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(r.take(4 * n), dtype="<f4").astype(np.float32).reshape(shape)
        tensors[name] = arr
    if r.pos != len(data):
        raise ParseError(f"{len(data) - r.pos} trailing bytes after last tensor", None, path)
    return metadata, tensors


def read_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes(), path=path)
