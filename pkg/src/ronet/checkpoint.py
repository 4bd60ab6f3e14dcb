"""Binary weight checkpoints.

Layout (all integers little-endian)::

    b"RONETCK1"                       8-byte magic
    uint32 version                    currently 1
    uint32 tensor count
    per tensor, in table order:
        uint32 name length, UTF-8 name bytes
        uint8 rank, uint32 dims[rank]
        float32 values, row-major
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .layers import Weights

MAGIC = b"RONETCK1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode(weights: Weights) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(weights))]
    seen = set()
    for name, t in weights.items():
        if name in seen:
            raise CheckpointError(f"duplicate tensor name {name!r}")
        seen.add(name)
        data = t.data if isinstance(t, Tensor) else np.asarray(t)
        if data.ndim > 255:
            raise CheckpointError(f"{name}: rank {data.ndim} too large")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", data.ndim))
        parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(np.ascontiguousarray(data, dtype="<f4").tobytes())
    return b"".join(parts)


def decode(blob: bytes, trainable_buffers: bool = False) -> Weights:
    """Parse a checkpoint; raises :class:`CheckpointError` on any malformation.

    Parameters come back with ``requires_grad=True``; batch-norm running
    statistics stay plain buffers unless ``trainable_buffers``.
    """
    view = memoryview(blob)
    pos = 0

    def take(n: int, what: str) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError(f"truncated checkpoint while reading {what} at byte {pos}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(8, "magic")) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    table: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4, "name length"))
        try:
            name = bytes(take(nlen, "name")).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"tensor name is not UTF-8 at byte {pos}") from exc
        if name in table:
            raise CheckpointError(f"duplicate tensor name {name!r}")
        (rank,) = struct.unpack("<B", take(1, "rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        values = np.frombuffer(take(4 * n, f"values of {name}"), dtype="<f4").astype(np.float32)
        table[name] = values.reshape(dims)
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes after the last tensor")
    out: Weights = {}
    for name, arr in table.items():
        buffer = name.endswith((".running_mean", ".running_var"))
        out[name] = Tensor(arr, requires_grad=trainable_buffers or not buffer, dtype=np.float32)
    return out


def checkpoint_save(weights: Weights, path: str | Path) -> str:
    """Write ``weights`` and return the git-style blob hash of the file contents."""
    blob = encode(weights)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)
    return blob_hash(blob)


def checkpoint_load(path: str | Path) -> Weights:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc})") from exc
    try:
        return decode(blob)
    except CheckpointError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc


def blob_hash(blob: bytes) -> str:
    """SHA-1 of ``b"blob <size>\\0" + content``, as git computes object ids."""
    return hashlib.sha1(b"blob %d\0" % len(blob) + blob).hexdigest()


def file_hash(path: str | Path) -> str:
    return blob_hash(Path(path).read_bytes())
