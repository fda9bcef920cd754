"""Binary checkpoint container.

Layout, all integers little-endian u32:
  magic "HMCF" | format version | config length + UTF-8 config snapshot |
  tensor count | per tensor: name length + UTF-8 name, rank, extents,
  row-major float32 data | CRC-32 of every preceding byte.

Tensors are written in sorted-name order so identical states produce
identical files.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import CheckpointError, CheckpointVersionError

MAGIC = b"HMCF"
FORMAT_VERSION = 1


def save_checkpoint(path, config_text: str, state: dict[str, np.ndarray]):
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    cfg = config_text.encode("utf-8")
    chunks.append(struct.pack("<I", len(cfg)))
    chunks.append(cfg)
    chunks.append(struct.pack("<I", len(state)))
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f4")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    payload = b"".join(chunks)
    with open(path, "wb") as f:
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(f"checkpoint {self.path} truncated at byte {self.pos}")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path) -> tuple[str, dict[str, np.ndarray]]:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except FileNotFoundError:
        raise CheckpointError(f"no such checkpoint: {path}")
    if len(blob) < 4 or blob[-4:] != struct.pack("<I", zlib.crc32(blob[:-4]) & 0xFFFFFFFF):
        raise CheckpointError(f"checkpoint {path} failed its integrity check")
    r = _Reader(blob[:-4], path)
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint {path} has format version {version}, expected {FORMAT_VERSION}")
    config_text = r.take(r.u32()).decode("utf-8")
    state: dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank))
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        data = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape)
        state[name] = data.copy()
    return config_text, state
