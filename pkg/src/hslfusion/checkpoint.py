"""Binary model checkpoints: a JSON config followed by named float32 buffers.

Layout, all little-endian:

    magic ``HLF1``
    u32 config length, config JSON (utf-8, sorted keys)
    u32 record count
    per record: u32 name length, name utf-8,
                u32 ndim, ndim x u32 extents,
                float32 data (row-major)

Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"HLF1"


class CheckpointError(ValueError):
    """Checkpoint file is malformed."""


def save_checkpoint(path, config: dict, buffers) -> None:
    """Write ``config`` plus ordered (name, array) ``buffers`` to ``path``."""
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", len(blob))
    out += blob
    buffers = list(buffers)
    out += struct.pack("<I", len(buffers))
    for name, arr in buffers:
        data = np.asarray(arr, dtype="<f4")  # tobytes() below emits C order
        name_b = name.encode("utf-8")
        out += struct.pack("<I", len(name_b))
        out += name_b
        out += struct.pack("<I", data.ndim)
        out += struct.pack(f"<{data.ndim}I", *data.shape)
        out += data.tobytes()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a model checkpoint (bad magic)")
    pos = 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(raw):
            raise CheckpointError(f"{path} is truncated")
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    (cfg_len,) = struct.unpack("<I", take(4))
    config = json.loads(take(cfg_len).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    buffers: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        data = np.frombuffer(take(size * 4), dtype="<f4").reshape(shape)
        buffers[name] = data.astype(np.float32)  # writable native copy
    if pos != len(raw):
        raise CheckpointError(f"{path} has {len(raw) - pos} trailing bytes")
    return config, buffers
