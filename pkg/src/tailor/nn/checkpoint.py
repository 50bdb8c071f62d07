"""Binary checkpoint format.

Layout: magic ``TLRCKPT1``, version u16, u32-length-prefixed UTF-8 JSON
config block, then named parameter blobs (name length u16, UTF-8 name,
element count u64, little-endian f32 values).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"TLRCKPT1"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, config: dict, params: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(cfg)))
        fh.write(cfg)
        for name in sorted(params):
            blob = np.ascontiguousarray(params[name], dtype="<f4")
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<Q", blob.size))
            fh.write(blob.tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:8]!r}")
    (version,) = struct.unpack_from("<H", raw, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (cfg_len,) = struct.unpack_from("<I", raw, 10)
    pos = 14
    config = json.loads(raw[pos:pos + cfg_len].decode("utf-8"))
    pos += cfg_len
    params: dict[str, np.ndarray] = {}
    while pos < len(raw):
        (name_len,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (count,) = struct.unpack_from("<Q", raw, pos)
        pos += 8
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).copy()
        pos += count * 4
        params[name] = arr
    return config, params
