"""Parameter checkpoints.

Layout: the 8-byte magic ``RNPECKPT``, a little-endian ``uint64`` header
length, a UTF-8 JSON header, then every tensor as little-endian float64 in
header order. The header lists ``{name, shape}`` per tensor, the config hash
and the full training config.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RNPECKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, state: dict[str, np.ndarray], config: dict, config_hash: str,
                    extra: dict | None = None) -> Path:
    path = Path(path)
    names = sorted(state)
    header = {
        "format": "robustnpe-checkpoint",
        "version": FORMAT_VERSION,
        "config_hash": config_hash,
        "config": config,
        "tensors": [{"name": n, "shape": list(np.shape(state[n]))} for n in names],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    payload = b"".join(np.ascontiguousarray(state[n], dtype="<f8").tobytes() for n in names)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC + struct.pack("<Q", len(blob)) + blob + payload)
    os.replace(tmp, path)
    return path


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Return ``(state, header)``."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(buf) < 16 or buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (n,) = struct.unpack("<Q", buf[8:16])
    if 16 + n > len(buf):
        raise CheckpointError(f"{path}: truncated header")
    header = json.loads(buf[16:16 + n].decode())
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {header.get('version')}")
    offset = 16 + n
    state = {}
    for t in header["tensors"]:
        count = int(np.prod(t["shape"], dtype=np.int64))
        end = offset + 8 * count
        if end > len(buf):
            raise CheckpointError(f"{path}: truncated payload at {t['name']}")
        state[t["name"]] = np.frombuffer(buf[offset:end], dtype="<f8").reshape(t["shape"]).astype(float)
        offset = end
    if offset != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - offset} trailing bytes")
    return state, header
