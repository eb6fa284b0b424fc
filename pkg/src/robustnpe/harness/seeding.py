"""Named random streams derived from one master seed.

Each stream is a Philox generator keyed by the master seed and a hash of the
stream name, so adding a new stream never shifts the draws of existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np

STREAMS = ("init", "train-sim", "train-obs", "train-noise", "eval")


def _name_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


def stream(seed: int, name: str) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & (2 ** 64 - 1), _name_key(name)])
    return np.random.Generator(np.random.Philox(ss))


def streams(seed: int, names=STREAMS) -> dict[str, np.random.Generator]:
    return {n: stream(seed, n) for n in names}
