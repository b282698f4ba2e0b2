"""Counter-based random streams keyed by (seed, module, stream index).

Every stream is a ``numpy.random.Generator`` backed by Philox-4x64-10. The
128-bit Philox key is the first 16 bytes of
``SHA-256(f"{seed}:{module}:{index}")`` read little-endian, and the counter
starts at zero. Adding a new module or stream therefore never changes the
draws of an existing one.
"""
from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def stream_key(seed: int, module: str, index: int = 0) -> int:
    digest = hashlib.sha256(f"{int(seed) & MASK64}:{module}:{int(index)}".encode()).digest()
    return int.from_bytes(digest[:16], "little")


def make_stream(seed: int, module: str, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(seed, module, index)))


class StreamFactory:
    """Hands out independent generators for one scenario seed."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64

    def stream(self, module: str, index: int = 0) -> np.random.Generator:
        return make_stream(self.seed, module, index)

    def derive_seed(self, label: str, index: int) -> int:
        """Child seed for trial sweeps; stable across runs and platforms."""
        return stream_key(self.seed, label, index) & MASK64
