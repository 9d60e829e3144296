"""Counter-based random streams.

A stream is a Philox4x64 generator whose 128-bit key is ``(seed, stream_id)``;
the Philox counter plays the role of the draw index.  Two streams with the
same key produce the same sequence on any machine and in any thread.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_U64 = 2**64


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or not 0 <= int(value) < _U64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at draw index 0."""
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, offset: int) -> "RngStream":
        return RngStream(self.seed, (self.stream_id + offset) % _U64)

    def substream(self, *labels) -> "RngStream":
        """Stream with a seed derived from this key and ``labels``."""
        return RngStream(derive_seed(self.seed, self.stream_id, *labels), 0)


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary printable parts."""
    h = hashlib.blake2b(repr(tuple(parts)).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)) and not isinstance(rng, bool):
        return RngStream(int(rng)).generator()
    raise TypeError(f"expected a Generator, RngStream or integer seed, got {type(rng).__name__}")
