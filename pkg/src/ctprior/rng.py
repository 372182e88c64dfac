"""Hierarchical counter-based random streams.

Every stochastic component of the engine draws from an :class:`RngStream`
addressed by a path of keys under a single master seed, e.g.
``seed -> batch -> item -> "noise"``.  Streams with distinct paths are
statistically independent, and a stream's output is a pure function of
``(seed, path)``: the same address yields bit-identical draws in any
process, on any platform, regardless of what other streams were consumed.
This is what makes batch items parallelizable without losing byte-level
reproducibility.

Backed by numpy's Philox counter-based generator keyed through
``SeedSequence`` spawn keys, both of which have stable cross-platform
output guarantees.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["RngStream"]

# Path keys may be ints or short labels; labels are folded to 32-bit ints
# with a keyed blake2s so the mapping is stable across processes.
_LABEL_BYTES = 4


def _key_to_int(key: int | str) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"stream keys must be non-negative, got {key}")
        return int(key)
    digest = hashlib.blake2s(key.encode("utf-8"), digest_size=_LABEL_BYTES).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """A node in the stream tree; immutable address, lazily built generator."""

    __slots__ = ("seed", "path", "_generator")

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.path = path
        self._generator: np.random.Generator | None = None

    def child(self, *keys: int | str) -> "RngStream":
        """Derive the sub-stream addressed by ``path + keys``."""
        return RngStream(self.seed, self.path + tuple(_key_to_int(k) for k in keys))

    @property
    def generator(self) -> np.random.Generator:
        """The stream's generator. Created on first use; stateful thereafter.

        Call sites that need replay should derive a fresh child per use
        instead of re-reading a shared generator.
        """
        if self._generator is None:
            seq = np.random.SeedSequence(self.seed, spawn_key=self.path)
            self._generator = np.random.Generator(np.random.Philox(seq))
        return self._generator

    def fresh_generator(self) -> np.random.Generator:
        """A new generator at this address, positioned at draw zero."""
        seq = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(seq))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"
