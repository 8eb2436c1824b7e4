"""Keyed, reproducible random streams.

Streams are derived from a root seed by hashing string/int key parts into
SeedSequence spawn keys, so `stream.child("replica", i)` yields the same
generator regardless of worker scheduling or call order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_words(part) -> tuple[int, ...]:
    if isinstance(part, (int, np.integer)):
        part = f"i{int(part)}"
    if not isinstance(part, str):
        raise TypeError(f"stream key parts must be str or int, got {part!r}")
    digest = hashlib.sha256(part.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


class RandomStream:
    """A seeded RNG node; children are derived deterministically by key."""

    def __init__(self, seed: int, _spawn: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._spawn = _spawn
        self._generator = None

    def child(self, *key) -> "RandomStream":
        spawn = self._spawn
        for part in key:
            spawn = spawn + _key_words(part)
        return RandomStream(self.seed, spawn)

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self._spawn)
            self._generator = np.random.default_rng(seq)
        return self._generator

    def keyed_uniform(self, *key) -> float:
        """Stateless uniform in [0, 1) tied to (seed, stream key, *key).

        Used for per-vertex marks (e.g. thinning) so that couplings across
        retention probabilities share the same marks.
        """
        h = hashlib.sha256()
        h.update(str(self.seed).encode())
        for word in self._spawn:
            h.update(word.to_bytes(4, "little"))
        for part in key:
            for word in _key_words(part):
                h.update(word.to_bytes(4, "little"))
        return int.from_bytes(h.digest()[:8], "little") / 2.0**64

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, spawn={self._spawn})"
