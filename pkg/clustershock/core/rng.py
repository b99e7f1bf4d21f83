import zlib
from dataclasses import dataclass

import numpy as np


def _key_word(key: int | str) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if key < 0:
        raise ValueError(f"substream keys must be non-negative, got {key}")
    return int(key)


@dataclass(frozen=True)
class RandomStream:
    """
    Master seed plus a path of named substream keys.

    Every path maps to its own SeedSequence, so draws made from
    ``stream.substream("rep", r, "eps")`` are reproducible in isolation and
    independent of every other path under the same seed. ``generator()``
    returns a fresh Generator each call, which keeps draw functions pure.
    """

    seed: int
    path: tuple[int | str, ...] = ()

    def substream(self, *keys: int | str) -> "RandomStream":
        return RandomStream(self.seed, self.path + tuple(keys))

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=self.seed, spawn_key=tuple(_key_word(k) for k in self.path)
        )

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.seed_sequence())
