from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class StrataLayout:
    """Shape of a ragged per-stratum vector: sizes, offsets and unit->stratum index."""

    sizes: tuple[int, ...]

    @property
    def K(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return int(sum(self.sizes))

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.sizes))).astype(np.int64)

    @cached_property
    def index(self) -> np.ndarray:
        return np.repeat(np.arange(self.K), self.sizes)

    def slice(self, k: int) -> slice:
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def matches(self, values: np.ndarray) -> bool:
        return np.shape(values) == (self.n,)
