import itertools
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Hashable, Iterator

import numpy as np

from clustershock.config.setting import settings
from clustershock.core.errors import CapExceeded, ShapeMismatch, ValidationError
from clustershock.core.layout import StrataLayout
from clustershock.core.population import Population, PotentialOutcomes
from clustershock.core.rng import RandomStream
from clustershock.utils.log_util import logger


@dataclass(frozen=True, eq=False)
class Assignment:
    d: np.ndarray
    layout: StrataLayout


@dataclass(frozen=True, eq=False)
class ObservedSample:
    """
    Observed rows (stratum code, treated, y). Stratum codes run 0..K-1 and
    ``labels[code]`` is the stratum id shown to users. An optional
    ``cluster_of_stratum`` maps every stratum code to a cluster code; clusters
    are unions of whole strata.
    """

    stratum: np.ndarray
    treated: np.ndarray
    y: np.ndarray
    labels: tuple[Hashable, ...] = ()
    cluster_of_stratum: np.ndarray | None = None
    cluster_labels: tuple[Hashable, ...] = field(default=())

    def __post_init__(self):
        n = len(self.y)
        if len(self.stratum) != n or len(self.treated) != n:
            raise ShapeMismatch("stratum, treated and y must have equal length")
        if n == 0:
            raise ValidationError("sample has no rows")
        if not np.all((self.treated == 0) | (self.treated == 1)):
            raise ValidationError("treated must be 0 or 1")
        K = int(self.stratum.max()) + 1
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(1, K + 1)))
        elif len(self.labels) != K:
            raise ShapeMismatch(f"{len(self.labels)} stratum labels for {K} strata")
        n1 = np.bincount(self.stratum, weights=self.treated, minlength=K)
        nk = np.bincount(self.stratum, minlength=K)
        one_armed = np.flatnonzero((n1 < 1) | (nk - n1 < 1))
        if one_armed.size:
            raise ValidationError(f"stratum {self.labels[one_armed[0]]}: both arms must be nonempty")
        if self.cluster_of_stratum is not None:
            if np.shape(self.cluster_of_stratum) != (K,):
                raise ShapeMismatch("cluster_of_stratum needs one cluster per stratum")
            codes = np.unique(self.cluster_of_stratum)
            if not np.array_equal(codes, np.arange(len(codes))):
                raise ValidationError(f"cluster codes must run 0..G-1 with none skipped, got {codes.tolist()}")
            G = len(codes)
            if not self.cluster_labels:
                object.__setattr__(self, "cluster_labels", tuple(range(1, G + 1)))

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def K(self) -> int:
        return len(self.labels)

    @cached_property
    def n_k(self) -> np.ndarray:
        return np.bincount(self.stratum, minlength=self.K)

    @cached_property
    def n_1k(self) -> np.ndarray:
        return np.bincount(self.stratum, weights=self.treated, minlength=self.K).astype(np.int64)

    @property
    def n_0k(self) -> np.ndarray:
        return self.n_k - self.n_1k

    @property
    def n_clusters(self) -> int:
        if self.cluster_of_stratum is None:
            return self.K
        return int(self.cluster_of_stratum.max()) + 1

    def with_y(self, y: np.ndarray) -> "ObservedSample":
        return replace(self, y=np.asarray(y, dtype=float))


def assign(pop: Population, stream: RandomStream) -> Assignment:
    """
    Stratified complete randomization: every stratum treats exactly n_treat
    units and all C(n_k, n_treat) patterns are equally likely.

    Each stratum's fixed 0/1 multiset is permuted by ranking iid uniform
    keys within the stratum, which is a uniform shuffle drawn from the
    dedicated "assign" substream.
    """
    layout = pop.layout
    rng = stream.substream("assign").generator()
    keys = rng.random(layout.n)
    order = np.lexsort((keys, layout.index))
    rank = np.arange(layout.n) - layout.offsets[layout.index]
    d = np.empty(layout.n, dtype=np.int8)
    d[order] = rank < pop.n_treat[layout.index]
    return Assignment(d, layout)


def count_assignments(stratum_sizes: list[tuple[int, int]]) -> int:
    return math.prod(math.comb(n_k, n_1k) for n_k, n_1k in stratum_sizes)


def _stratum_patterns(n_k: int, n_1k: int) -> np.ndarray:
    patterns = np.zeros((math.comb(n_k, n_1k), n_k), dtype=np.int8)
    for row, treated in enumerate(itertools.combinations(range(n_k), n_1k)):
        patterns[row, list(treated)] = 1
    return patterns


def enumerate_assignments(
    stratum_sizes: list[tuple[int, int]], cap: int | None = None
) -> Iterator[tuple[Assignment, float]]:
    """Every cross-stratum assignment once, with probability prod_k 1/C(n_k, n_1k)."""
    cap = settings.ENUMERATION_CAP if cap is None else cap
    count = count_assignments(stratum_sizes)
    if count > cap:
        raise CapExceeded(count, cap)
    layout = StrataLayout(tuple(n_k for n_k, _ in stratum_sizes))
    prob = math.prod(1.0 / math.comb(n_k, n_1k) for n_k, n_1k in stratum_sizes)
    per_stratum = [_stratum_patterns(n_k, n_1k) for n_k, n_1k in stratum_sizes]
    logger.debug(f"enumerating {count} assignments over {layout.K} strata")
    for combo in itertools.product(*per_stratum):
        yield Assignment(np.concatenate(combo), layout), prob


def assignment_matrix(stratum_sizes: list[tuple[int, int]], cap: int | None = None) -> np.ndarray:
    """All assignments stacked as rows, in the same order as enumerate_assignments."""
    cap = settings.ENUMERATION_CAP if cap is None else cap
    count = count_assignments(stratum_sizes)
    if count > cap:
        raise CapExceeded(count, cap)
    per_stratum = [_stratum_patterns(n_k, n_1k) for n_k, n_1k in stratum_sizes]
    grids = np.meshgrid(*[np.arange(len(p)) for p in per_stratum], indexing="ij")
    return np.concatenate(
        [p[g.ravel()] for p, g in zip(per_stratum, grids)], axis=1
    )


def observe(
    po: PotentialOutcomes, a: Assignment, cluster_of_stratum: np.ndarray | None = None
) -> ObservedSample:
    if np.shape(po.Y0) != np.shape(a.d) or np.shape(po.Y1) != np.shape(a.d):
        raise ShapeMismatch(f"outcomes {np.shape(po.Y0)} and assignment {np.shape(a.d)} differ")
    y = np.where(a.d == 1, po.Y1, po.Y0)
    return ObservedSample(
        stratum=a.layout.index,
        treated=a.d.astype(np.int8),
        y=y,
        cluster_of_stratum=cluster_of_stratum,
    )
