from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np
from scipy import stats

from clustershock.config.setting import settings
from clustershock.core.design import ObservedSample
from clustershock.core.errors import DegenerateArm, ValidationError
from clustershock.schemas.report import EstimateReport, StratumEstimate


@dataclass(frozen=True, eq=False)
class StratumTable:
    """Per-stratum arrays: ate_k, ad_k = (n_k / n_bar) ate_k, v_rob_k (nan if undefined), counts."""

    ate: np.ndarray
    v_rob: np.ndarray
    n_k: np.ndarray
    n_1k: np.ndarray
    n_0k: np.ndarray
    labels: tuple[Hashable, ...]

    @property
    def K(self) -> int:
        return len(self.ate)

    @property
    def n(self) -> int:
        return int(self.n_k.sum())

    @property
    def n_bar(self) -> float:
        return self.n / self.K

    @property
    def weights(self) -> np.ndarray:
        return self.n_k / self.n_bar

    @property
    def ad(self) -> np.ndarray:
        return self.weights * self.ate

    @classmethod
    def from_estimates(cls, per_stratum: Sequence[StratumEstimate]) -> "StratumTable":
        return cls(
            ate=np.array([e.ate_k for e in per_stratum], dtype=float),
            v_rob=np.array([np.nan if e.v_rob_k is None else e.v_rob_k for e in per_stratum]),
            n_k=np.array([e.n_k for e in per_stratum], dtype=np.int64),
            n_1k=np.array([e.n_1k for e in per_stratum], dtype=np.int64),
            n_0k=np.array([e.n_0k for e in per_stratum], dtype=np.int64),
            labels=tuple(e.stratum for e in per_stratum),
        )

    def to_estimates(self) -> list[StratumEstimate]:
        ad = self.ad
        return [
            StratumEstimate(
                stratum=self.labels[k],
                ate_k=float(self.ate[k]),
                ad_k=float(ad[k]),
                v_rob_k=None if np.isnan(self.v_rob[k]) else float(self.v_rob[k]),
                n_k=int(self.n_k[k]),
                n_1k=int(self.n_1k[k]),
                n_0k=int(self.n_0k[k]),
            )
            for k in range(self.K)
        ]


def table_from_arrays(
    stratum: np.ndarray,
    treated: np.ndarray,
    y: np.ndarray,
    K: int,
    labels: tuple[Hashable, ...] = (),
) -> StratumTable:
    t = treated.astype(float)
    c = 1.0 - t
    n_k = np.bincount(stratum, minlength=K)
    n_1k = np.bincount(stratum, weights=t, minlength=K)
    n_0k = n_k - n_1k
    m1 = np.bincount(stratum, weights=t * y, minlength=K) / n_1k
    m0 = np.bincount(stratum, weights=c * y, minlength=K) / n_0k
    resid = y - np.where(treated == 1, m1[stratum], m0[stratum])
    ss1 = np.bincount(stratum, weights=t * resid**2, minlength=K)
    ss0 = np.bincount(stratum, weights=c * resid**2, minlength=K)
    with np.errstate(divide="ignore", invalid="ignore"):
        s2_1 = np.where(n_1k >= 2, ss1 / (n_1k - 1), np.nan)
        s2_0 = np.where(n_0k >= 2, ss0 / (n_0k - 1), np.nan)
    return StratumTable(
        ate=m1 - m0,
        v_rob=s2_1 / n_1k + s2_0 / n_0k,
        n_k=n_k.astype(np.int64),
        n_1k=n_1k.astype(np.int64),
        n_0k=n_0k.astype(np.int64),
        labels=labels or tuple(range(1, K + 1)),
    )


def stratum_table(s: ObservedSample) -> StratumTable:
    return table_from_arrays(s.stratum, s.treated, s.y, s.K, s.labels)


def _as_table(per_stratum: Sequence[StratumEstimate] | StratumTable) -> StratumTable:
    if isinstance(per_stratum, StratumTable):
        return per_stratum
    return StratumTable.from_estimates(per_stratum)


def estimate_strata(s: ObservedSample) -> list[StratumEstimate]:
    return stratum_table(s).to_estimates()


def ate_from_table(t: StratumTable) -> float:
    return float(np.sum(t.ad) / t.K)


def estimate_ate(s: ObservedSample) -> float:
    return ate_from_table(stratum_table(s))


def variance_robust(per_stratum: Sequence[StratumEstimate] | StratumTable) -> float:
    t = _as_table(per_stratum)
    missing = np.flatnonzero(np.isnan(t.v_rob))
    if missing.size:
        raise DegenerateArm(t.labels[missing[0]])
    return float(np.sum(t.weights**2 * t.v_rob) / t.K**2)


def cluster_contributions(
    t: StratumTable, cluster_of_stratum: np.ndarray | None = None
) -> np.ndarray:
    """AD terms at the clustering level: AD_g = (G / n) sum_{k in g} n_k ate_k."""
    if cluster_of_stratum is None:
        return t.ad
    G = int(cluster_of_stratum.max()) + 1
    return G / t.n * np.bincount(cluster_of_stratum, weights=t.n_k * t.ate, minlength=G)


def clustered_from_contributions(contrib: np.ndarray, ate_hat: float, small_sample: bool = False) -> float:
    G = len(contrib)
    if G < 2:
        raise ValidationError("clustered variance needs at least 2 clusters")
    v = float(np.sum((contrib - ate_hat) ** 2) / (G * (G - 1)))
    return v * G / (G - 1) if small_sample else v


def variance_clustered(
    per_stratum: Sequence[StratumEstimate] | StratumTable,
    ate_hat: float,
    cluster_of_stratum: np.ndarray | None = None,
    small_sample: bool = False,
) -> float:
    t = _as_table(per_stratum)
    return clustered_from_contributions(cluster_contributions(t, cluster_of_stratum), ate_hat, small_sample)


def _t_and_p(ate_hat: float, se: float) -> tuple[float, float, bool]:
    if se <= 0.0:
        return 0.0, 1.0, True
    t = ate_hat / se
    return t, float(2.0 * stats.norm.sf(abs(t))), False


def report(
    s: ObservedSample, alpha: float | None = None, small_sample: bool = False
) -> EstimateReport:
    alpha = settings.DEFAULT_ALPHA if alpha is None else alpha
    t = stratum_table(s)
    ate_hat = ate_from_table(t)
    v_rob = variance_robust(t)
    v_clu = variance_clustered(t, ate_hat, s.cluster_of_stratum, small_sample)
    z = float(stats.norm.ppf(1.0 - alpha / 2.0))
    se_rob, se_clu = float(np.sqrt(v_rob)), float(np.sqrt(v_clu))
    t_rob, p_rob, deg_rob = _t_and_p(ate_hat, se_rob)
    t_clu, p_clu, deg_clu = _t_and_p(ate_hat, se_clu)
    G = s.n_clusters
    return EstimateReport(
        alpha=alpha,
        ate_hat=ate_hat,
        v_rob=v_rob,
        v_clu=v_clu,
        se_rob=se_rob,
        se_clu=se_clu,
        t_rob=t_rob,
        t_clu=t_clu,
        p_rob=p_rob,
        p_clu=p_clu,
        ci_rob=(ate_hat - z * se_rob, ate_hat + z * se_rob),
        ci_clu=(ate_hat - z * se_clu, ate_hat + z * se_clu),
        degenerate_se_rob=deg_rob,
        degenerate_se_clu=deg_clu,
        small_sample_factor=G / (G - 1) if small_sample else 1.0,
        n=s.n,
        K=s.K,
        n_clusters=G,
        per_stratum=t.to_estimates(),
    )
