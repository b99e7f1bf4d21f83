"""
Wild cluster bootstrap of the clustered t-statistic under H0: ATE = 0.

Residuals come from the restricted stratum-mean model, e_ik = y_ik - Ybar_k,
and every replicate sets y*_ik = Ybar_k + w_g e_ik with one Rademacher sign
per cluster. The stratum mean cancels inside each difference in means, so a
replicate's cluster contributions are exactly w_g * AD_g; ``bootstrap_outcomes``
builds the literal y* for checking that shortcut.
"""

import numpy as np

from clustershock.config.setting import settings
from clustershock.core.design import ObservedSample
from clustershock.core.errors import TooManyClusters, ValidationError
from clustershock.core.estimators import ate_from_table, cluster_contributions, stratum_table
from clustershock.core.rng import RandomStream
from clustershock.schemas.enums import BootstrapMode
from clustershock.schemas.report import BootstrapResult
from clustershock.utils.log_util import logger

TIE_RTOL = 1e-12


def _cluster_of(s: ObservedSample) -> np.ndarray:
    if s.cluster_of_stratum is None:
        return np.arange(s.K)
    return s.cluster_of_stratum


def replicate_t(contrib: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Clustered t for every sign row; a zero clustered variance gives +inf."""
    G = contrib.shape[-1]
    a = signs * contrib
    ate = a.sum(axis=1) / G
    v = ((a - ate[:, None]) ** 2).sum(axis=1) / (G * (G - 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(v > 0, ate / np.sqrt(v), np.inf)


def observed_t(contrib: np.ndarray, ate_hat: float) -> float:
    G = len(contrib)
    v = float(np.sum((contrib - ate_hat) ** 2) / (G * (G - 1)))
    if v > 0:
        return ate_hat / np.sqrt(v)
    return 0.0 if ate_hat == 0 else np.inf


def sign_matrix(G: int, fix_first: bool = False) -> np.ndarray:
    """All 2^G Rademacher vectors (2^(G-1) with w_1 = +1 when ``fix_first``)."""
    free = G - 1 if fix_first else G
    bits = (np.arange(2**free)[:, None] >> np.arange(free)) & 1
    signs = 1.0 - 2.0 * bits
    if fix_first:
        signs = np.hstack([np.ones((len(signs), 1)), signs])
    return signs


def rademacher(rng: np.random.Generator, B: int, G: int) -> np.ndarray:
    return 2.0 * rng.integers(0, 2, size=(B, G)) - 1.0


def enumerated_t(contrib: np.ndarray, halve: bool = True) -> np.ndarray:
    """
    t* over every sign vector. With ``halve`` only w_1 = +1 is computed and
    the flipped half is its exact negation, ordered after it.
    """
    G = len(contrib)
    if not halve:
        return replicate_t(contrib, sign_matrix(G))
    t_half = replicate_t(contrib, sign_matrix(G, fix_first=True))
    return np.concatenate([t_half, -t_half])


def p_value_from_draws(t_obs: float, t_draws: np.ndarray, mode: BootstrapMode) -> float:
    extreme = int(np.count_nonzero(np.abs(t_draws) >= abs(t_obs) * (1.0 - TIE_RTOL)))
    if mode == BootstrapMode.FULL_ENUMERATION:
        return extreme / len(t_draws)
    return (extreme + 1) / (len(t_draws) + 1)


def bootstrap_outcomes(s: ObservedSample, weights: np.ndarray) -> np.ndarray:
    """y*_ik = Ybar_k + w_{g(k)} (y_ik - Ybar_k) for one sign vector over clusters."""
    means = np.bincount(s.stratum, weights=s.y, minlength=s.K) / s.n_k
    w_unit = np.asarray(weights, dtype=float)[_cluster_of(s)][s.stratum]
    base = means[s.stratum]
    return base + w_unit * (s.y - base)


def wild_cluster_bootstrap(
    s: ObservedSample,
    B: int | None = None,
    stream: RandomStream | None = None,
    mode: BootstrapMode | None = None,
    cap: int | None = None,
) -> BootstrapResult:
    cap = settings.BOOTSTRAP_ENUM_CAP if cap is None else cap
    G = s.n_clusters
    if G < 2:
        raise ValidationError("wild cluster bootstrap needs at least 2 clusters")
    if mode is None:
        mode = BootstrapMode.FULL_ENUMERATION if 2**G <= cap else BootstrapMode.SAMPLED

    t = stratum_table(s)
    ate_hat = ate_from_table(t)
    contrib = cluster_contributions(t, s.cluster_of_stratum)
    t_obs = observed_t(contrib, ate_hat)

    if mode == BootstrapMode.FULL_ENUMERATION:
        if 2**G > cap:
            raise TooManyClusters(G, cap)
        t_draws = enumerated_t(contrib)
    else:
        if B is None or B < 1 or stream is None:
            raise ValidationError("sampled bootstrap needs B >= 1 and a seeded stream")
        rng = stream.substream("bootstrap").generator()
        t_draws = replicate_t(contrib, rademacher(rng, B, G))

    p = p_value_from_draws(t_obs, t_draws, mode)
    logger.info(f"wild bootstrap ({mode.value}, {len(t_draws)} draws, G={G}): t_obs={t_obs:.4f} p={p:.4f}")
    return BootstrapResult(
        t_obs=t_obs,
        t_draws=t_draws.tolist(),
        p_value=p,
        mode=mode,
        draws=len(t_draws),
        n_clusters=G,
    )
