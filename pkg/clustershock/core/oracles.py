"""
Closed-form truths the Monte Carlo engine is checked against.

Notation: w_k = n_k / n_bar, ATE_k the stratum mean of y1 - y0, d_eta_k the
shock difference eta_k(1) - eta_k(0). All per-stratum sample variances use
the n_k - 1 denominator.
"""

from dataclasses import dataclass

import numpy as np

from clustershock.config.setting import settings
from clustershock.core.design import assignment_matrix
from clustershock.core.errors import (
    CapExceeded,
    MissingShocks,
    UnequalStrataSizes,
    UnsupportedMode,
)
from clustershock.core.population import (
    Population,
    ShockRealization,
    check_shock_shapes,
    conditional_means,
    realize_outcomes,
)
from clustershock.schemas.enums import ShockModel
from clustershock.schemas.theory import (
    AssignmentMoments,
    EstimandSet,
    ExpectedEstimators,
    Theory,
    TrueVariances,
)
from clustershock.utils.log_util import logger


@dataclass(frozen=True)
class NeymanTerms:
    s2_0: np.ndarray
    s2_1: np.ndarray
    s2_tau: np.ndarray
    sigma2_0: np.ndarray
    sigma2_1: np.ndarray
    ate_k: np.ndarray


def _stratum_means(pop: Population, values: np.ndarray) -> np.ndarray:
    return np.bincount(pop.layout.index, weights=values, minlength=pop.K) / pop.sizes


def _stratum_s2(pop: Population, values: np.ndarray) -> np.ndarray:
    idx = pop.layout.index
    centered = values - _stratum_means(pop, values)[idx]
    return np.bincount(idx, weights=centered**2, minlength=pop.K) / (pop.sizes - 1)


def neyman_terms(pop: Population, m0: np.ndarray, m1: np.ndarray) -> NeymanTerms:
    return NeymanTerms(
        s2_0=_stratum_s2(pop, m0),
        s2_1=_stratum_s2(pop, m1),
        s2_tau=_stratum_s2(pop, m1 - m0),
        sigma2_0=_stratum_means(pop, pop.eps_sd0**2),
        sigma2_1=_stratum_means(pop, pop.eps_sd1**2),
        ate_k=_stratum_means(pop, m1 - m0),
    )


def _is_additive(pop: Population) -> bool:
    return pop.shock_model == ShockModel.ADDITIVE


def _require_additive(pop: Population, what: str) -> None:
    if not _is_additive(pop):
        raise UnsupportedMode(f"{what} has no closed form under multiplicative_eta shocks")


def _unit_means(pop: Population, shocks: ShockRealization | None) -> tuple[np.ndarray, np.ndarray]:
    """Outcome means entering the Neyman terms: y in additive mode, E[Y | eta] otherwise."""
    if _is_additive(pop):
        return pop.y0, pop.y1
    if shocks is None:
        raise MissingShocks("multiplicative_eta conditional variance needs a shock realization")
    check_shock_shapes(pop, shocks)
    return conditional_means(pop, shocks.eta0, shocks.eta1)


def _aggregate(pop: Population, per_stratum: np.ndarray) -> float:
    return float(np.sum(pop.weights**2 * per_stratum) / pop.K**2)


def eta_difference_variances(pop: Population) -> np.ndarray:
    return np.array([s.eta_dist.diff_variance() for s in pop.strata])


def eta_variance_component(pop: Population) -> float:
    """(1/K^2) sum_k w_k^2 V(d_eta_k): what the shocks add to the conditional variance."""
    _require_additive(pop, "eta variance component")
    return _aggregate(pop, eta_difference_variances(pop))


def estimands(
    pop: Population, shocks: ShockRealization | None = None, require_conditional: bool = False
) -> EstimandSet:
    ate = float(np.mean(pop.y1 - pop.y0))
    if shocks is None:
        if require_conditional:
            raise MissingShocks("conditional estimands need a shock realization")
        return EstimandSet(ate=ate)
    check_shock_shapes(pop, shocks)
    if _is_additive(pop):
        ate_given_eta = ate + float(np.sum(pop.sizes * (shocks.eta1 - shocks.eta0)) / pop.n)
    else:
        m0, m1 = conditional_means(pop, shocks.eta0, shocks.eta1)
        ate_given_eta = float(np.mean(m1 - m0))
    po = realize_outcomes(pop, shocks)
    return EstimandSet(
        ate=ate,
        ate_given_eta=ate_given_eta,
        ate_given_all=float(np.mean(po.Y1 - po.Y0)),
    )


def conditional_variance_k(pop: Population, shocks: ShockRealization | None = None) -> np.ndarray:
    m0, m1 = _unit_means(pop, shocks)
    t = neyman_terms(pop, m0, m1)
    n1, n0 = pop.n_treat, pop.n_control
    return t.s2_0 / n0 + t.s2_1 / n1 - t.s2_tau / pop.sizes + t.sigma2_1 / n1 + t.sigma2_0 / n0


def conditional_variance(pop: Population, shocks: ShockRealization | None = None) -> float:
    return _aggregate(pop, conditional_variance_k(pop, shocks))


def true_conditional_variance(pop: Population, shocks: ShockRealization | None = None) -> TrueVariances:
    """
    V(ATE_hat | eta). In additive mode it does not depend on the eta values,
    so ``shocks`` may be omitted; multiplicative mode needs them.
    """
    v_k = conditional_variance_k(pop, shocks)
    return TrueVariances(v_cond_k=v_k.tolist(), v_cond=_aggregate(pop, v_k))


def true_unconditional_variance(pop: Population) -> TrueVariances:
    _require_additive(pop, "unconditional variance")
    v_k = conditional_variance_k(pop)
    return TrueVariances(
        v_cond_k=v_k.tolist(),
        v_cond=_aggregate(pop, v_k),
        v_uncond=_aggregate(pop, v_k + eta_difference_variances(pop)),
    )


def corollary1_gap(pop: Population) -> float:
    """
    E[K V_clu] - E[K V_rob] for equal stratum sizes:
    mean V(d_eta_k) + sum_k (ATE_k - ATE)^2 / (K - 1) - mean S2_tau_k / n_bar.
    """
    _require_additive(pop, "clustered-minus-robust gap")
    if not pop.equal_sizes:
        raise UnequalStrataSizes(f"gap needs equal stratum sizes, got {sorted(set(pop.layout.sizes))}")
    t = neyman_terms(pop, pop.y0, pop.y1)
    between = float(np.sum((t.ate_k - t.ate_k.mean()) ** 2) / (pop.K - 1))
    return float(eta_difference_variances(pop).mean() + between - t.s2_tau.mean() / pop.n_bar)


def _ad_moments(pop: Population) -> tuple[np.ndarray, np.ndarray]:
    """E(AD_k) and V(AD_k) over both shocks and assignment."""
    v_k = conditional_variance_k(pop) + eta_difference_variances(pop)
    ate_k = _stratum_means(pop, pop.y1 - pop.y0)
    w = pop.weights
    return w * ate_k, w**2 * v_k


def asymptotic_variances(pop: Population) -> tuple[float, float]:
    """Finite-K values of sigma^2 and sigma_+^2."""
    _require_additive(pop, "asymptotic variances")
    mean_ad, var_ad = _ad_moments(pop)
    # mean E(AD^2) - mean E(AD)^2 and mean E(AD^2) - (mean E AD)^2, without cancellation
    sigma2 = float(var_ad.mean())
    sigma2_plus = sigma2 + float(np.mean((mean_ad - mean_ad.mean()) ** 2))
    return sigma2, sigma2_plus


def expected_estimators(pop: Population, shocks: ShockRealization | None = None) -> ExpectedEstimators:
    """
    Exact E[V_rob] and E[V_clu]. Given shocks the expectations are over eps
    and the assignment with eta held fixed, otherwise over everything
    (additive only). Strata are independent so
    E[V_clu] = V(ATE_hat) + sum_k (E AD_k - mean E AD)^2 / (K (K - 1)).
    """
    if shocks is None:
        _require_additive(pop, "unconditional estimator expectations")
        m0, m1 = pop.y0, pop.y1
        d_eta_var = eta_difference_variances(pop)
    else:
        check_shock_shapes(pop, shocks)
        m0, m1 = conditional_means(pop, shocks.eta0, shocks.eta1)
        d_eta_var = np.zeros(pop.K)
    t = neyman_terms(pop, m0, m1)
    n1, n0 = pop.n_treat, pop.n_control
    e_rob_k = (t.s2_1 + t.sigma2_1) / n1 + (t.s2_0 + t.sigma2_0) / n0
    v_k = e_rob_k - t.s2_tau / pop.sizes + d_eta_var
    mean_ad = pop.weights * t.ate_k
    v_ate = _aggregate(pop, v_k)
    e_clu = v_ate + float(np.sum((mean_ad - mean_ad.mean()) ** 2) / (pop.K * (pop.K - 1)))
    return ExpectedEstimators(
        conditional=shocks is not None,
        e_v_rob=_aggregate(pop, e_rob_k),
        e_v_clu=e_clu,
        e_K_v_clu=pop.K * e_clu,
    )


def exact_assignment_moments(
    pop: Population, shocks: ShockRealization, cap: int | None = None
) -> AssignmentMoments:
    """
    Moments of the estimators over every assignment with outcomes frozen at
    ``realize_outcomes(pop, shocks)``. With eps_sd = 0 the variance equals
    ``true_conditional_variance``.
    """
    po = realize_outcomes(pop, shocks)
    D = assignment_matrix(list(zip(pop.layout.sizes, pop.n_treat.tolist())), cap=cap)
    logger.debug(f"exact moments over {len(D)} assignments")
    Y = np.where(D == 1, po.Y1, po.Y0)
    Dt = D.astype(float)
    Dc = 1.0 - Dt
    ate = np.empty((len(D), pop.K))
    v_rob = np.empty((len(D), pop.K))
    for k in range(pop.K):
        cols = pop.layout.slice(k)
        y, t, c = Y[:, cols], Dt[:, cols], Dc[:, cols]
        n1, n0 = pop.n_treat[k], pop.n_control[k]
        m1 = (t * y).sum(axis=1) / n1
        m0 = (c * y).sum(axis=1) / n0
        ate[:, k] = m1 - m0
        if n1 >= 2 and n0 >= 2:
            ss1 = (t * (y - m1[:, None]) ** 2).sum(axis=1) / (n1 - 1)
            ss0 = (c * (y - m0[:, None]) ** 2).sum(axis=1) / (n0 - 1)
            v_rob[:, k] = ss1 / n1 + ss0 / n0
        else:
            v_rob[:, k] = np.nan
    ad = ate * pop.weights
    ate_hat = ad.sum(axis=1) / pop.K
    v_clu = ((ad - ate_hat[:, None]) ** 2).sum(axis=1) / (pop.K * (pop.K - 1))
    rob = (v_rob * pop.weights**2).sum(axis=1) / pop.K**2
    return AssignmentMoments(
        count=len(D),
        mean_ate=float(ate_hat.mean()),
        var_ate=float(ate_hat.var()),
        mean_v_rob=None if np.isnan(rob).any() else float(rob.mean()),
        mean_v_clu=float(v_clu.mean()),
    )


def theory(
    pop: Population, shocks: ShockRealization | None = None, enumerate_design: bool = False
) -> Theory:
    """Every oracle that applies to ``pop``, with a note for each one that does not."""
    notes: list[str] = []
    variances = TrueVariances()
    try:
        variances = true_conditional_variance(pop, shocks)
    except MissingShocks as e:
        notes.append(str(e))
    eta_component = expected = None
    if _is_additive(pop):
        variances = true_unconditional_variance(pop)
        variances.sigma2, variances.sigma2_plus = asymptotic_variances(pop)
        eta_component = eta_variance_component(pop)
        try:
            variances.gap_cor1 = corollary1_gap(pop)
        except UnequalStrataSizes as e:
            notes.append(str(e))
    else:
        notes.append("unconditional variance under multiplicative_eta is oracle-free (Monte Carlo only)")
    if shocks is not None or _is_additive(pop):
        expected = expected_estimators(pop, shocks)
    enumeration = None
    if enumerate_design:
        if shocks is None:
            notes.append("assignment enumeration needs a shock realization")
        else:
            try:
                enumeration = exact_assignment_moments(pop, shocks)
            except CapExceeded as e:
                notes.append(str(e))
    return Theory(
        shock_model=pop.shock_model.value,
        K=pop.K,
        n=pop.n,
        n_bar=pop.n_bar,
        estimands=estimands(pop, shocks),
        variances=variances,
        eta_component=eta_component,
        expected=expected,
        enumeration=enumeration,
        notes=notes,
    )
