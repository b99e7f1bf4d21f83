import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from clustershock.config.setting import settings
from clustershock.core import oracles
from clustershock.core.bootstrap import (
    enumerated_t,
    observed_t,
    p_value_from_draws,
    rademacher,
    replicate_t,
)
from clustershock.core.design import assign
from clustershock.core.errors import PrerequisiteViolation, ValidationError
from clustershock.core.estimators import ate_from_table, clustered_from_contributions, table_from_arrays
from clustershock.core.population import (
    Population,
    ShockRealization,
    build_population,
    conditional_means,
    draw_eps,
    draw_eta,
)
from clustershock.core.rng import RandomStream
from clustershock.schemas.enums import BootstrapMode, CrossArmMode, Relation, ShockFamily, ShockModel, Target
from clustershock.schemas.montecarlo import CheckResult, CLTRow, CLTTable, MCConfig, MCSummary
from clustershock.schemas.population import CompactPopulationConfig
from clustershock.schemas.theory import Theory
from clustershock.utils.log_util import logger

STATS = (
    "ate",
    "q",
    "v_rob",
    "v_clu",
    "k_v_clu",
    "k_v_rob",
    "gap",
    "cover_clu",
    "cover_rob",
    "cover_rob_eta",
    "v_cond_eta",
    "reject",
)
_IX = {name: i for i, name in enumerate(STATS)}

UNCONDITIONAL_TARGETS = {
    Target.UNCOND_VARIANCE,
    Target.CLU_CONSERVATIVE,
    Target.COR1_GAP,
    Target.CLT,
    Target.SANDWICH,
    Target.ROB_UNDERCOVERAGE,
}
# KS critical value at the 1% level is about 1.63 / sqrt(R)
KS_CRITICAL = 1.63
HOMOGENEITY_LEVEL = 0.01
# floating-point slack for checks whose Monte Carlo error is exactly zero
_NUMERIC_FLOOR = 1e-10


@dataclass
class RunningMoments:
    """Count, mean and sum of squared deviations per statistic, mergeable pairwise."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def from_rows(cls, rows: np.ndarray) -> "RunningMoments":
        mean = rows.mean(axis=0)
        return cls(len(rows), mean, ((rows - mean) ** 2).sum(axis=0))

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        n = self.count + other.count
        delta = other.mean - self.mean
        return RunningMoments(
            n,
            self.mean + delta * (other.count / n),
            self.m2 + other.m2 + delta**2 * (self.count * other.count / n),
        )

    def mean_of(self, name: str) -> float:
        return float(self.mean[_IX[name]])

    def var_of(self, name: str) -> float:
        return float(self.m2[_IX[name]] / (self.count - 1))

    def se_of(self, name: str) -> float:
        return math.sqrt(self.var_of(name) / self.count)


def merge_tree(parts: list[RunningMoments]) -> RunningMoments:
    """Fixed pairwise reduction so the result does not depend on worker count."""
    while len(parts) > 1:
        merged = [parts[i].merge(parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            merged.append(parts[-1])
        parts = merged
    return parts[0]


@dataclass(frozen=True)
class _RunSpec:
    base: RandomStream
    replications: int
    chunk_size: int
    frozen_eta: tuple[np.ndarray, np.ndarray] | None
    center: float
    ate: float
    v_cond: float | None
    z: float
    alpha: float
    clt_scale: float | None = None
    per_rep_v_cond: bool = False
    boot_draws: int = 0
    boot_mode: BootstrapMode = BootstrapMode.SAMPLED
    keep_draws: bool = False


@dataclass
class _ChunkResult:
    moments: RunningMoments
    clt: np.ndarray | None
    draws: np.ndarray | None


def _replicate(pop: Population, spec: _RunSpec, r: int, zeros: np.ndarray) -> tuple[np.ndarray, float]:
    stream = spec.base.substream("rep", r)
    eta0, eta1 = spec.frozen_eta if spec.frozen_eta is not None else draw_eta(pop, stream)
    eps0, eps1 = draw_eps(pop, stream)
    d = assign(pop, stream).d
    m0, m1 = conditional_means(pop, eta0, eta1)
    y = np.where(d == 1, m1 + eps1, m0 + eps0)

    t = table_from_arrays(pop.layout.index, d, y, pop.K)
    ate_hat = ate_from_table(t)
    v_rob = float(np.sum(t.weights**2 * t.v_rob) / pop.K**2)
    v_clu = clustered_from_contributions(t.ad, ate_hat)
    K = pop.K

    if pop.shock_model == ShockModel.ADDITIVE:
        ate_eta = spec.ate + float(np.sum(pop.sizes * (eta1 - eta0)) / pop.n)
    else:
        ate_eta = float(np.mean(m1 - m0))
    if spec.per_rep_v_cond:
        v_cond_eta = oracles.conditional_variance(pop, ShockRealization(eta0, eta1, zeros, zeros))
    else:
        v_cond_eta = spec.v_cond if spec.v_cond is not None else np.nan

    half_rob = spec.z * math.sqrt(v_rob) if not math.isnan(v_rob) else np.nan
    half_clu = spec.z * math.sqrt(v_clu)

    reject = np.nan
    if spec.boot_draws:
        t_obs = observed_t(t.ad, ate_hat)
        if spec.boot_mode == BootstrapMode.FULL_ENUMERATION:
            t_draws = enumerated_t(t.ad)
        else:
            rng = stream.substream("bootstrap").generator()
            t_draws = replicate_t(t.ad, rademacher(rng, spec.boot_draws, K))
        reject = float(p_value_from_draws(t_obs, t_draws, spec.boot_mode) <= spec.alpha)

    def covers(target: float, half: float) -> float:
        return np.nan if math.isnan(half) else float(abs(ate_hat - target) <= half)

    row = np.array(
        [
            ate_hat,
            (ate_hat - spec.center) ** 2,
            v_rob,
            v_clu,
            K * v_clu,
            K * v_rob,
            K * v_clu - K * v_rob,
            covers(spec.ate, half_clu),
            covers(spec.ate, half_rob),
            covers(ate_eta, half_rob),
            v_cond_eta,
            reject,
        ]
    )
    z = (ate_hat - spec.ate) / spec.clt_scale if spec.clt_scale else np.nan
    return row, z


def _run_chunk(task: tuple[Population, _RunSpec, int, int]) -> _ChunkResult:
    pop, spec, start, stop = task
    zeros = np.zeros(pop.n)
    rows = np.empty((stop - start, len(STATS)))
    clt = np.empty(stop - start)
    for i, r in enumerate(range(start, stop)):
        rows[i], clt[i] = _replicate(pop, spec, r, zeros)
    return _ChunkResult(
        moments=RunningMoments.from_rows(rows),
        clt=clt if spec.clt_scale else None,
        draws=rows[:, [_IX["ate"], _IX["v_rob"], _IX["v_clu"]]] if spec.keep_draws else None,
    )


def _simulate(pop: Population, spec: _RunSpec, jobs: int) -> _ChunkResult:
    bounds = [
        (start, min(start + spec.chunk_size, spec.replications))
        for start in range(0, spec.replications, spec.chunk_size)
    ]
    tasks = [(pop, spec, start, stop) for start, stop in bounds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            parts = list(executor.map(_run_chunk, tasks))
    else:
        parts = []
        for task in tasks:
            parts.append(_run_chunk(task))
            logger.debug(f"chunk {task[2]}-{task[3]} done")
    return _ChunkResult(
        moments=merge_tree([p.moments for p in parts]),
        clt=np.concatenate([p.clt for p in parts]) if spec.clt_scale else None,
        draws=np.concatenate([p.draws for p in parts]) if spec.keep_draws else None,
    )


def _robust_defined(pop: Population) -> bool:
    return bool(np.all(pop.n_treat >= 2) and np.all(pop.n_control >= 2))


def _identical_shocks(pop: Population) -> bool:
    return all(
        s.eta_dist.cross_arm == CrossArmMode.IDENTICAL or s.eta_dist.family == ShockFamily.DEGENERATE
        for s in pop.strata
    )


def validate_targets(pop: Population, cfg: MCConfig) -> None:
    """Raise PrerequisiteViolation for the first target ``pop`` and ``cfg`` cannot support."""
    additive = pop.shock_model == ShockModel.ADDITIVE
    frozen = cfg.condition_on_eta
    for target in cfg.targets:
        name = target.value
        if frozen and target in UNCONDITIONAL_TARGETS:
            raise PrerequisiteViolation(name, "needs unconditional runs, but condition_on_eta is set")
        if target == Target.COND_VARIANCE and not frozen:
            raise PrerequisiteViolation(name, "needs condition_on_eta")
        no_closed_form = {Target.COR1_GAP, Target.CLT, Target.ROB_UNDERCOVERAGE, Target.HOMOGENEOUS_SHOCKS}
        if not additive and target in no_closed_form:
            raise PrerequisiteViolation(name, "no closed form under multiplicative_eta shocks")
        if not additive and target == Target.ROB_CONSERVATIVE and not frozen:
            raise PrerequisiteViolation(name, "multiplicative_eta shocks need condition_on_eta")
        if target == Target.COR1_GAP and not pop.equal_sizes:
            raise PrerequisiteViolation(name, "needs equal stratum sizes")
        uses_robust = target in {Target.ROB_CONSERVATIVE, Target.COR1_GAP, Target.ROB_UNDERCOVERAGE} or (
            target == Target.COVERAGE and frozen
        )
        if uses_robust and not _robust_defined(pop):
            raise PrerequisiteViolation(name, "needs at least 2 units per arm in every stratum")
        if target == Target.HOMOGENEOUS_SHOCKS and not _identical_shocks(pop):
            raise PrerequisiteViolation(name, "needs identical cross-arm shocks in every stratum")
        if target == Target.ROB_UNDERCOVERAGE and oracles.eta_variance_component(pop) <= 0:
            raise PrerequisiteViolation(name, "needs V(eta(1) - eta(0)) > 0 in some stratum")
        if target == Target.CLT and oracles.true_unconditional_variance(pop).v_uncond <= 0:
            raise PrerequisiteViolation(name, "needs a positive unconditional variance")
        if target == Target.BOOTSTRAP_SIZE:
            if abs(float(np.mean(pop.y1 - pop.y0))) > 1e-12:
                raise PrerequisiteViolation(name, "needs a null population (ATE = 0)")
            if cfg.bootstrap_mode == BootstrapMode.FULL_ENUMERATION and 2**pop.K > settings.BOOTSTRAP_ENUM_CAP:
                raise PrerequisiteViolation(name, f"full enumeration over K = {pop.K} strata exceeds the cap")


def _judge(relation: Relation, empirical: float, theoretical: float, tolerance: float) -> bool:
    match relation:
        case Relation.EQ | Relation.WITHIN:
            return abs(empirical - theoretical) <= tolerance
        case Relation.GE:
            return empirical >= theoretical - tolerance
        case Relation.LE:
            return empirical <= theoretical + tolerance
        case _:
            return empirical < theoretical - tolerance


def _check(
    name: str,
    target: Target,
    empirical: float,
    theoretical: float,
    mc_se: float,
    relation: Relation,
    sigmas: float,
    note: str | None = None,
    tolerance: float | None = None,
) -> CheckResult:
    if tolerance is None:
        tolerance = max(sigmas * mc_se, _NUMERIC_FLOOR * (1.0 + abs(theoretical)))
    return CheckResult(
        name=name,
        target=target,
        empirical=empirical,
        theoretical=theoretical,
        mc_se=mc_se,
        tolerance=tolerance,
        relation=relation,
        passed=_judge(relation, empirical, theoretical, tolerance),
        note=note,
    )


def _f_test(var_a: float, var_b: float, R: int) -> tuple[float, float]:
    if var_a == 0 and var_b == 0:
        return 1.0, 1.0
    ratio = var_a / var_b if var_b > 0 else np.inf
    cdf = stats.f.cdf(ratio, R - 1, R - 1)
    return float(ratio), float(min(1.0, 2.0 * min(cdf, 1.0 - cdf)))


def _nan_to_none(x: float) -> float | None:
    return None if math.isnan(x) else x


def run_mc(pop: Population, cfg: MCConfig) -> MCSummary:
    validate_targets(pop, cfg)
    started = time.perf_counter()
    R = cfg.replications
    targets = set(cfg.targets)
    additive = pop.shock_model == ShockModel.ADDITIVE
    root = RandomStream(cfg.seed)

    frozen_shocks = None
    if cfg.condition_on_eta:
        eta0, eta1 = draw_eta(pop, root.substream("frozen"))
        frozen_shocks = ShockRealization(eta0, eta1, np.zeros(pop.n), np.zeros(pop.n))
    theory = oracles.theory(pop, frozen_shocks)
    est = theory.estimands
    center = est.ate_given_eta if frozen_shocks is not None else est.ate
    if Target.BOOTSTRAP_SIZE in targets and abs(center) > 1e-12:
        raise PrerequisiteViolation(Target.BOOTSTRAP_SIZE.value, "frozen shocks make ATE(eta) nonzero")

    v_uncond = theory.variances.v_uncond
    spec = _RunSpec(
        base=root,
        replications=R,
        chunk_size=cfg.chunk_size,
        frozen_eta=None if frozen_shocks is None else (frozen_shocks.eta0, frozen_shocks.eta1),
        center=center,
        ate=est.ate,
        v_cond=theory.variances.v_cond,
        z=float(stats.norm.ppf(1.0 - cfg.alpha / 2.0)),
        alpha=cfg.alpha,
        clt_scale=math.sqrt(v_uncond) if Target.CLT in targets else None,
        per_rep_v_cond=not additive and Target.SANDWICH in targets,
        boot_draws=cfg.bootstrap_draws if Target.BOOTSTRAP_SIZE in targets else 0,
        boot_mode=cfg.bootstrap_mode,
        keep_draws=cfg.keep_draws,
    )
    logger.info(
        f"Monte Carlo: R={R} seed={cfg.seed} K={pop.K} frozen={cfg.condition_on_eta} "
        f"targets={[t.value for t in cfg.targets]} jobs={cfg.jobs}"
    )
    result = _simulate(pop, spec, cfg.jobs)
    mom = result.moments

    companion_var = None
    if Target.HOMOGENEOUS_SHOCKS in targets:
        companion = _simulate(
            pop,
            _RunSpec(
                base=root.substream("companion"),
                replications=R,
                chunk_size=cfg.chunk_size,
                frozen_eta=None if spec.frozen_eta is not None else draw_eta(pop, root.substream("frozen")),
                center=est.ate,
                ate=est.ate,
                v_cond=spec.v_cond,
                z=spec.z,
                alpha=cfg.alpha,
            ),
            cfg.jobs,
        )
        companion_var = companion.moments.var_of("ate")

    ks = None
    if result.clt is not None:
        ks = float(stats.kstest(result.clt, "norm").statistic)

    checks = _build_checks(pop, cfg, theory, mom, ks, companion_var, frozen_shocks)
    empirical = {
        "mean_ate": mom.mean_of("ate"),
        "var_ate": mom.var_of("ate"),
        "mean_v_rob": _nan_to_none(mom.mean_of("v_rob")),
        "mean_v_clu": mom.mean_of("v_clu"),
        "mean_k_v_clu": mom.mean_of("k_v_clu"),
        "mean_k_v_rob": _nan_to_none(mom.mean_of("k_v_rob")),
        "coverage_clu": mom.mean_of("cover_clu"),
        "coverage_rob": _nan_to_none(mom.mean_of("cover_rob")),
        "coverage_rob_eta": _nan_to_none(mom.mean_of("cover_rob_eta")),
        "rejection_rate": _nan_to_none(mom.mean_of("reject")),
        "ks_distance": ks,
    }
    draws = None
    if result.draws is not None:
        draws = {name: result.draws[:, j].tolist() for j, name in enumerate(("ate", "v_rob", "v_clu"))}
    elapsed = time.perf_counter() - started
    summary = MCSummary(
        seed=cfg.seed,
        replications=R,
        condition_on_eta=cfg.condition_on_eta,
        targets=cfg.targets,
        checks=checks,
        empirical=empirical,
        theory=theory,
        draws=draws,
        elapsed_seconds=elapsed,
    )
    failed = [c.name for c in checks if c.passed is False]
    logger.info(f"Monte Carlo finished in {elapsed:.2f}s: {len(checks)} checks, failed={failed}")
    return summary


def _build_checks(
    pop: Population,
    cfg: MCConfig,
    theory: Theory,
    mom: RunningMoments,
    ks: float | None,
    companion_var: float | None,
    frozen_shocks: ShockRealization | None,
) -> list[CheckResult]:
    R = cfg.replications
    sig = cfg.tolerance_sigmas
    alpha = cfg.alpha
    additive = pop.shock_model == ShockModel.ADDITIVE
    frozen = frozen_shocks is not None
    est = theory.estimands
    var = theory.variances
    var_ate = mom.var_of("ate")
    se_var = mom.se_of("q")
    cover_se = math.sqrt(alpha * (1.0 - alpha) / R)

    if frozen:
        m0, m1 = conditional_means(pop, frozen_shocks.eta0, frozen_shocks.eta1)
    else:
        m0, m1 = pop.y0, pop.y1
    terms = oracles.neyman_terms(pop, m0, m1)
    no_within_heterogeneity = bool(np.allclose(terms.s2_tau, 0.0, atol=1e-12))
    between_zero = pop.equal_sizes and float(np.ptp(terms.ate_k)) <= 1e-12

    checks: list[CheckResult] = []
    for target in cfg.targets:
        match target:
            case Target.UNBIASEDNESS:
                theo = est.ate_given_eta if frozen else est.ate
                checks.append(
                    _check("unbiasedness", target, mom.mean_of("ate"), theo, mom.se_of("ate"), Relation.EQ, sig)
                )
            case Target.COND_VARIANCE:
                checks.append(
                    _check("cond_variance", target, var_ate, var.v_cond, se_var, Relation.EQ, sig)
                )
            case Target.UNCOND_VARIANCE:
                if additive:
                    checks.append(
                        _check("uncond_variance", target, var_ate, var.v_uncond, se_var, Relation.EQ, sig)
                    )
                else:
                    checks.append(
                        CheckResult(
                            name="uncond_variance",
                            target=target,
                            empirical=var_ate,
                            mc_se=se_var,
                            relation=Relation.EQ,
                            oracle_free=True,
                            note="no closed form under multiplicative_eta shocks",
                        )
                    )
            case Target.ROB_CONSERVATIVE:
                relation = Relation.EQ if no_within_heterogeneity else Relation.GE
                if frozen:
                    se = math.hypot(mom.se_of("v_rob"), se_var)
                    checks.append(
                        _check("rob_conservative", target, mom.mean_of("v_rob"), var_ate, se, relation, sig)
                    )
                else:
                    checks.append(
                        _check(
                            "rob_conservative", target, mom.mean_of("v_rob"), var.v_cond,
                            mom.se_of("v_rob"), relation, sig, note="against the conditional variance oracle",
                        )
                    )
            case Target.CLU_CONSERVATIVE:
                relation = Relation.EQ if between_zero else Relation.GE
                se = math.hypot(mom.se_of("v_clu"), se_var)
                checks.append(
                    _check("clu_conservative", target, mom.mean_of("v_clu"), var_ate, se, relation, sig)
                )
            case Target.COR1_GAP:
                checks.append(
                    _check("cor1gap", target, mom.mean_of("gap"), var.gap_cor1, mom.se_of("gap"), Relation.EQ, sig)
                )
            case Target.COVERAGE:
                name, stat = ("coverage_rob_eta", "cover_rob_eta") if frozen else ("coverage_clu", "cover_clu")
                checks.append(_check(name, target, mom.mean_of(stat), 1.0 - alpha, cover_se, Relation.GE, sig))
            case Target.ROB_UNDERCOVERAGE:
                checks.append(
                    _check(
                        "rob_undercoverage", target, mom.mean_of("cover_rob"), 1.0 - alpha,
                        cover_se, Relation.LT, sig,
                    )
                )
            case Target.CLT:
                tol = max(cfg.ks_threshold, KS_CRITICAL / math.sqrt(R))
                ks_check = _check("clt_ks", target, ks, 0.0, 0.0, Relation.LE, sig, tolerance=tol)
                if pop.K < settings.CLT_MIN_K:
                    ks_check.passed = None
                    ks_check.note = f"diagnostic only below K = {settings.CLT_MIN_K}"
                checks.append(ks_check)
                checks.append(
                    _check(
                        "clt_k_v_clu", target, mom.mean_of("k_v_clu"), theory.expected.e_K_v_clu,
                        mom.se_of("k_v_clu"), Relation.EQ, sig,
                        note=f"sigma2_plus_K = {var.sigma2_plus:.6g}, sigma2_K = {var.sigma2:.6g}",
                    )
                )
            case Target.BOOTSTRAP_SIZE:
                tol = max(sig * cover_se, settings.SIZE_SLACK * alpha)
                checks.append(
                    _check(
                        "bootstrap_size", target, mom.mean_of("reject"), alpha, cover_se,
                        Relation.WITHIN, sig, tolerance=tol,
                    )
                )
            case Target.SANDWICH:
                if additive:
                    lower_theo, lower_se = var.v_cond, se_var
                else:
                    lower_theo = mom.mean_of("v_cond_eta")
                    lower_se = math.hypot(se_var, mom.se_of("v_cond_eta"))
                checks.append(_check("sandwich_lower", target, var_ate, lower_theo, lower_se, Relation.GE, sig))
                se = math.hypot(mom.se_of("v_clu"), se_var)
                checks.append(_check("sandwich_upper", target, mom.mean_of("v_clu"), var_ate, se, Relation.GE, sig))
            case Target.HOMOGENEOUS_SHOCKS:
                ratio, p = _f_test(var_ate, companion_var, R)
                lo = stats.f.ppf(HOMOGENEITY_LEVEL / 2, R - 1, R - 1)
                hi = stats.f.ppf(1 - HOMOGENEITY_LEVEL / 2, R - 1, R - 1)
                checks.append(
                    CheckResult(
                        name="homogeneous_shocks",
                        target=target,
                        empirical=ratio,
                        theoretical=1.0,
                        mc_se=ratio * math.sqrt(4.0 / (R - 1)),
                        tolerance=float(max(hi - 1.0, 1.0 - lo)),
                        relation=Relation.WITHIN,
                        passed=p >= HOMOGENEITY_LEVEL,
                        note=f"variance ratio frozen vs fresh shocks, two-sided F-test p = {p:.4g}",
                    )
                )
    return checks


def clt_diagnostic(
    config: CompactPopulationConfig,
    K_list: list[int],
    replications: int,
    seed: int,
    jobs: int = 1,
    ks_threshold: float | None = None,
) -> CLTTable:
    """Normality of sqrt(K)(ATE_hat - ATE) and K V_clu against sigma2_K / sigma2_plus_K as K grows."""
    per_stratum = [name for name in ("n_per_stratum", "n_treat") if isinstance(getattr(config, name), list)]
    if per_stratum:
        raise ValidationError(
            f"clt varies K, so {', '.join(per_stratum)} must be a single number, not a per-stratum list"
        )
    threshold = settings.KS_THRESHOLD if ks_threshold is None else ks_threshold
    rows = []
    for K in K_list:
        pop = build_population(config.model_copy(update={"K": K}))
        cfg = MCConfig(
            replications=replications, seed=seed, targets=[Target.CLT], ks_threshold=threshold, jobs=jobs
        )
        summary = run_mc(pop, cfg)
        ks_check = next(c for c in summary.checks if c.name == "clt_ks")
        rows.append(
            CLTRow(
                K=K,
                ks_distance=summary.empirical["ks_distance"],
                k_var_ate=K * summary.empirical["var_ate"],
                sigma2_K=summary.theory.variances.sigma2,
                mean_k_v_clu=summary.empirical["mean_k_v_clu"],
                sigma2_plus_K=summary.theory.variances.sigma2_plus,
                expected_k_v_clu=summary.theory.expected.e_K_v_clu,
                ks_pass=ks_check.passed,
            )
        )
        logger.info(f"clt K={K}: ks={rows[-1].ks_distance:.4f}")
    decreasing = len(rows) < 2 or rows[-1].ks_distance <= rows[0].ks_distance
    return CLTTable(
        seed=seed, replications=replications, ks_threshold=threshold, rows=rows, decreasing=decreasing
    )
