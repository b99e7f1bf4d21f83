"""Orchestration shared by the typer commands and the HTTP routers."""

from dataclasses import dataclass, replace

import pydantic

from clustershock.config.setting import settings
from clustershock.core import oracles
from clustershock.core.bootstrap import wild_cluster_bootstrap
from clustershock.core.design import ObservedSample, assign, observe
from clustershock.core.errors import DegenerateArm, SchemaError, ValidationError
from clustershock.core.estimators import report
from clustershock.core.montecarlo import run_mc
from clustershock.core.population import Population, ShockRealization, draw_shocks, realize_outcomes
from clustershock.core.rng import RandomStream
from clustershock.schemas.dataset import DatasetSpec
from clustershock.schemas.enums import BootstrapMode
from clustershock.schemas.montecarlo import MCConfig, MCSummary
from clustershock.schemas.report import BootstrapResult, ComparisonRow, ComparisonTable, EstimateReport
from clustershock.schemas.theory import Theory
from clustershock.utils.dataset_io import load_contrasts
from clustershock.utils.log_util import logger
from clustershock.utils.RichPrinter import RichPrinter


def parse_bootstrap(value: str | None) -> tuple[BootstrapMode | None, int | None]:
    """``None`` (off), ``"enum"`` or a positive draw count."""
    if value is None:
        return None, None
    if value.strip().lower() == BootstrapMode.FULL_ENUMERATION.value:
        return BootstrapMode.FULL_ENUMERATION, None
    try:
        B = int(value)
    except ValueError:
        raise ValidationError(f"--bootstrap must be 'enum' or a draw count, got '{value}'") from None
    if B < 1:
        raise ValidationError(f"--bootstrap draw count must be >= 1, got {B}")
    return BootstrapMode.SAMPLED, B


def contrast_stream(seed: int | None, treated: str, outcome: str) -> RandomStream | None:
    return None if seed is None else RandomStream(seed).substream(treated, outcome)


def bootstrap_sample(
    sample: ObservedSample,
    mode: BootstrapMode,
    B: int | None,
    seed: int | None,
    treated: str = "treated",
    outcome: str = "y",
) -> BootstrapResult:
    if mode == BootstrapMode.SAMPLED and seed is None:
        raise ValidationError("a sampled bootstrap needs --seed")
    return wild_cluster_bootstrap(sample, B=B, stream=contrast_stream(seed, treated, outcome), mode=mode)


class EstimateWorkFlow:
    """One EstimateReport per (treatment, outcome) contrast, collected into a ComparisonTable."""

    def execute(
        self,
        spec: DatasetSpec,
        treated_cols: list[str],
        outcome_cols: list[str],
        alpha: float | None = None,
        bootstrap: str | None = None,
        seed: int | None = None,
        small_sample: bool = False,
        text: str | None = None,
    ) -> ComparisonTable:
        alpha = settings.DEFAULT_ALPHA if alpha is None else alpha
        mode, B = parse_bootstrap(bootstrap)
        contrasts = load_contrasts(spec, treated_cols or [spec.treated_col], outcome_cols or [spec.outcome_col], text)

        rows: list[ComparisonRow] = []
        reports: list[EstimateReport] = []
        for treated, outcome, sample in contrasts:
            rep = report(sample, alpha=alpha, small_sample=small_sample)
            p_boot = None
            if mode is not None:
                wb = bootstrap_sample(sample, mode, B, seed, treated, outcome)
                rep = rep.model_copy(update={"wild_bootstrap": wb})
                p_boot = wb.p_value
            logger.info(
                f"{treated} -> {outcome}: ate={rep.ate_hat:.6g} se_rob={rep.se_rob:.6g} se_clu={rep.se_clu:.6g}"
            )
            rows.append(
                ComparisonRow(
                    treatment=treated,
                    outcome=outcome,
                    estimate=rep.ate_hat,
                    se_rob=rep.se_rob,
                    p_rob=rep.p_rob,
                    se_clu=rep.se_clu,
                    p_clu=rep.p_clu,
                    p_boot=p_boot,
                    n=rep.n,
                    K=rep.K,
                    n_clusters=rep.n_clusters,
                )
            )
            reports.append(rep)

        label = None
        if mode == BootstrapMode.FULL_ENUMERATION:
            label = "full enumeration, Rademacher weights"
        elif mode == BootstrapMode.SAMPLED:
            label = f"{B} Rademacher draws"
        return ComparisonTable(alpha=alpha, seed=seed, bootstrap=label, rows=rows, reports=reports)


@dataclass(frozen=True)
class SimulationResult:
    sample: ObservedSample
    shocks: ShockRealization
    report: EstimateReport | None
    theory: Theory


class SimulateWorkFlow:
    """Draw shocks, realize outcomes, assign and observe: one synthetic experiment."""

    def execute(self, pop: Population, seed: int, alpha: float | None = None) -> SimulationResult:
        stream = RandomStream(seed)
        shocks = draw_shocks(pop, stream)
        po = realize_outcomes(pop, shocks)
        sample = observe(po, assign(pop, stream))
        sample = replace(sample, labels=pop.stratum_ids)
        logger.info(f"simulated n={sample.n} K={sample.K} seed={seed}")
        try:
            rep = report(sample, alpha=alpha)
        except DegenerateArm as e:
            logger.warning(f"no report for the simulated sample: {e}")
            RichPrinter.warning(f"no estimate report: {e}")
            rep = None
        return SimulationResult(sample=sample, shocks=shocks, report=rep, theory=oracles.theory(pop, shocks))


def mc_config(**fields) -> MCConfig:
    """Validate Monte Carlo options, reporting the offending field like population configs do."""
    try:
        return MCConfig.model_validate({k: v for k, v in fields.items() if v is not None})
    except pydantic.ValidationError as e:
        err = e.errors()[0]
        raise SchemaError(err["msg"], path=".".join(str(p) for p in err["loc"]) or None) from e


class VerifyWorkFlow:
    def execute(self, pop: Population, cfg: MCConfig) -> MCSummary:
        logger.info(
            f"verify targets={[t.value for t in cfg.targets]} R={cfg.replications} "
            f"seed={cfg.seed} jobs={cfg.jobs} frozen={cfg.condition_on_eta}"
        )
        RichPrinter.workflow_start("verify")
        summary = run_mc(pop, cfg)
        failed = [c.name for c in summary.checks if c.passed is False]
        if failed:
            logger.warning(f"failed checks: {failed}")
        else:
            logger.success(f"all {len(summary.checks)} checks passed in {summary.elapsed_seconds:.1f}s")
        RichPrinter.workflow_end("verify")
        return summary


def population_theory(pop: Population, seed: int | None = None, enumerate_design: bool = False) -> Theory:
    """Theory block, conditional on one seeded shock draw when ``seed`` is given."""
    shocks = draw_shocks(pop, RandomStream(seed)) if seed is not None else None
    return oracles.theory(pop, shocks, enumerate_design=enumerate_design)
