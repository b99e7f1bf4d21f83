import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from contextlib import contextmanager
from typing import List, Optional

import typer
from dotenv import load_dotenv, set_key, find_dotenv

from clustershock.config.setting import Settings, settings
from clustershock.core.cli_workflow import (
    EstimateWorkFlow,
    SimulateWorkFlow,
    VerifyWorkFlow,
    bootstrap_sample,
    mc_config,
    parse_bootstrap,
    population_theory,
)
from clustershock.core.errors import ClusterShockError, SchemaError, ValidationError
from clustershock.core.montecarlo import clt_diagnostic
from clustershock.core.population import load_population, load_population_config
from clustershock.schemas.dataset import DatasetSpec
from clustershock.schemas.enums import BootstrapMode, OutputFormat, Target
from clustershock.schemas.population import CompactPopulationConfig
from clustershock.schemas.report import SimulationReport
from clustershock.schemas.theory import OraclesReport
from clustershock.utils.common_utils import atomic_write_text, create_run_dir, create_run_id
from clustershock.utils.dataset_io import load_dataset, write_sample
from clustershock.utils.log_util import logger
from clustershock.utils.render import render_clt_table, render_comparison, render_mc_summary
from clustershock.utils.RichPrinter import RichPrinter

app = typer.Typer(
    help="Design-based inference for stratified experiments with cluster-level shocks.",
    no_args_is_help=True,
)
config_app = typer.Typer(help="Read and write settings in the env file.")
app.add_typer(config_app, name="config")

EXIT_OK, EXIT_FAILED_CHECKS, EXIT_ERROR = 0, 1, 2

ENV_FILE = find_dotenv(".env.dev") or ".env.dev"

SEED_MAX = 2**64 - 1


def set_env_value(key: str, value: str):
    if not os.path.exists(ENV_FILE):
        open(ENV_FILE, "w").close()
    load_dotenv(ENV_FILE, override=True)
    set_key(ENV_FILE, key, value)
    typer.echo(f"Set {key} to {value}")


@contextmanager
def exit_on_error():
    """Engine errors become a logged message and exit code 2."""
    try:
        yield
    except (ClusterShockError, FileNotFoundError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        RichPrinter.error(str(e))
        raise typer.Exit(code=EXIT_ERROR)


def open_unit_interval(value: float) -> float:
    if not 0.0 < value < 1.0:
        raise typer.BadParameter(f"must lie strictly between 0 and 1, got {value}")
    return value


def emit(text: str, out: Optional[str]):
    """Write to ``out`` atomically, or to stdout."""
    if out:
        atomic_write_text(out, text)
        logger.info(f"wrote {out}")
    else:
        typer.echo(text, nl=False)


def as_json(model) -> str:
    return model.model_dump_json(indent=2) + "\n"


@config_app.command("set")
def config_set(
    key: str = typer.Argument(..., help="Setting name, e.g. LOG_LEVEL or ENUMERATION_CAP"),
    value: str = typer.Argument(..., help="Value"),
):
    """
    Writes a setting into the env file.
    """
    key = key.upper()
    if key not in Settings.model_fields:
        RichPrinter.error(f"unknown setting {key}")
        raise typer.Exit(code=EXIT_ERROR)
    set_env_value(key, value)


@config_app.command("show")
def config_show():
    """
    Prints the effective settings as JSON.
    """
    load_dotenv(ENV_FILE, override=True)
    typer.echo(Settings.from_env().model_dump_json(indent=2))


@app.command()
def estimate(
    dataset: str = typer.Argument(..., help="CSV file with a header row."),
    treated_col: Optional[List[str]] = typer.Option(None, "--treated-col", help="Treatment column (repeatable)."),
    outcome_col: Optional[List[str]] = typer.Option(None, "--outcome-col", help="Outcome column (repeatable)."),
    stratum_col: str = typer.Option("stratum", "--stratum-col", help="Randomization stratum column."),
    cluster_col: Optional[str] = typer.Option(None, "--cluster-col", help="Cluster column nesting whole strata."),
    alpha: float = typer.Option(settings.DEFAULT_ALPHA, "--alpha", callback=open_unit_interval),
    bootstrap: Optional[str] = typer.Option(None, "--bootstrap", help="Wild bootstrap: draw count B or 'enum'."),
    seed: Optional[int] = typer.Option(None, "--seed", min=0, max=SEED_MAX),
    fmt: OutputFormat = typer.Option(OutputFormat.JSON, "--format"),
    out: Optional[str] = typer.Option(None, "--out", help="Write the report here instead of stdout."),
    small_sample: bool = typer.Option(False, "--small-sample", help="Scale V_clu by G/(G-1)."),
):
    """
    Estimates the ATE with robust, clustered and wild-bootstrap inference.
    """
    with exit_on_error():
        spec = DatasetSpec(path=dataset, stratum_col=stratum_col, cluster_col=cluster_col)
        table = EstimateWorkFlow().execute(
            spec,
            treated_cols=treated_col or [],
            outcome_cols=outcome_col or [],
            alpha=alpha,
            bootstrap=bootstrap,
            seed=seed,
            small_sample=small_sample,
        )
        emit(as_json(table) if fmt == OutputFormat.JSON else render_comparison(table), out)


@app.command()
def simulate(
    config: str = typer.Argument(..., help="Population config (JSON or TOML)."),
    seed: int = typer.Option(..., "--seed", min=0, max=SEED_MAX),
    out: str = typer.Option(..., "--out", help="CSV file for the observed sample."),
    report_path: Optional[str] = typer.Option(None, "--report", help="JSON side report: shocks, estimates, theory."),
    alpha: float = typer.Option(settings.DEFAULT_ALPHA, "--alpha", callback=open_unit_interval),
):
    """
    Draws one synthetic experiment and writes the observed sample as CSV.
    """
    with exit_on_error():
        pop = load_population(config)
        result = SimulateWorkFlow().execute(pop, seed, alpha=alpha)
        write_sample(result.sample, out)
        if report_path:
            side = SimulationReport(
                seed=seed,
                eta0=result.shocks.eta0.tolist(),
                eta1=result.shocks.eta1.tolist(),
                report=result.report,
                theory=result.theory,
            )
            emit(as_json(side), report_path)


@app.command()
def verify(
    config: str = typer.Argument(..., help="Population config (JSON or TOML)."),
    target: List[Target] = typer.Option(..., "--target", "-t", help="Check to run (repeatable)."),
    replications: int = typer.Option(10_000, "--replications", "-R"),
    seed: int = typer.Option(..., "--seed", min=0, max=SEED_MAX),
    jobs: int = typer.Option(settings.DEFAULT_JOBS, "--jobs", "-j", min=1),
    frozen: bool = typer.Option(False, "--frozen", help="Condition on one draw of the stratum shocks."),
    alpha: float = typer.Option(settings.DEFAULT_ALPHA, "--alpha", callback=open_unit_interval),
    tolerance_sigmas: float = typer.Option(settings.TOLERANCE_SIGMAS, "--tolerance-sigmas"),
    bootstrap_draws: int = typer.Option(999, "--bootstrap-draws"),
    bootstrap: BootstrapMode = typer.Option(BootstrapMode.SAMPLED, "--bootstrap"),
    keep_draws: bool = typer.Option(False, "--keep-draws", help="Include per-replication draws in the report."),
    fmt: OutputFormat = typer.Option(OutputFormat.JSON, "--format"),
    out: Optional[str] = typer.Option(None, "--out"),
    save_run: bool = typer.Option(False, "--save-run", help="Also archive the summary under OUTPUT_DIR/<run id>."),
):
    """
    Runs the Monte Carlo suite against the closed-form oracles. Exit code 1 when a check fails.
    """
    with exit_on_error():
        pop = load_population(config)
        cfg = mc_config(
            replications=replications,
            seed=seed,
            condition_on_eta=frozen,
            targets=target,
            alpha=alpha,
            tolerance_sigmas=tolerance_sigmas,
            bootstrap_draws=bootstrap_draws,
            bootstrap_mode=bootstrap,
            keep_draws=keep_draws,
            jobs=jobs,
        )
        summary = VerifyWorkFlow().execute(pop, cfg)
        emit(as_json(summary) if fmt == OutputFormat.JSON else render_mc_summary(summary), out)
        if out:
            RichPrinter.mc_summary(summary)
        if save_run:
            run_dir = create_run_dir(create_run_id(seed))
            atomic_write_text(os.path.join(run_dir, "summary.json"), as_json(summary))
            RichPrinter.success(f"summary archived in {run_dir}")
    if not summary.passed:
        raise typer.Exit(code=EXIT_FAILED_CHECKS)


@app.command("bootstrap")
def bootstrap_cmd(
    dataset: str = typer.Argument(..., help="CSV file with a header row."),
    treated_col: str = typer.Option("treated", "--treated-col"),
    outcome_col: str = typer.Option("y", "--outcome-col"),
    stratum_col: str = typer.Option("stratum", "--stratum-col"),
    cluster_col: Optional[str] = typer.Option(None, "--cluster-col"),
    bootstrap: str = typer.Option("enum", "--bootstrap", help="Draw count B or 'enum'."),
    seed: Optional[int] = typer.Option(None, "--seed", min=0, max=SEED_MAX),
    out: Optional[str] = typer.Option(None, "--out"),
):
    """
    Wild cluster bootstrap p-value for ATE = 0.
    """
    with exit_on_error():
        spec = DatasetSpec(
            path=dataset,
            stratum_col=stratum_col,
            treated_col=treated_col,
            outcome_col=outcome_col,
            cluster_col=cluster_col,
        )
        mode, B = parse_bootstrap(bootstrap)
        result = bootstrap_sample(load_dataset(spec), mode, B, seed, treated_col, outcome_col)
        emit(as_json(result), out)


@app.command()
def oracles(
    config: str = typer.Argument(..., help="Population config (JSON or TOML)."),
    seed: Optional[int] = typer.Option(None, "--seed", min=0, max=SEED_MAX, help="Condition on one seeded shock draw."),
    enumerate_design: bool = typer.Option(False, "--enumerate", help="Add exact moments over every assignment."),
    out: Optional[str] = typer.Option(None, "--out"),
):
    """
    Prints the closed-form estimands, true variances and estimator expectations.
    """
    with exit_on_error():
        pop = load_population(config)
        theory = population_theory(pop, seed=seed, enumerate_design=enumerate_design)
        emit(as_json(OraclesReport(seed=seed, theory=theory)), out)


@app.command()
def clt(
    config: str = typer.Argument(..., help="Compact population config; K is overridden."),
    k_list: List[int] = typer.Option(..., "--K", "-K", help="Number of strata (repeatable)."),
    replications: int = typer.Option(10_000, "--replications", "-R", min=100),
    seed: int = typer.Option(..., "--seed", min=0, max=SEED_MAX),
    jobs: int = typer.Option(settings.DEFAULT_JOBS, "--jobs", "-j", min=1),
    ks_threshold: float = typer.Option(settings.KS_THRESHOLD, "--ks-threshold"),
    fmt: OutputFormat = typer.Option(OutputFormat.JSON, "--format"),
    out: Optional[str] = typer.Option(None, "--out"),
):
    """
    KS distance to normality and K V_clu against sigma2_plus as K grows.
    """
    with exit_on_error():
        cfg = load_population_config(config)
        if not isinstance(cfg, CompactPopulationConfig):
            raise SchemaError("clt needs a compact population config", path=config)
        if any(K < 2 for K in k_list):
            raise ValidationError(f"every --K must be >= 2, got {k_list}")
        table = clt_diagnostic(cfg, sorted(k_list), replications, seed, jobs=jobs, ks_threshold=ks_threshold)
        emit(as_json(table) if fmt == OutputFormat.JSON else render_clt_table(table), out)


@app.command()
def serve(
    host: str = typer.Option("0.0.0.0", "--host"),
    port: int = typer.Option(8000, "--port"),
):
    """
    Starts the HTTP API.
    """
    import uvicorn

    uvicorn.run("clustershock.main:app", host=host, port=port)


if __name__ == "__main__":
    app()
