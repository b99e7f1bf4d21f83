from pydantic import BaseModel, ConfigDict, Field

from clustershock.config.setting import SCHEMA_VERSION
from clustershock.schemas.enums import BootstrapMode, WeightLaw
from clustershock.schemas.theory import Theory


class StratumEstimate(BaseModel):
    stratum: int | str
    ate_k: float
    ad_k: float
    # None when an arm has fewer than 2 units
    v_rob_k: float | None
    n_k: int
    n_1k: int
    n_0k: int


class BootstrapResult(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    t_obs: float
    t_draws: list[float]
    p_value: float
    mode: BootstrapMode
    draws: int
    n_clusters: int
    weight_law: WeightLaw = WeightLaw.RADEMACHER


class EstimateReport(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    schema_version: str = SCHEMA_VERSION
    alpha: float
    ate_hat: float
    v_rob: float
    v_clu: float
    se_rob: float
    se_clu: float
    t_rob: float
    t_clu: float
    p_rob: float
    p_clu: float
    ci_rob: tuple[float, float]
    ci_clu: tuple[float, float]
    degenerate_se_rob: bool = False
    degenerate_se_clu: bool = False
    small_sample_factor: float = 1.0
    n: int
    K: int
    n_clusters: int
    per_stratum: list[StratumEstimate]
    wild_bootstrap: BootstrapResult | None = None


class ComparisonRow(BaseModel):
    """One treatment contrast across the three inference panels."""

    treatment: str
    outcome: str
    estimate: float
    se_rob: float
    p_rob: float
    se_clu: float
    p_clu: float
    p_boot: float | None = None
    n: int
    K: int
    n_clusters: int


class ComparisonTable(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    schema_version: str = SCHEMA_VERSION
    alpha: float
    seed: int | None = None
    bootstrap: str | None = None
    rows: list[ComparisonRow] = Field(default_factory=list)
    reports: list[EstimateReport] = Field(default_factory=list)


class SimulationReport(BaseModel):
    """Side report of ``simulate``: the realized shocks, the in-memory estimates and the theory block."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    schema_version: str = SCHEMA_VERSION
    seed: int
    eta0: list[float]
    eta1: list[float]
    report: EstimateReport | None = None
    theory: Theory
