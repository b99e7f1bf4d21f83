from pydantic import BaseModel, ConfigDict, Field

from clustershock.config.setting import SCHEMA_VERSION, settings
from clustershock.schemas.enums import BootstrapMode, Relation, Target
from clustershock.schemas.theory import Theory


class MCConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    replications: int = Field(ge=100)
    seed: int = Field(ge=0, lt=2**64)
    condition_on_eta: bool = False
    targets: list[Target] = Field(min_length=1)
    alpha: float = Field(default=settings.DEFAULT_ALPHA, gt=0, lt=1)
    tolerance_sigmas: float = Field(default=settings.TOLERANCE_SIGMAS, gt=0)
    bootstrap_draws: int = Field(default=999, ge=1)
    bootstrap_mode: BootstrapMode = BootstrapMode.SAMPLED
    ks_threshold: float = settings.KS_THRESHOLD
    keep_draws: bool = False
    jobs: int = Field(default=settings.DEFAULT_JOBS, ge=1)
    chunk_size: int = Field(default=settings.MC_CHUNK_SIZE, ge=1)


class CheckResult(BaseModel):
    name: str
    target: Target
    empirical: float
    theoretical: float | None = None
    mc_se: float | None = None
    tolerance: float | None = None
    relation: Relation
    passed: bool | None = None
    oracle_free: bool = False
    note: str | None = None


class MCSummary(BaseModel):
    schema_version: str = SCHEMA_VERSION
    seed: int
    replications: int
    condition_on_eta: bool
    targets: list[Target]
    checks: list[CheckResult]
    empirical: dict[str, float | None]
    theory: Theory
    draws: dict[str, list[float]] | None = None
    elapsed_seconds: float = Field(default=0.0, exclude=True)

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)


class CLTRow(BaseModel):
    K: int
    ks_distance: float
    k_var_ate: float
    sigma2_K: float
    mean_k_v_clu: float
    sigma2_plus_K: float
    expected_k_v_clu: float
    ks_pass: bool | None = None


class CLTTable(BaseModel):
    schema_version: str = SCHEMA_VERSION
    seed: int
    replications: int
    ks_threshold: float
    rows: list[CLTRow]
    decreasing: bool
