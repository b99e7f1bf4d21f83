from pydantic import BaseModel, Field

from clustershock.config.setting import SCHEMA_VERSION


class EstimandSet(BaseModel):
    ate: float
    ate_given_eta: float | None = None
    ate_given_all: float | None = None


class TrueVariances(BaseModel):
    v_cond_k: list[float] = Field(default_factory=list)
    v_cond: float | None = None
    v_uncond: float | None = None
    gap_cor1: float | None = None
    sigma2: float | None = None
    sigma2_plus: float | None = None


class ExpectedEstimators(BaseModel):
    """Exact expectations of the variance estimators (conditional on eta when shocks were given)."""

    conditional: bool
    e_v_rob: float
    e_v_clu: float | None = None
    e_K_v_clu: float | None = None


class AssignmentMoments(BaseModel):
    count: int
    mean_ate: float
    var_ate: float
    mean_v_rob: float | None
    mean_v_clu: float


class Theory(BaseModel):
    shock_model: str
    K: int
    n: int
    n_bar: float
    estimands: EstimandSet
    variances: TrueVariances
    eta_component: float | None = None
    expected: ExpectedEstimators | None = None
    enumeration: AssignmentMoments | None = None
    notes: list[str] = Field(default_factory=list)


class OraclesReport(BaseModel):
    schema_version: str = SCHEMA_VERSION
    # seed of the frozen shock draw, None for unconditional oracles
    seed: int | None = None
    theory: Theory
