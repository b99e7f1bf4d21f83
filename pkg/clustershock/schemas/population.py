from pydantic import BaseModel, ConfigDict, Field

from clustershock.schemas.enums import CrossArmMode, ShockFamily, ShockModel


class ShockSpec(BaseModel):
    """Law of the stratum-level shock pair (eta(0), eta(1))."""

    model_config = ConfigDict(extra="forbid")

    family: ShockFamily = ShockFamily.DEGENERATE
    # sd (normal), half_width (uniform), magnitude (two_point); "scale" works for all
    params: dict[str, float] = Field(default_factory=dict)
    cross_arm: CrossArmMode = CrossArmMode.INDEPENDENT
    rho: float | None = None


class EpsSpec(BaseModel):
    """Standardized (unit variance) law of the unit-level shocks, scaled by eps_sd."""

    model_config = ConfigDict(extra="forbid")

    family: ShockFamily = ShockFamily.NORMAL
    cross_arm: CrossArmMode = CrossArmMode.INDEPENDENT
    rho: float | None = None


class StratumConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    y0: list[float]
    y1: list[float]
    eps_sd0: list[float] | float = 0.0
    eps_sd1: list[float] | float = 0.0
    n_treat: int | None = None
    eta: ShockSpec = Field(default_factory=ShockSpec)


class PopulationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    shock_model: ShockModel = ShockModel.ADDITIVE
    treatment_arms: int = 2
    eps: EpsSpec = Field(default_factory=EpsSpec)
    strata: list[StratumConfig]


class CompactPopulationConfig(BaseModel):
    """
    Generator form expanded on a deterministic grid. With u_i spaced evenly
    on [-1, 1] inside a stratum and c_k spaced evenly on [-1, 1] across
    strata:

        y0_ik = stratum_shift * c_k + y0_spread * u_i
        y1_ik = y0_ik + tau + tau_between * c_k + tau_within * u_i
    """

    model_config = ConfigDict(extra="forbid")

    K: int
    n_per_stratum: int | list[int]
    n_treat: int | list[int] | None = None
    tau: float = 1.0
    tau_between: float = 0.0
    tau_within: float = 0.0
    y0_spread: float = 1.0
    stratum_shift: float = 0.0
    eps_sd0: float = 1.0
    eps_sd1: float = 1.0
    eta: ShockSpec = Field(default_factory=ShockSpec)
    eps: EpsSpec = Field(default_factory=EpsSpec)
    shock_model: ShockModel = ShockModel.ADDITIVE
    treatment_arms: int = 2
