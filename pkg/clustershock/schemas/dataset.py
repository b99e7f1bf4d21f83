from pydantic import BaseModel, ConfigDict


class DatasetSpec(BaseModel):
    """Where a CSV lives and which columns carry stratum, treatment, outcome and (optionally) cluster."""

    model_config = ConfigDict(extra="forbid")

    path: str | None = None
    stratum_col: str = "stratum"
    treated_col: str = "treated"
    outcome_col: str = "y"
    # must be constant within every stratum
    cluster_col: str | None = None
