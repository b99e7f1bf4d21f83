from typing import Any

from pydantic import BaseModel, Field

from clustershock.schemas.dataset import DatasetSpec


class EstimateRequest(BaseModel):
    """CSV text plus the column map; mirrors the ``estimate`` command's flags."""

    csv: str
    columns: DatasetSpec = Field(default_factory=DatasetSpec)
    treated_cols: list[str] = Field(default_factory=list)
    outcome_cols: list[str] = Field(default_factory=list)
    alpha: float | None = Field(default=None, gt=0, lt=1)
    bootstrap: str | None = None
    seed: int | None = Field(default=None, ge=0, lt=2**64)
    small_sample: bool = False


class OraclesRequest(BaseModel):
    population: dict[str, Any]
    seed: int | None = Field(default=None, ge=0, lt=2**64)
    enumerate_design: bool = False
