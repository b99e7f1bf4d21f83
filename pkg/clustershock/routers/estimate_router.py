from fastapi import APIRouter, HTTPException
from icecream import ic

from clustershock.core.cli_workflow import EstimateWorkFlow, population_theory
from clustershock.core.errors import ClusterShockError
from clustershock.core.population import population_from_dict
from clustershock.schemas.report import ComparisonTable
from clustershock.schemas.request import EstimateRequest, OraclesRequest
from clustershock.schemas.theory import OraclesReport
from clustershock.utils.log_util import logger

router = APIRouter()


@router.post("/estimate", response_model=ComparisonTable)
async def estimate(request: EstimateRequest):
    ic(request.columns, request.treated_cols, request.outcome_cols)
    try:
        return EstimateWorkFlow().execute(
            request.columns,
            treated_cols=request.treated_cols,
            outcome_cols=request.outcome_cols,
            alpha=request.alpha,
            bootstrap=request.bootstrap,
            seed=request.seed,
            small_sample=request.small_sample,
            text=request.csv,
        )
    except ClusterShockError as e:
        logger.error(f"estimate failed: {e}")
        raise HTTPException(status_code=422, detail=str(e))


@router.post("/oracles", response_model=OraclesReport)
async def oracles(request: OraclesRequest):
    try:
        pop = population_from_dict(request.population)
        theory = population_theory(pop, seed=request.seed, enumerate_design=request.enumerate_design)
    except ClusterShockError as e:
        logger.error(f"oracles failed: {e}")
        raise HTTPException(status_code=422, detail=str(e))
    return OraclesReport(seed=request.seed, theory=theory)
