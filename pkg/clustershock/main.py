from contextlib import asynccontextmanager

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from clustershock.config.setting import settings
from clustershock.routers import common_router, estimate_router
from clustershock.utils.cli import center_cli_str, get_ascii_banner
from clustershock.utils.log_util import logger


@asynccontextmanager
async def lifespan(app: FastAPI):
    print(get_ascii_banner())
    print(center_cli_str(f"serving on {settings.SERVER_HOST}"))
    logger.info("Starting clustershock")
    yield
    logger.info("Stopping clustershock")


app = FastAPI(
    title="clustershock",
    description="Design-based inference for stratified experiments with cluster-level shocks",
    version="0.1.0",
    lifespan=lifespan,
)

app.include_router(common_router.router)
app.include_router(estimate_router.router)

app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.CORS_ALLOW_ORIGINS,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)
