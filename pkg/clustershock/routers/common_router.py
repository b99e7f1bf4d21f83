from fastapi import APIRouter

from clustershock.config.setting import SCHEMA_VERSION, settings

router = APIRouter()


@router.get("/")
async def root():
    return {"message": "clustershock is running"}


@router.get("/config")
async def config():
    return {
        "environment": settings.ENV,
        "schema_version": SCHEMA_VERSION,
        "default_alpha": settings.DEFAULT_ALPHA,
        "enumeration_cap": settings.ENUMERATION_CAP,
        "bootstrap_enum_cap": settings.BOOTSTRAP_ENUM_CAP,
        "CORS_ALLOW_ORIGINS": settings.CORS_ALLOW_ORIGINS,
    }


@router.get("/status")
async def get_service_status():
    """Backend liveness; there are no external services to probe."""
    return {"backend": {"status": "running", "message": "Backend service is running"}}
