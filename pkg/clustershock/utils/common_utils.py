import datetime
import hashlib
import json
import os
import tempfile
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Any

from clustershock.config.setting import settings
from clustershock.utils.log_util import logger


def create_run_id(seed: int | None = None) -> str:
    """Timestamp plus a short hash; the seed is folded in so concurrent runs differ."""
    timestamp = datetime.datetime.now().strftime("%Y%m%d-%H%M%S")
    random_hash = hashlib.md5(f"{datetime.datetime.now()}-{seed}".encode()).hexdigest()[:8]
    return f"{timestamp}-{random_hash}"


def create_run_dir(run_id: str) -> str:
    run_dir = os.path.join(settings.OUTPUT_DIR, run_id)
    try:
        os.makedirs(run_dir, exist_ok=True)
        return run_dir
    except Exception as e:
        logger.error(f"could not create run directory {run_dir}: {e}")
        raise


def load_toml(path: str) -> dict:
    with open(path, "rb") as f:
        return tomllib.load(f)


def load_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def load_config(path: str) -> dict:
    """JSON or TOML by extension."""
    if path.endswith(".toml"):
        return load_toml(path)
    return load_json(path)


def atomic_write_text(path: str, text: str) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    logger.debug(f"wrote {path}")
