import os
import sys
import time

from icecream import ic
from loguru import logger as _logger

from clustershock.config.setting import settings

LOG_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | "
    "<level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - "
    "<level>{message}</level>"
)


class LoggerInitializer:
    def __init__(self, log_dir: str = settings.LOG_DIR, level: str = settings.LOG_LEVEL):
        self.level = level
        self.log_path = os.path.join(os.getcwd(), log_dir)
        self.log_path_error = os.path.join(self.log_path, f"{time.strftime('%Y-%m-%d')}_error.log")

    def init_log(self):
        """
        stderr sink at the configured level, plus a rotating error file when LOG_TO_FILE is set.
        """
        _logger.remove()
        # stdout is reserved for reports
        _logger.add(sys.stderr, format=LOG_FORMAT, level=self.level, enqueue=False)
        if settings.LOG_TO_FILE:
            os.makedirs(self.log_path, exist_ok=True)
            _logger.add(
                self.log_path_error,
                format=LOG_FORMAT,
                level="ERROR",
                rotation="50MB",
                encoding="utf-8",
                enqueue=False,
                compression="zip",
            )

        ic.configureOutput(prefix="ic| ", outputFunction=_logger.debug)
        if not settings.DEBUG:
            ic.disable()

        return _logger


log_initializer = LoggerInitializer()
logger = log_initializer.init_log()
