import logging
import os
import sys
from datetime import datetime
from logging.handlers import RotatingFileHandler

from from_root import from_root

from src.constants import LOG_BACKUP_COUNT, LOG_DIR, LOG_FORMAT, LOG_LEVEL_ENV_KEY, LOG_MAX_BYTES

log_dir_path = os.path.join(from_root(), LOG_DIR)
os.makedirs(log_dir_path, exist_ok=True)
log_file_path = os.path.join(log_dir_path, f"{datetime.now().strftime('%m_%d_%Y_%H_%M_%S')}.log")

# stdout carries command output only
console_handler = logging.StreamHandler(sys.stderr)


def configure_logger():
    """
    Root logger: everything to a rotating file under logs/, INFO and up to stderr.
    COSMIC_BELL_LOG_LEVEL overrides the console level.
    """
    root = logging.getLogger()
    if console_handler in root.handlers:
        return
    root.setLevel(logging.DEBUG)
    formatter = logging.Formatter(LOG_FORMAT)

    file_handler = RotatingFileHandler(log_file_path, maxBytes=LOG_MAX_BYTES, backupCount=LOG_BACKUP_COUNT)
    file_handler.setFormatter(formatter)
    file_handler.setLevel(logging.DEBUG)

    console_handler.setFormatter(formatter)
    console_handler.setLevel(os.environ.get(LOG_LEVEL_ENV_KEY, "INFO").upper())

    root.addHandler(file_handler)
    root.addHandler(console_handler)
    # numba's compiler logs at DEBUG on the root logger
    logging.getLogger("numba").setLevel(logging.WARNING)


def set_console_level(level) -> None:
    console_handler.setLevel(level)


configure_logger()
