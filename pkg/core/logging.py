# logging.py
# Unified logging utilities for CLI runs, solver sweeps and verification suites

import os
import logging
from logging.handlers import RotatingFileHandler

LOG_FORMAT = '[%(asctime)s] [%(levelname)s] [%(name)s] %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'

_LEVELS = {
    'DEBUG': logging.DEBUG,
    'INFO': logging.INFO,
    'WARN': logging.WARNING,
    'WARNING': logging.WARNING,
    'ERROR': logging.ERROR,
    'CRITICAL': logging.CRITICAL,
}


def logs_directory():
    """Directory holding the rotating log files (overridable with BQLAB_LOG_DIR)"""
    default_dir = os.path.join(os.path.dirname(os.path.dirname(__file__)), "logs")
    return os.environ.get('BQLAB_LOG_DIR', default_dir)


def setup_logger(name, log_file, level=logging.DEBUG):
    """Setup a logger with rotating file handler"""
    logs_dir = logs_directory()
    os.makedirs(logs_dir, exist_ok=True)

    logger = logging.getLogger(f"bqlab.{name}")
    logger.setLevel(level)
    logger.propagate = False

    # Clear existing handlers to avoid duplicates on re-import
    logger.handlers.clear()

    # 10MB max, keep 5 backup files
    handler = RotatingFileHandler(
        os.path.join(logs_dir, log_file),
        maxBytes=10 * 1024 * 1024,
        backupCount=5
    )
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT))
    logger.addHandler(handler)

    return logger


def log_event(logger, level, message, **kwargs):
    """Log an event with optional key=value context"""
    if kwargs:
        context = ' '.join([f"{k}={v}" for k, v in kwargs.items()])
        message = f"{message} | {context}"

    logger.log(_LEVELS.get(level.upper(), logging.INFO), message)
