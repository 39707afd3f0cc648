import logging
import sys
from logging.handlers import RotatingFileHandler
from config import Config
from datetime import datetime

FILE_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
CONSOLE_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'

_console_handlers = []


def _formatter(fmt):
    """Formatter with timestamps in Config.TIMEZONE"""
    formatter = logging.Formatter(fmt, datefmt='%Y-%m-%d %H:%M:%S')
    formatter.converter = lambda *args: datetime.now(Config.TIMEZONE).timetuple()
    return formatter


def setup_logger(name):
    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)

    # Modules call this at import time; attach handlers only once
    if logger.handlers:
        return logger

    Config.LOG_DIR.mkdir(parents=True, exist_ok=True)

    # File handler - DEBUG level, every solver step lands here
    file_handler = RotatingFileHandler(
        Config.LOG_FILE,
        maxBytes=10*1024*1024,  # 10MB
        backupCount=5
    )
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(_formatter(FILE_FORMAT))

    # Console handler on stderr so report output on stdout stays parseable
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(getattr(logging, Config.LOG_LEVEL, logging.INFO))
    console_handler.setFormatter(_formatter(CONSOLE_FORMAT))
    _console_handlers.append(console_handler)

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)
    logger.propagate = False

    return logger


def set_console_level(level):
    """Change the console level of every lobexec logger; the log file keeps DEBUG"""
    numeric = getattr(logging, str(level).upper(), None)
    if not isinstance(numeric, int):
        raise ValueError(f"Unknown log level: {level}")
    for handler in _console_handlers:
        handler.setLevel(numeric)
    return numeric
