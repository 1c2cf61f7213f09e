import logging
import sys

import attrition.constants as ac


def configure_logger() -> logging.Logger:
    logger = logging.getLogger(ac.DEFAULT_LOGGER_NAME)
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stdout)
        formatter = logging.Formatter(ac.LOG_FORMAT)
        handler.setFormatter(formatter)
        logger.addHandler(handler)
    logger.setLevel(logging.INFO)
    return logger


def get_logger() -> logging.Logger:
    return logging.getLogger(ac.DEFAULT_LOGGER_NAME)
