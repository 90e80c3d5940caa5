"""
Defaults, environment lookup and logging setup
"""
import logging
import os
from pathlib import Path
from typing import Optional

# Simplification
DEFAULT_K = 10
DEFAULT_R_VALUES = (1, 2, 3)
MAX_R = 3

# Classifiers
SCORE_THRESHOLD = 0.5
VARIANCE_FLOOR = 1e-9
LR_LEARNING_RATE = 0.1
LR_MAX_ITER = 5000
LR_TOLERANCE = 1e-6
MIN_LEAF = 2

# Filter selection
RHO_GRID_STEPS = 100

# Persisted document versions
REPORT_SCHEMA_VERSION = 1
MODEL_SCHEMA_VERSION = 1

DATA_DIR_ENV = "RITDS_DATA_DIR"

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"


def default_data_dir() -> Optional[Path]:
    """
    Default repository directory taken from the environment

    Returns:
        Path from RITDS_DATA_DIR, or None when the variable is unset
    """
    value = os.environ.get(DATA_DIR_ENV)
    return Path(value) if value else None


def configure_logging(verbosity: int = 0) -> None:
    """
    Install the root log handler used by the command line

    Args:
        verbosity: -1 for warnings only, 0 for info, 1 or more for debug
    """
    if verbosity < 0:
        level = logging.WARNING
    elif verbosity == 0:
        level = logging.INFO
    else:
        level = logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)
