"""
Logging configuration for the DNNGP toolkit.

Handles root logger setup for the command line and the named loggers used by
the sampler, the neighbor builders and the file I/O layer.
"""

import logging
import os
import sys
from typing import Optional

DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Third-party loggers capped at WARNING
QUIET_LOGGERS = ("joblib", "matplotlib", "numexpr")

def setup_logging(
    level: str = "INFO",
    log_file: Optional[str] = None,
    format_string: Optional[str] = None
) -> None:
    """Route all records to stdout (and optionally a file) at the given level.

    Unknown level names fall back to INFO. Library modules never call this;
    only entry points do.
    """
    formatter = logging.Formatter(format_string or DEFAULT_FORMAT)
    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, str(level).upper(), logging.INFO))
    root_logger.handlers.clear()

    handlers = [logging.StreamHandler(sys.stdout)]
    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    for handler in handlers:
        handler.setFormatter(formatter)
        root_logger.addHandler(handler)

    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)

def get_logger(name: str) -> logging.Logger:
    """Get a logger with the specified name."""
    return logging.getLogger(name)

def log_neighbor_build(scheme: str, n_points: int, mean_size: float, seconds: float):
    """Log a neighbor or eligible-set construction."""
    logger = get_logger("neighbors")
    logger.debug(f"Neighbor build: scheme={scheme}, points={n_points}, mean_size={mean_size:.2f} ({seconds:.3f}s)")

def log_factor_build(n_points: int, jittered: int, seconds: float):
    """Log a sparse factor computation."""
    logger = get_logger("factors")
    level = logging.DEBUG if jittered == 0 else logging.WARNING
    logger.log(level, f"Factor build: points={n_points}, jittered={jittered} ({seconds:.3f}s)")

def log_sampler_progress(chain: int, iteration: int, n_iter: int, acceptance: float, step_scale: float):
    """Log periodic MCMC progress."""
    logger = get_logger("sampler")
    logger.info(
        f"Chain {chain}: iteration {iteration}/{n_iter}, "
        f"theta acceptance={acceptance:.3f}, step scale={step_scale:.4f}"
    )

def log_chain_summary(chain: int, n_stored: int, acceptance: float, seconds: float):
    """Log the end of a chain."""
    logger = get_logger("sampler")
    logger.info(f"Chain {chain} finished: stored={n_stored}, acceptance={acceptance:.3f} ({seconds:.1f}s)")

def log_io_operation(operation: str, path: str, rows: int = 0):
    """Log a file read or write."""
    logger = get_logger("io")
    logger.info(f"{operation}: path={path}, rows={rows}")

def log_error(error: Exception, context: str = "", **kwargs):
    """Log an error with context."""
    logger = get_logger("errors")
    error_msg = f"Error in {context}: {str(error)}"
    if kwargs:
        error_msg += f" - {kwargs}"
    logger.error(error_msg, exc_info=True)
