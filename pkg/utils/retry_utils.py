"""
Retry utilities for numerically fragile factorizations.

Handles the diagonal-jitter retry policy applied to every symmetric
positive-definite factorization in the toolkit.
"""

import logging
from typing import Callable, Optional, Tuple, TypeVar

import numpy as np

from dnngp.errors import FactorizationError

logger = logging.getLogger(__name__)

T = TypeVar('T')

class RetryConfig:
    """Configuration for jitter retry behavior."""

    def __init__(
        self,
        max_attempts: int = 2,
        base_jitter: float = 1e-10,
        exponential_base: float = 10.0
    ):
        self.max_attempts = max_attempts
        self.base_jitter = base_jitter
        self.exponential_base = exponential_base

def calculate_jitter(attempt: int, config: RetryConfig) -> float:
    """Relative jitter added before the given attempt (attempt 1 is unjittered)."""
    if attempt <= 1:
        return 0.0
    return config.base_jitter * (config.exponential_base ** (attempt - 2))

def retry_sync(
    func: Callable[[np.ndarray], T],
    matrix: np.ndarray,
    scale: float,
    config: Optional[RetryConfig] = None,
    context: str = ""
) -> Tuple[T, int]:
    """Call func on matrix, adding jitter * scale to the diagonal after each LinAlgError.

    Returns the result and the number of jittered attempts that were needed.
    """
    if config is None:
        config = CHOLESKY_RETRY_CONFIG

    last_exception = None

    for attempt in range(1, config.max_attempts + 1):
        jitter = calculate_jitter(attempt, config) * scale
        try:
            if jitter > 0.0:
                jittered = matrix + jitter * np.eye(matrix.shape[0])
                return func(jittered), attempt - 1
            return func(matrix), 0
        except np.linalg.LinAlgError as e:
            last_exception = e
            logger.warning(f"Attempt {attempt} failed{' in ' + context if context else ''}: {e}")
            if attempt < config.max_attempts:
                logger.info(f"Retrying with diagonal jitter {calculate_jitter(attempt + 1, config) * scale:.3e}")

    logger.error(f"All {config.max_attempts} attempts failed. Last error: {last_exception}")
    raise FactorizationError(
        f"matrix of size {matrix.shape[0]} is not positive definite after jitter"
        f"{' (' + context + ')' if context else ''}: {last_exception}"
    )

# Jitter once by 1e-10 * sigma^2, then give up
CHOLESKY_RETRY_CONFIG = RetryConfig(
    max_attempts=2,
    base_jitter=1e-10,
    exponential_base=10.0
)
