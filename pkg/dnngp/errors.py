"""
Exception types raised by the DNNGP toolkit.

Library code raises these; only the command-line boundary turns them into
exit codes and machine-readable error JSON.
"""


class DNNGPError(Exception):
    """Base class for all toolkit errors."""


class ReferenceSetError(DNNGPError, ValueError):
    """Invalid reference-set construction or index."""


class CovarianceError(DNNGPError, ValueError):
    """Invalid covariance parameters or lag inputs."""


class NeighborError(DNNGPError, ValueError):
    """Invalid neighbor budget or neighbor-set request."""


class ReferenceTargetError(NeighborError):
    """A prediction target coincides with a reference point."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class FactorizationError(DNNGPError):
    """A covariance matrix could not be factorized even after jitter."""


class SamplerError(DNNGPError):
    """MCMC failure (non-finite state, singular design, ...)."""


class PredictionError(DNNGPError, ValueError):
    """Invalid prediction request."""


class DatasetError(DNNGPError, ValueError):
    """Dataset file violates its schema."""


class ConfigError(DNNGPError, ValueError):
    """Run configuration is invalid."""


class DenseCapError(DNNGPError, ValueError):
    """Request exceeds the dense-oracle size cap."""
