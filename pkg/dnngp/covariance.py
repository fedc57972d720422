"""
Non-separable Gneiting space-time covariance functions.

Two forms are supported. The general Matern form is

    C(h, u) = sigma2 / (2^(nu-1) Gamma(nu) psi^(delta+kappa)) * x^nu K_nu(x),
    psi = a |u|^(2 alpha) + 1,   x = c h / psi^(kappa/2)

and the exponential form is its nu = 1/2, alpha = 1, delta = 0 special case

    C(h, u) = sigma2 psi^(-kappa) exp(-c h psi^(-kappa/2)).

Both satisfy C(0, 0) = sigma2 exactly.
"""

import logging
from enum import Enum
from typing import Any, Dict, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy.special import gammaln, kve
from scipy.spatial.distance import cdist

from dnngp.errors import CovarianceError
from dnngp.spacetime import SpaceTimePoint, points_to_arrays

logger = logging.getLogger(__name__)

class CovarianceForm(str, Enum):
    """Supported kernel families."""
    MATERN = "matern"
    EXPONENTIAL = "exponential"

# Parameter names in a stable order (used by the sampler and the CSV writer)
PARAM_NAMES = ("sigma2", "a", "c", "kappa", "alpha", "nu", "delta")

class CovarianceParams(BaseModel):
    """Parameters theta of the Gneiting kernel."""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    sigma2: float = Field(gt=0)
    a: float = Field(gt=0)
    c: float = Field(gt=0)
    kappa: float = Field(ge=0, le=1)
    alpha: float = Field(default=1.0, gt=0, le=1)
    nu: float = Field(default=0.5, gt=0)
    delta: float = Field(default=0.0, ge=0)
    form: CovarianceForm = CovarianceForm.EXPONENTIAL

    @model_validator(mode="before")
    @classmethod
    def _pin_exponential(cls, data: Any) -> Any:
        if isinstance(data, dict):
            form = data.get("form", CovarianceForm.EXPONENTIAL)
            if CovarianceForm(form) is CovarianceForm.EXPONENTIAL:
                data = {**data, "nu": 0.5, "alpha": 1.0, "delta": 0.0}
        return data

    @classmethod
    def create(cls, **values) -> "CovarianceParams":
        """Build params, turning validation failures into CovarianceError."""
        try:
            return cls(**values)
        except ValidationError as e:
            raise CovarianceError(f"invalid covariance parameters: {e.errors(include_url=False)}") from e

    def replace(self, **updates) -> "CovarianceParams":
        """Validated copy with some fields changed."""
        return CovarianceParams.create(**{**self.model_dump(), **updates})

    def values(self) -> Dict[str, float]:
        return {name: float(getattr(self, name)) for name in PARAM_NAMES}

def _check_lags(h, u) -> Tuple[np.ndarray, np.ndarray]:
    h = np.asarray(h, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.isnan(h).any() or np.isnan(u).any():
        raise CovarianceError("NaN lag passed to covariance")
    if (h < 0).any() or (u < 0).any():
        raise CovarianceError("lags must be nonnegative")
    return h, u

def cov(h, u, params: CovarianceParams) -> np.ndarray:
    """C(h, u | theta), vectorized over broadcastable lag arrays."""
    h, u = _check_lags(h, u)
    if params.form is CovarianceForm.EXPONENTIAL:
        psi = params.a * u * u + 1.0
        return params.sigma2 * psi ** (-params.kappa) * np.exp(-params.c * h * psi ** (-params.kappa / 2.0))

    psi = params.a * u ** (2.0 * params.alpha) + 1.0
    x = params.c * h * psi ** (-params.kappa / 2.0)
    return params.sigma2 * psi ** (-(params.delta + params.kappa)) * matern_correlation(x, params.nu)

def matern_correlation(x, nu: float) -> np.ndarray:
    """x^nu K_nu(x) / (2^(nu-1) Gamma(nu)), equal to 1 at x = 0."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    pos = x > 0
    if np.any(pos):
        xp = x[pos]
        # kve(nu, x) = K_nu(x) e^x keeps large x from underflowing early
        log_val = nu * np.log(xp) + np.log(kve(nu, xp)) - xp - (nu - 1.0) * np.log(2.0) - gammaln(nu)
        out[pos] = np.exp(log_val)
    return out

def correlation(h, u, params: CovarianceParams) -> np.ndarray:
    return cov(h, u, params) / params.sigma2

def cov_between(
    coords_a: np.ndarray,
    times_a: np.ndarray,
    coords_b: np.ndarray,
    times_b: np.ndarray,
    params: CovarianceParams
) -> np.ndarray:
    """Cross-covariance matrix between two coordinate arrays."""
    coords_a = np.atleast_2d(np.asarray(coords_a, dtype=float))
    coords_b = np.atleast_2d(np.asarray(coords_b, dtype=float))
    h = cdist(coords_a, coords_b)
    u = np.abs(np.asarray(times_a, dtype=float)[:, None] - np.asarray(times_b, dtype=float)[None, :])
    return cov(h, u, params)

def cross_cov_matrix(
    points_a: Sequence[SpaceTimePoint],
    points_b: Sequence[SpaceTimePoint],
    params: CovarianceParams
) -> np.ndarray:
    """|A| x |B| matrix with entries C(||s_i - s_j||, |t_i - t_j|)."""
    coords_a, times_a = points_to_arrays(points_a)
    coords_b, times_b = points_to_arrays(points_b)
    return cov_between(coords_a, times_a, coords_b, times_b, params)

def check_natural_monotonicity(
    params: CovarianceParams,
    h_grid: Sequence[float],
    u_grid: Sequence[float],
    rtol: float = 1e-12
) -> bool:
    """True iff C is non-increasing in h for every fixed u and in u for every fixed h.

    The exponential form is not monotone in u everywhere: for c*h > 2 the
    covariance first rises with u. Scan the lag range that matters.
    """
    h_grid = np.asarray(h_grid, dtype=float)
    u_grid = np.asarray(u_grid, dtype=float)
    if np.any(np.diff(h_grid) < 0) or np.any(np.diff(u_grid) < 0):
        raise CovarianceError("lag grids must be sorted ascending")

    values = cov(h_grid[:, None], u_grid[None, :], params)
    slack = rtol * params.sigma2
    along_h = np.all(np.diff(values, axis=0) <= slack)
    along_u = np.all(np.diff(values, axis=1) <= slack)
    if not (along_h and along_u):
        logger.debug(f"Covariance not naturally monotone on grid: along_h={along_h}, along_u={along_u}")
    return bool(along_h and along_u)
