"""
Synthetic space-time data and the dense-GP oracle.

Data follow y = X beta + w + eps on a regular site grid in the unit box
(unit square by default) observed at equally spaced times in [0, 1], plus
uniformly scattered off-grid holdout points. The latent w is drawn jointly
over grid and holdout points from the parent GP by dense Cholesky, so
requests are capped at DENSE_CAP points.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import solve_triangular

from dnngp.covariance import CovarianceParams, cov_between
from dnngp.errors import DenseCapError
from dnngp.mcmc import PriorDistribution, ThetaPrior
from dnngp.spacetime import ReferenceSet, SpaceTimePoint, enumerate_reference, points_to_arrays
from utils.retry_utils import retry_sync

logger = logging.getLogger(__name__)

DENSE_CAP = 5000

class SyntheticSpec(BaseModel):
    """Grid size, truth and seed of one synthetic data set."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_side: int = Field(ge=1)
    dim: int = Field(default=2, ge=1, le=3)
    n_times: int = Field(ge=1)
    domain: Tuple[float, float] = (0.0, 1.0)
    theta: CovarianceParams
    beta: Tuple[float, ...] = Field(default=(1.0, 5.0), min_length=1)
    tau2: float = Field(default=0.1, ge=0)
    n_holdout: int = Field(default=0, ge=0)
    seed: int = 0
    dense_cap: int = Field(default=DENSE_CAP, ge=1)

    @property
    def n_sites(self) -> int:
        return self.n_side ** self.dim

    @property
    def n_total(self) -> int:
        return self.n_sites * self.n_times + self.n_holdout

    def truth(self) -> Dict[str, float]:
        out = {f"beta_{k}": float(b) for k, b in enumerate(self.beta)}
        out["tau2"] = float(self.tau2)
        out.update({name: float(getattr(self.theta, name)) for name in ("sigma2", "a", "c", "kappa")})
        return out

@dataclass(eq=False)
class SyntheticData:
    """Reference-grid data plus off-grid holdout points."""
    spec: SyntheticSpec
    ref: ReferenceSet
    x: np.ndarray
    w: np.ndarray
    y: np.ndarray
    holdout_coords: np.ndarray
    holdout_times: np.ndarray
    holdout_x: np.ndarray
    holdout_w: np.ndarray
    holdout_y: np.ndarray

    @property
    def holdout_points(self) -> List[SpaceTimePoint]:
        return [SpaceTimePoint(tuple(s), t) for s, t in zip(self.holdout_coords, self.holdout_times)]

def grid_locations(n_side: int, dim: int, domain: Tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    """Regular n_side^dim grid, first axis varying fastest."""
    axis = np.linspace(domain[0], domain[1], n_side)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.column_stack([m.ravel(order="F") for m in mesh])

def _draw_holdout(spec: SyntheticSpec, ref: ReferenceSet, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    lo, hi = spec.domain
    coords = rng.uniform(lo, hi, size=(spec.n_holdout, spec.dim))
    times = rng.uniform(0.0, 1.0, size=spec.n_holdout)
    # redraw the (probability zero) points that land exactly on the grid
    for k in range(spec.n_holdout):
        while ref.locate(SpaceTimePoint(tuple(coords[k]), times[k])) is not None:
            coords[k] = rng.uniform(lo, hi, size=spec.dim)
            times[k] = rng.uniform(0.0, 1.0)
    return coords, times

def joint_draw(coords: np.ndarray, times: np.ndarray, params: CovarianceParams, rng: np.random.Generator) -> np.ndarray:
    """One draw of w ~ N(0, C) over the given points via dense Cholesky."""
    covariance = cov_between(coords, times, coords, times, params)
    chol, _ = retry_sync(np.linalg.cholesky, covariance, params.sigma2, context="synthetic draw")
    return chol @ rng.standard_normal(coords.shape[0])

def simulate_dataset(spec: SyntheticSpec) -> SyntheticData:
    """Draw one data set; identical specs give identical data."""
    if spec.n_total > spec.dense_cap:
        raise DenseCapError(
            f"{spec.n_total} points exceed the dense cap of {spec.dense_cap}; "
            f"use process.sample_prior for approximate draws at this size"
        )
    rng = np.random.default_rng(spec.seed)
    ref = enumerate_reference(grid_locations(spec.n_side, spec.dim, spec.domain),
                              np.linspace(0.0, 1.0, spec.n_times))
    h_coords, h_times = _draw_holdout(spec, ref, rng)

    coords = np.vstack([ref.coords, h_coords])
    times = np.concatenate([ref.point_times, h_times])
    w_all = joint_draw(coords, times, spec.theta, rng)

    p = len(spec.beta)
    n = coords.shape[0]
    x_all = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    noise = np.sqrt(spec.tau2) * rng.standard_normal(n)
    y_all = x_all @ np.asarray(spec.beta, dtype=float) + w_all + noise

    r = ref.size
    logger.info(f"Simulated {r} grid points and {spec.n_holdout} holdout points (seed={spec.seed})")
    return SyntheticData(
        spec=spec,
        ref=ref,
        x=x_all[:r],
        w=w_all[:r],
        y=y_all[:r],
        holdout_coords=h_coords,
        holdout_times=h_times,
        holdout_x=x_all[r:],
        holdout_w=w_all[r:],
        holdout_y=y_all[r:]
    )

def dense_gp_logdensity(
    w: np.ndarray,
    points: Union[ReferenceSet, Sequence[SpaceTimePoint]],
    params: CovarianceParams,
    dense_cap: int = DENSE_CAP
) -> float:
    """Exact log N(w | 0, C(points, points))."""
    if isinstance(points, ReferenceSet):
        coords, times = points.coords, points.point_times
    else:
        coords, times = points_to_arrays(points)
    n = coords.shape[0]
    if n > dense_cap:
        raise DenseCapError(f"{n} points exceed the dense cap of {dense_cap}")
    w = np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"w has shape {w.shape}, expected ({n},)")

    covariance = cov_between(coords, times, coords, times, params)
    chol, _ = retry_sync(np.linalg.cholesky, covariance, params.sigma2, context="dense log density")
    z = solve_triangular(chol, w, lower=True)
    return float(-0.5 * (n * np.log(2.0 * np.pi) + z @ z) - np.sum(np.log(np.diag(chol))))

@dataclass(frozen=True)
class DatasetPreset:
    """True parameters and prior boxes of one synthetic study design."""
    theta: CovarianceParams
    tau2: float
    beta: Tuple[float, ...]
    priors: Dict[str, ThetaPrior] = field(default_factory=dict)

    def synthetic_spec(self, n_side: int, n_times: int, n_holdout: int = 0, seed: int = 0, dim: int = 2) -> SyntheticSpec:
        return SyntheticSpec(n_side=n_side, dim=dim, n_times=n_times, theta=self.theta, beta=self.beta,
                             tau2=self.tau2, n_holdout=n_holdout, seed=seed)

def _preset(a: float, c: float, kappa: float, a_box: Tuple[float, float], c_box: Tuple[float, float]) -> DatasetPreset:
    return DatasetPreset(
        theta=CovarianceParams(sigma2=1.0, a=a, c=c, kappa=kappa),
        tau2=0.1,
        beta=(1.0, 5.0),
        priors={
            "sigma2": ThetaPrior(distribution=PriorDistribution.INVERSE_GAMMA, shape=2.0, rate=1.0),
            "a": ThetaPrior(lower=a_box[0], upper=a_box[1]),
            "c": ThetaPrior(lower=c_box[0], upper=c_box[1]),
            "kappa": ThetaPrior(lower=0.0, upper=1.0)
        }
    )

# Short-range space/long-range time, long/long, long-range space/short-range time
DATASET_PRESETS: Dict[str, DatasetPreset] = {
    "dataset1": _preset(a=50.0, c=25.0, kappa=0.75, a_box=(1.0, 100.0), c_box=(0.0, 50.0)),
    "dataset2": _preset(a=500.0, c=2.5, kappa=0.5, a_box=(300.0, 700.0), c_box=(0.0, 10.0)),
    "dataset3": _preset(a=2000.0, c=2.5, kappa=0.95, a_box=(1000.0, 3000.0), c_box=(0.0, 10.0))
}
