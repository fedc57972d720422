"""
Posterior predictive inference.

Reference points with missing responses reuse the stored w draws. New
points are kriged from their neighbor set draw by draw; under the adaptive
scheme N(l) follows each draw's theta, the simple and full schemes build it
once per target.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from dnngp.errors import PredictionError, ReferenceTargetError
from dnngp.mcmc import ModelSpec, PosteriorSamples
from dnngp.neighbors import NeighborScheme, prediction_eligible, prediction_neighbors
from dnngp.process import new_point_factors
from dnngp.spacetime import SpaceTimePoint
from utils.parallel_utils import map_index_chunks

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (50.0,)

@dataclass(eq=False)
class PredictiveDraws:
    """Posterior predictive draws of y, one row per target point."""
    points: List[SpaceTimePoint]
    draws: np.ndarray
    thresholds: Tuple[float, ...] = DEFAULT_THRESHOLDS
    ids: Optional[List[str]] = None

    def __post_init__(self):
        self.draws = np.atleast_2d(np.asarray(self.draws, dtype=float))
        if self.draws.shape[0] != len(self.points):
            raise PredictionError(f"{self.draws.shape[0]} draw rows for {len(self.points)} targets")
        if self.ids is None:
            self.ids = [str(k) for k in range(len(self.points))]

    def __len__(self) -> int:
        return len(self.points)

    def median(self) -> np.ndarray:
        return np.median(self.draws, axis=1)

    def mean(self) -> np.ndarray:
        return self.draws.mean(axis=1)

    def interval(self, level: float = 0.95) -> np.ndarray:
        """(n, 2) equal-tailed predictive intervals."""
        tail = 50.0 * (1.0 - level)
        return np.percentile(self.draws, [tail, 100.0 - tail], axis=1).T

    def exceedance(self, threshold: float) -> np.ndarray:
        return (self.draws > threshold).mean(axis=1)

    def to_frame(self) -> pd.DataFrame:
        dim = self.points[0].dim if self.points else 0
        frame = pd.DataFrame({"id": self.ids})
        for k in range(dim):
            frame[f"s{k + 1}"] = [p.s[k] for p in self.points]
        frame["t"] = [p.t for p in self.points]
        frame["median"] = self.median()
        frame["mean"] = self.mean()
        bounds = self.interval(0.95)
        frame["q2.5"] = bounds[:, 0]
        frame["q97.5"] = bounds[:, 1]
        for threshold in self.thresholds:
            frame[f"p_exceed_{threshold:g}"] = self.exceedance(threshold)
        return frame

def _draw_subset(n_draws: int, max_draws: Optional[int]) -> np.ndarray:
    if max_draws is None or max_draws >= n_draws:
        return np.arange(n_draws)
    return np.unique(np.linspace(0, n_draws - 1, max_draws).round().astype(np.int64))

def _check_covariates(x_targets: np.ndarray, p: int) -> np.ndarray:
    x_targets = np.atleast_2d(np.asarray(x_targets, dtype=float))
    if x_targets.shape[1] != p:
        raise PredictionError(f"targets carry {x_targets.shape[1]} covariates, the model has {p}")
    bad = np.flatnonzero(~np.all(np.isfinite(x_targets), axis=1))
    if bad.size:
        raise PredictionError(f"missing covariates at targets {bad[:10].tolist()}; covariates are not imputed")
    return x_targets

def _identity(values: np.ndarray) -> np.ndarray:
    return values

def reference_draws(
    indices: Sequence[int],
    x_targets: np.ndarray,
    samples: PosteriorSamples,
    rng: np.random.Generator,
    draws: Optional[np.ndarray] = None
) -> np.ndarray:
    """(n_targets, n_draws) y* ~ N(x'beta + w, tau2) at reference indices."""
    draws = np.arange(len(samples)) if draws is None else draws
    w = samples.w_at(indices)[draws].T
    mu = x_targets @ samples.beta[draws].T + w
    return mu + np.sqrt(samples.tau2[draws])[None, :] * rng.standard_normal(mu.shape)

def predict_reference_missing(
    indices: Sequence[int],
    x_targets: np.ndarray,
    samples: PosteriorSamples,
    spec: ModelSpec,
    seed: int = 0,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    inverse_transform: Callable[[np.ndarray], np.ndarray] = _identity,
    max_draws: Optional[int] = None
) -> PredictiveDraws:
    """Predictive draws at reference points, typically those with missing y."""
    if len(samples) == 0:
        raise PredictionError("no posterior draws to predict from")
    indices = np.asarray(indices, dtype=np.int64)
    x_targets = _check_covariates(x_targets, spec.p)
    rng = np.random.default_rng(seed)
    draws = reference_draws(indices, x_targets, samples, rng, _draw_subset(len(samples), max_draws))
    points = [spec.ref.point(int(i)) for i in indices]
    return PredictiveDraws(points=points, draws=inverse_transform(draws), thresholds=tuple(thresholds))

def _new_point_draws(
    point: SpaceTimePoint,
    x_target: np.ndarray,
    samples: PosteriorSamples,
    spec: ModelSpec,
    scheme: NeighborScheme,
    m: int,
    draws: np.ndarray,
    rng: np.random.Generator
) -> np.ndarray:
    """y draws at one off-reference point (raises ReferenceTargetError on the grid)."""
    index = spec.ref.locate(point)
    if index is not None:
        raise ReferenceTargetError(f"target {point} coincides with reference index {index}", index)
    n = draws.shape[0]
    z = rng.standard_normal((2, n))
    mu = samples.beta[draws] @ x_target
    if not spec.spatial:
        return mu + np.sqrt(samples.tau2[draws]) * z[1]

    fixed_neighbors = None
    candidates = None
    if scheme is NeighborScheme.ADAPTIVE:
        if m >= spec.r:
            candidates = np.arange(spec.r, dtype=np.int64)
        else:
            candidates = prediction_eligible(point, spec.ref, m)
    else:
        fixed_neighbors = prediction_neighbors(point, spec.ref, scheme, m)

    pool = candidates if candidates is not None else fixed_neighbors
    stored = samples.w_at(pool)
    column = {int(j): k for k, j in enumerate(pool)}

    w_new = np.empty(n)
    for k, d in enumerate(draws):
        params = samples.params_at(int(d))
        pf = new_point_factors(point, spec.ref, params, scheme, m,
                               eligible=candidates, neighbors=fixed_neighbors)
        cols = [column[int(j)] for j in pf.neighbors]
        w_new[k] = pf.weights @ stored[d, cols] + np.sqrt(pf.cond_var) * z[0, k]
    return mu + w_new + np.sqrt(samples.tau2[draws]) * z[1]

def predict_new_point(
    points: Sequence[SpaceTimePoint],
    x_targets: np.ndarray,
    samples: PosteriorSamples,
    spec: ModelSpec,
    scheme: Optional[NeighborScheme] = None,
    m: Optional[int] = None,
    seed: int = 0,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    inverse_transform: Callable[[np.ndarray], np.ndarray] = _identity,
    max_draws: Optional[int] = None,
    threads: int = 1
) -> PredictiveDraws:
    """Predictive draws at points outside the reference set.

    A target that coincides with a reference point raises ReferenceTargetError
    carrying its index; predict_points redirects such targets.
    """
    if len(samples) == 0:
        raise PredictionError("no posterior draws to predict from")
    scheme = spec.scheme if scheme is None else NeighborScheme(scheme)
    m = spec.m if m is None else m
    points = list(points)
    x_targets = _check_covariates(x_targets, spec.p)
    draws = _draw_subset(len(samples), max_draws)
    seeds = np.random.SeedSequence(seed).spawn(len(points))

    def run(start: int, stop: int) -> List[np.ndarray]:
        return [
            _new_point_draws(points[k], x_targets[k], samples, spec, scheme, m, draws, np.random.default_rng(seeds[k]))
            for k in range(start, stop)
        ]

    rows = map_index_chunks(run, len(points), threads)
    values = np.array(rows) if rows else np.empty((0, draws.shape[0]))
    return PredictiveDraws(points=points, draws=inverse_transform(values), thresholds=tuple(thresholds))

def predict_points(
    points: Sequence[SpaceTimePoint],
    x_targets: np.ndarray,
    samples: PosteriorSamples,
    spec: ModelSpec,
    seed: int = 0,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    inverse_transform: Callable[[np.ndarray], np.ndarray] = _identity,
    max_draws: Optional[int] = None,
    ids: Optional[List[str]] = None,
    threads: int = 1
) -> PredictiveDraws:
    """Predict at any mix of reference and new points, in input order."""
    points = list(points)
    x_targets = _check_covariates(x_targets, spec.p)
    on_grid = [spec.ref.locate(p) for p in points]
    ref_rows = [k for k, idx in enumerate(on_grid) if idx is not None]
    new_rows = [k for k, idx in enumerate(on_grid) if idx is None]

    out = np.empty((len(points), _draw_subset(len(samples), max_draws).shape[0]))
    if ref_rows:
        logger.info(f"{len(ref_rows)} target(s) coincide with reference points; using stored w draws")
        part = predict_reference_missing([on_grid[k] for k in ref_rows], x_targets[ref_rows], samples, spec,
                                         seed=seed, thresholds=thresholds, max_draws=max_draws)
        out[ref_rows] = part.draws
    if new_rows:
        part = predict_new_point([points[k] for k in new_rows], x_targets[new_rows], samples, spec,
                                 seed=seed + 1, thresholds=thresholds, max_draws=max_draws, threads=threads)
        out[new_rows] = part.draws
    return PredictiveDraws(points=points, draws=inverse_transform(out), thresholds=tuple(thresholds), ids=ids)
