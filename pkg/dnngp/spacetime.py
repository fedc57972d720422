"""
Space-time coordinates and the reference-set enumeration.

The reference set is the product of N distinct sites and M increasing times,
enumerated time-major: all sites at t_0, then all sites at t_1, and so on,
with sites in their stored order. Index i precedes index j exactly when point
i belongs to the history set of point j. Indices are 0-based.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from dnngp.errors import ReferenceSetError

logger = logging.getLogger(__name__)

# Lags equal within this relative tolerance are treated as tied
LAG_RELATIVE_TOLERANCE = 1e-12

@dataclass(frozen=True)
class SpaceTimePoint:
    """A single (s, t) coordinate."""
    s: Tuple[float, ...]
    t: float

    def __post_init__(self):
        s = tuple(float(v) for v in np.atleast_1d(self.s))
        if not 1 <= len(s) <= 3:
            raise ReferenceSetError(f"spatial dimension must be 1, 2 or 3, got {len(s)}")
        if not (np.all(np.isfinite(s)) and np.isfinite(self.t)):
            raise ReferenceSetError(f"non-finite coordinate in point s={s}, t={self.t}")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "t", float(self.t))

    @property
    def dim(self) -> int:
        return len(self.s)

def canonical_lags(values: np.ndarray) -> np.ndarray:
    """Snap lags so that values equal within LAG_RELATIVE_TOLERANCE become identical."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return values.copy()
    scale = float(np.max(values))
    if scale <= 0.0:
        return values.copy()
    decimals = int(-np.floor(np.log10(scale * LAG_RELATIVE_TOLERANCE)))
    return np.round(values, decimals)

def points_to_arrays(points: Sequence[SpaceTimePoint]) -> Tuple[np.ndarray, np.ndarray]:
    """Stack points into (n, d) coordinates and (n,) times."""
    if len(points) == 0:
        raise ReferenceSetError("empty point list")
    dims = {p.dim for p in points}
    if len(dims) != 1:
        raise ReferenceSetError(f"points mix spatial dimensions {sorted(dims)}")
    coords = np.array([p.s for p in points], dtype=float)
    times = np.array([p.t for p in points], dtype=float)
    return coords, times

class ReferenceSet:
    """Time-major enumeration of a product space-time grid.

    Immutable after construction. Site distances and time lags are computed
    once and snapped with canonical_lags so that exact ties stay exact
    everywhere they are compared.
    """

    def __init__(self, locations: np.ndarray, times: np.ndarray):
        self._locations = np.array(locations, dtype=float)
        self._times = np.array(times, dtype=float)
        self._locations.setflags(write=False)
        self._times.setflags(write=False)

        self.site_distances = canonical_lags(cdist(self._locations, self._locations))
        self.time_lags = canonical_lags(np.abs(self._times[:, None] - self._times[None, :]))
        self.site_distances.setflags(write=False)
        self.time_lags.setflags(write=False)

    @property
    def locations(self) -> np.ndarray:
        return self._locations

    @property
    def times(self) -> np.ndarray:
        return self._times

    @property
    def n_sites(self) -> int:
        return self._locations.shape[0]

    @property
    def n_times(self) -> int:
        return self._times.shape[0]

    @property
    def dim(self) -> int:
        return self._locations.shape[1]

    @property
    def size(self) -> int:
        return self.n_sites * self.n_times

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"ReferenceSet(n_sites={self.n_sites}, n_times={self.n_times}, dim={self.dim})"

    def _check_index(self, i) -> np.ndarray:
        idx = np.asarray(i)
        if np.any(idx < 0) or np.any(idx >= self.size):
            raise ReferenceSetError(f"index out of range [0, {self.size}): {i}")
        return idx

    def index(self, site: int, time: int) -> int:
        """Reference index of (s_site, t_time): time * N + site."""
        if not (0 <= site < self.n_sites and 0 <= time < self.n_times):
            raise ReferenceSetError(f"(site={site}, time={time}) outside {self.n_sites}x{self.n_times} grid")
        return time * self.n_sites + site

    def site_of(self, i):
        return self._check_index(i) % self.n_sites

    def time_of(self, i):
        return self._check_index(i) // self.n_sites

    def point(self, i: int) -> SpaceTimePoint:
        i = int(self._check_index(i))
        return SpaceTimePoint(tuple(self._locations[i % self.n_sites]), self._times[i // self.n_sites])

    def points(self) -> Iterable[SpaceTimePoint]:
        for i in range(self.size):
            yield self.point(i)

    @property
    def coords(self) -> np.ndarray:
        """(r, d) spatial coordinates in enumeration order."""
        return np.tile(self._locations, (self.n_times, 1))

    @property
    def point_times(self) -> np.ndarray:
        """(r,) times in enumeration order."""
        return np.repeat(self._times, self.n_sites)

    def in_history(self, i: int, j: int) -> bool:
        """True iff point i is in the history set of point j."""
        self._check_index([i, j])
        ti, tj = i // self.n_sites, j // self.n_sites
        if ti != tj:
            return ti < tj
        return (i % self.n_sites) < (j % self.n_sites)

    def history(self, i: int) -> np.ndarray:
        """Indices of H(i), which is every earlier index."""
        self._check_index(i)
        return np.arange(int(i))

    def pairwise_lags(self, idx_a: np.ndarray, idx_b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Canonical spatial and temporal lag matrices between two index lists."""
        idx_a = np.asarray(idx_a, dtype=np.int64)
        idx_b = np.asarray(idx_b, dtype=np.int64)
        sa, ta = idx_a % self.n_sites, idx_a // self.n_sites
        sb, tb = idx_b % self.n_sites, idx_b // self.n_sites
        h = self.site_distances[np.ix_(sa, sb)]
        u = self.time_lags[np.ix_(ta, tb)]
        return h, u

    def lags_to(self, i: int, others: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Canonical lags from point i to each index in others."""
        others = np.asarray(others, dtype=np.int64)
        si, ti = int(i) % self.n_sites, int(i) // self.n_sites
        return self.site_distances[si, others % self.n_sites], self.time_lags[ti, others // self.n_sites]

    def locate(self, point: SpaceTimePoint) -> Optional[int]:
        """Reference index of a point that coincides with the grid, else None."""
        if point.dim != self.dim:
            raise ReferenceSetError(f"point has dimension {point.dim}, reference set has {self.dim}")
        site_hits = np.flatnonzero(np.all(self._locations == np.asarray(point.s), axis=1))
        time_hits = np.flatnonzero(self._times == point.t)
        if site_hits.size == 0 or time_hits.size == 0:
            return None
        return self.index(int(site_hits[0]), int(time_hits[0]))

def enumerate_reference(locations, times) -> ReferenceSet:
    """Validate sites and times and build the time-major reference set."""
    locations = np.asarray(locations, dtype=float)
    if locations.ndim == 1:
        locations = locations[:, None]
    times = np.asarray(times, dtype=float).ravel()

    if locations.ndim != 2 or locations.shape[0] == 0:
        raise ReferenceSetError("locations must be a non-empty (N, d) array")
    if not 1 <= locations.shape[1] <= 3:
        raise ReferenceSetError(f"spatial dimension must be 1, 2 or 3, got {locations.shape[1]}")
    if times.size == 0:
        raise ReferenceSetError("times must be non-empty")
    if not np.all(np.isfinite(locations)) or not np.all(np.isfinite(times)):
        raise ReferenceSetError("all coordinates must be finite")

    _, first, counts = np.unique(locations, axis=0, return_index=True, return_counts=True)
    if np.any(counts > 1):
        dupes = sorted(int(k) for k in first[counts > 1])
        raise ReferenceSetError(f"duplicate site coordinates (first occurrences at sites {dupes})")

    steps = np.diff(times)
    if np.any(steps == 0):
        raise ReferenceSetError(f"duplicate time values at positions {np.flatnonzero(steps == 0).tolist()}")
    if np.any(steps < 0):
        raise ReferenceSetError("times must be strictly increasing")

    ref = ReferenceSet(locations, times)
    logger.debug(f"Enumerated reference set: {ref}")
    return ref
