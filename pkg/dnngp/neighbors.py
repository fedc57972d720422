"""
Neighbor-set construction for the DNNGP.

Three schemes build the conditioning sets N(i) over the reference set:

- simple:   sqrt(m) spatial nearest sites at each of the sqrt(m)-1 previous
            times plus sqrt(m) nearest earlier sites at the same time;
            free of covariance parameters.
- adaptive: the m most correlated points under the current theta, searched
            only inside theta-free eligible sets E(i).
- full:     N(i) = H(i), which reproduces the parent GP exactly.

Eligible sets use dominance rectangles. Candidate p is eligible for i when
the points of H(i) that must rank ahead of p under any naturally monotone
covariance number at most m (p included). A point with the same spatial and
temporal lag as p but a larger index ties with p and loses the tie, so it is
not counted.
"""

import logging
import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from dnngp.covariance import CovarianceParams, cov
from dnngp.errors import NeighborError, ReferenceTargetError
from dnngp.spacetime import ReferenceSet, SpaceTimePoint, canonical_lags
from utils.logging_config import log_io_operation, log_neighbor_build
from utils.parallel_utils import map_index_chunks

logger = logging.getLogger(__name__)

MAX_NEIGHBORS = 64

class NeighborScheme(str, Enum):
    """Ways of choosing conditioning sets."""
    SIMPLE = "simple"
    ADAPTIVE = "adaptive"
    FULL = "full"

@dataclass(frozen=True, eq=False)
class EligibleSets:
    """Theta-free eligible lists E(i) in compressed-row form."""
    m: int
    indptr: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return self.indptr.shape[0] - 1

    def __getitem__(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def sizes(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def mean_size(self) -> float:
        return float(self.sizes().mean()) if len(self) else 0.0

    def to_frame(self) -> pd.DataFrame:
        owners = np.repeat(np.arange(len(self)), self.sizes())
        ranks = np.arange(self.indices.shape[0]) - self.indptr[owners]
        return pd.DataFrame({"i": owners, "rank": ranks, "j": self.indices})

@dataclass(frozen=True, eq=False)
class NeighborTable:
    """Conditioning sets N(i) for every reference index, ranked best first."""
    m: int
    scheme: NeighborScheme
    sets: List[np.ndarray]
    eligible: Optional[EligibleSets] = None

    def __len__(self) -> int:
        return len(self.sets)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.sets[i]

    def sizes(self) -> np.ndarray:
        return np.array([s.shape[0] for s in self.sets], dtype=np.int64)

    @property
    def nnz(self) -> int:
        return int(self.sizes().sum())

    def same_sets(self, other: "NeighborTable") -> bool:
        """True when both tables condition every point on the same index set."""
        if len(self) != len(other):
            return False
        return all(np.array_equal(np.sort(a), np.sort(b)) for a, b in zip(self.sets, other.sets))

    def reverse(self) -> List[np.ndarray]:
        """U(i) = {j : i in N(j)}, in increasing j."""
        owners = np.repeat(np.arange(len(self)), self.sizes())
        flat = np.concatenate(self.sets) if self.nnz else np.empty(0, dtype=np.int64)
        order = np.lexsort((owners, flat))
        counts = np.bincount(flat, minlength=len(self))
        return np.split(owners[order], np.cumsum(counts)[:-1])

    def to_frame(self) -> pd.DataFrame:
        sizes = self.sizes()
        owners = np.repeat(np.arange(len(self)), sizes)
        ranks = np.concatenate([np.arange(k) for k in sizes]) if len(self) else np.empty(0, dtype=np.int64)
        flat = np.concatenate(self.sets) if self.nnz else np.empty(0, dtype=np.int64)
        return pd.DataFrame({"i": owners, "rank": ranks, "j": flat})

    def write_csv(self, path, eligible_path=None) -> None:
        """Debug dump of N(i) (and optionally E(i)) with columns i, rank, j."""
        frame = self.to_frame()
        frame.to_csv(path, index=False)
        log_io_operation("Wrote neighbor sets", str(path), len(frame))
        if eligible_path is not None and self.eligible is not None:
            eligible = self.eligible.to_frame()
            eligible.to_csv(eligible_path, index=False)
            log_io_operation("Wrote eligible sets", str(eligible_path), len(eligible))

def validate_budget(m: int, scheme: NeighborScheme, n_points: int) -> None:
    """Check a neighbor budget against its scheme."""
    scheme = NeighborScheme(scheme)
    if scheme is NeighborScheme.FULL:
        return
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise NeighborError(f"neighbor budget m must be a positive integer, got {m!r}")
    if m > MAX_NEIGHBORS:
        raise NeighborError(f"neighbor budget m={m} exceeds the supported maximum {MAX_NEIGHBORS}")
    if scheme is NeighborScheme.SIMPLE:
        if math.isqrt(m) ** 2 != m:
            raise NeighborError(f"simple neighbor sets need a perfect-square m, got {m}")
        if m >= n_points:
            raise NeighborError(f"m={m} must be smaller than the reference-set size {n_points}")

def _nearest_order(distances: np.ndarray) -> np.ndarray:
    """Indices sorted by distance, ties by smaller index."""
    return np.argsort(distances, kind="stable")

def simple_neighbors(ref: ReferenceSet, m: int, include_own_site: bool = False) -> NeighborTable:
    """Parameter-free neighbor sets built from sqrt(m) nearest sites and times.

    At earlier times only the sqrt(m) nearest other sites count. With
    include_own_site the target's own site (distance zero) comes first instead.
    """
    validate_budget(m, NeighborScheme.SIMPLE, ref.size)
    started = time.perf_counter()
    k = math.isqrt(m)
    n_sites = ref.n_sites

    nearest_all = []
    nearest_prev = []
    for j in range(n_sites):
        row = ref.site_distances[j]
        order = _nearest_order(row)
        if not include_own_site:
            order = order[order != j]
        nearest_all.append(order[:k])
        nearest_prev.append(_nearest_order(row[:j])[:k])

    sets = []
    for i in range(ref.size):
        t, j = divmod(i, n_sites)
        parts = [t * n_sites + nearest_prev[j]]
        for lag in range(1, k):
            if t - lag < 0:
                break
            parts.append((t - lag) * n_sites + nearest_all[j])
        sets.append(np.concatenate(parts).astype(np.int64))

    table = NeighborTable(m=m, scheme=NeighborScheme.SIMPLE, sets=sets)
    log_neighbor_build("simple", ref.size, float(table.sizes().mean()), time.perf_counter() - started)
    return table

def full_neighbors(ref: ReferenceSet) -> NeighborTable:
    """N(i) = H(i): the exact parent-GP factorization."""
    sets = [np.arange(i, dtype=np.int64) for i in range(ref.size)]
    return NeighborTable(m=max(ref.size - 1, 0), scheme=NeighborScheme.FULL, sets=sets)

def _site_eligibility(ref: ReferenceSet, j: int, m: int) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Eligible sites for a target at site j: same time, and at each time offset 1..m."""
    row = ref.site_distances[j]
    order = _nearest_order(row)
    sorted_d = row[order]
    positions = np.arange(order.shape[0])

    # points at one earlier time with spatial lag <= h (the tie group of h included)
    count_all = np.searchsorted(sorted_d, sorted_d, side="right")
    # earlier sites at the target's own time with spatial lag <= h
    prev_sorted = np.sort(row[:j])
    count_prev = np.searchsorted(prev_sorted, sorted_d, side="right")
    # members of p's tie group with a larger index, at p's own time
    later_ties = count_all - 1 - positions

    same_time = _nearest_order(row[:j])[:m]
    per_offset = []
    for offset in range(1, m + 1):
        dominated = count_prev + offset * count_all - later_ties
        per_offset.append(np.sort(order[dominated <= m]))
    return same_time, per_offset

def build_eligible_sets(ref: ReferenceSet, m: int, threads: int = 1) -> EligibleSets:
    """Dominance-rectangle eligible sets E(i) for every reference index."""
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise NeighborError(f"neighbor budget m must be a positive integer, got {m!r}")
    started = time.perf_counter()
    n_sites = ref.n_sites
    per_site = [_site_eligibility(ref, j, m) for j in range(n_sites)]

    def build(start: int, stop: int) -> List[np.ndarray]:
        out = []
        for i in range(start, stop):
            t, j = divmod(i, n_sites)
            same_time, per_offset = per_site[j]
            parts = [t * n_sites + same_time]
            for offset in range(1, min(t, m) + 1):
                parts.append((t - offset) * n_sites + per_offset[offset - 1])
            out.append(np.sort(np.concatenate(parts)).astype(np.int64))
        return out

    lists = map_index_chunks(build, ref.size, threads)
    sizes = np.array([e.shape[0] for e in lists], dtype=np.int64)
    indptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    indices = np.concatenate(lists).astype(np.int64) if sizes.sum() else np.empty(0, dtype=np.int64)
    eligible = EligibleSets(m=m, indptr=indptr, indices=indices)
    log_neighbor_build("eligible", ref.size, eligible.mean_size, time.perf_counter() - started)
    return eligible

def _top_m_segments(indptr: np.ndarray, candidates: np.ndarray, scores: np.ndarray, m: int) -> List[np.ndarray]:
    """Per segment, the m candidates with the largest scores (ties: smaller index)."""
    n = indptr.shape[0] - 1
    owners = np.repeat(np.arange(n), np.diff(indptr))
    order = np.lexsort((candidates, -scores, owners))
    rank = np.arange(order.shape[0]) - indptr[owners]
    keep = order[rank < m]
    kept_owners = owners[rank < m]
    counts = np.bincount(kept_owners, minlength=n)
    return np.split(candidates[keep], np.cumsum(counts)[:-1])

def adaptive_neighbors(
    eligible: EligibleSets,
    ref: ReferenceSet,
    params: CovarianceParams,
    m: Optional[int] = None,
    threads: int = 1
) -> NeighborTable:
    """N_theta(i): the min(m, |E(i)|) eligible points most correlated with i."""
    m = eligible.m if m is None else m
    if m != eligible.m:
        raise NeighborError(f"eligible sets were built for m={eligible.m}, not m={m}")
    validate_budget(m, NeighborScheme.ADAPTIVE, ref.size)
    started = time.perf_counter()

    n_sites = ref.n_sites
    owners = np.repeat(np.arange(len(eligible)), eligible.sizes())
    cand = eligible.indices

    def score(start: int, stop: int) -> List[np.ndarray]:
        o, c = owners[start:stop], cand[start:stop]
        h = ref.site_distances[o % n_sites, c % n_sites]
        u = ref.time_lags[o // n_sites, c // n_sites]
        return [cov(h, u, params)]

    chunks = map_index_chunks(score, cand.shape[0], threads)
    scores = np.concatenate(chunks) if chunks else np.empty(0)
    sets = _top_m_segments(eligible.indptr, cand, scores, m)
    table = NeighborTable(m=m, scheme=NeighborScheme.ADAPTIVE, sets=sets, eligible=eligible)
    log_neighbor_build("adaptive", ref.size, float(table.sizes().mean()), time.perf_counter() - started)
    return table

def build_neighbor_table(
    ref: ReferenceSet,
    scheme: NeighborScheme,
    m: int,
    params: Optional[CovarianceParams] = None,
    eligible: Optional[EligibleSets] = None,
    include_own_site: bool = False,
    threads: int = 1
) -> NeighborTable:
    """Dispatch to the scheme's builder."""
    scheme = NeighborScheme(scheme)
    if scheme is NeighborScheme.SIMPLE:
        return simple_neighbors(ref, m, include_own_site=include_own_site)
    if scheme is NeighborScheme.FULL:
        return full_neighbors(ref)
    if params is None:
        raise NeighborError("adaptive neighbor sets need covariance parameters")
    if eligible is None:
        eligible = build_eligible_sets(ref, m, threads=threads)
    return adaptive_neighbors(eligible, ref, params, m, threads=threads)

def reference_lag_grids(ref: ReferenceSet) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted distinct spatial and temporal lags present in the reference set."""
    return np.unique(ref.site_distances), np.unique(ref.time_lags)

def _target_lags(point: SpaceTimePoint, ref: ReferenceSet) -> Tuple[np.ndarray, np.ndarray]:
    if point.dim != ref.dim:
        raise NeighborError(f"target has dimension {point.dim}, reference set has {ref.dim}")
    site_d = canonical_lags(cdist(np.asarray([point.s]), ref.locations)[0])
    time_d = canonical_lags(np.abs(ref.times - point.t))
    return site_d, time_d

def _reject_reference_target(point: SpaceTimePoint, ref: ReferenceSet) -> None:
    index = ref.locate(point)
    if index is not None:
        raise ReferenceTargetError(
            f"target {point} coincides with reference index {index}; use the reference draws instead",
            index
        )

def prediction_eligible(point: SpaceTimePoint, ref: ReferenceSet, m: int) -> np.ndarray:
    """Theta-free eligible reference indices for an off-reference target.

    The whole reference set plays the role of the history. Candidate (site,
    time) is eligible when the points with spatial lag <= its spatial lag and
    temporal lag <= its temporal lag, minus its later-indexed tie partners,
    number at most m.
    """
    _reject_reference_target(point, ref)
    site_d, time_d = _target_lags(point, ref)

    sorted_s = np.sort(site_d)
    sorted_t = np.sort(time_d)
    count_s = np.searchsorted(sorted_s, site_d, side="right")
    count_t = np.searchsorted(sorted_t, time_d, side="right")
    tie_s = count_s - np.searchsorted(sorted_s, site_d, side="left")
    tie_t = count_t - np.searchsorted(sorted_t, time_d, side="left")

    # rank of each site (time) within its tie group by index
    site_rank = np.array([np.count_nonzero(site_d[:j] == site_d[j]) for j in range(ref.n_sites)])
    time_rank = np.array([np.count_nonzero(time_d[:k] == time_d[k]) for k in range(ref.n_times)])

    dominated = count_t[:, None] * count_s[None, :]
    earlier_ties = time_rank[:, None] * tie_s[None, :] + site_rank[None, :]
    later_ties = tie_t[:, None] * tie_s[None, :] - 1 - earlier_ties
    eligible = (dominated - later_ties) <= m
    times, sites = np.nonzero(eligible)
    return np.sort(times * ref.n_sites + sites).astype(np.int64)

def rank_by_correlation(
    point: SpaceTimePoint,
    candidates: np.ndarray,
    ref: ReferenceSet,
    params: CovarianceParams,
    m: int
) -> np.ndarray:
    """The m candidates most correlated with an off-reference point."""
    site_d, time_d = _target_lags(point, ref)
    candidates = np.asarray(candidates, dtype=np.int64)
    scores = cov(site_d[candidates % ref.n_sites], time_d[candidates // ref.n_sites], params)
    order = np.lexsort((candidates, -scores))
    return candidates[order[:m]]

def prediction_neighbors(
    point: SpaceTimePoint,
    ref: ReferenceSet,
    scheme: NeighborScheme,
    m: int,
    params: Optional[CovarianceParams] = None,
    eligible: Optional[np.ndarray] = None
) -> np.ndarray:
    """N(l) for a target l outside the reference set."""
    scheme = NeighborScheme(scheme)
    _reject_reference_target(point, ref)

    if scheme is NeighborScheme.FULL:
        return np.arange(ref.size, dtype=np.int64)

    if scheme is NeighborScheme.SIMPLE:
        if math.isqrt(m) ** 2 != m:
            raise NeighborError(f"simple neighbor sets need a perfect-square m, got {m}")
        k = math.isqrt(m)
        site_d, time_d = _target_lags(point, ref)
        sites = _nearest_order(site_d)[:k]
        times = _nearest_order(time_d)[:k]
        return (times[:, None] * ref.n_sites + sites[None, :]).ravel().astype(np.int64)

    if params is None:
        raise NeighborError("adaptive prediction neighbors need covariance parameters")
    if m >= ref.size:
        candidates = np.arange(ref.size, dtype=np.int64)
    else:
        candidates = prediction_eligible(point, ref, m) if eligible is None else eligible
    return rank_by_correlation(point, candidates, ref, params, m)

def brute_force_neighbors(
    ref: ReferenceSet,
    params: CovarianceParams,
    m: int,
    indices: Optional[Sequence[int]] = None
) -> List[np.ndarray]:
    """The m most correlated points of the full history, by exhaustive scan."""
    indices = range(ref.size) if indices is None else indices
    out = []
    for i in indices:
        history = np.arange(i, dtype=np.int64)
        h, u = ref.lags_to(i, history)
        scores = cov(h, u, params)
        order = np.lexsort((history, -scores))
        out.append(history[order[:m]])
    return out
