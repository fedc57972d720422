"""
The DNNGP process over the reference set.

Handles the sparse conditional factors (a_i, f_i), the joint prior density
they define, the sparse precision K^-1 = V' F^-1 V, ancestral prior draws and
the induced covariance between arbitrary space-time points.

B is stored row-wise: row i carries a_i in the columns N(i). V = I - B is unit
lower triangular and the residual e = V w has independent N(0, f_i) entries.
"""

import logging
import time
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.sparse.linalg import spsolve_triangular

from dnngp.covariance import CovarianceParams, cov
from dnngp.errors import NeighborError
from dnngp.neighbors import MAX_NEIGHBORS, NeighborScheme, NeighborTable, prediction_neighbors
from dnngp.spacetime import ReferenceSet, SpaceTimePoint, canonical_lags
from utils.logging_config import log_factor_build
from utils.parallel_utils import map_index_chunks
from utils.retry_utils import retry_sync

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))

@dataclass(eq=False)
class SparseFactors:
    """Per-point weights a_i and conditional variances f_i for one (theta, table)."""
    params: CovarianceParams
    table: NeighborTable
    weights: List[np.ndarray]
    cond_var: np.ndarray
    n_jittered: int = 0

    @property
    def size(self) -> int:
        return self.cond_var.shape[0]

    @cached_property
    def lower(self) -> sparse.csr_matrix:
        """Strictly lower-triangular B with B[i, N(i)] = a_i."""
        sizes = self.table.sizes()
        rows = np.repeat(np.arange(self.size), sizes)
        if sizes.sum() == 0:
            return sparse.csr_matrix((self.size, self.size))
        cols = np.concatenate(self.table.sets)
        data = np.concatenate(self.weights)
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.size, self.size))

    @cached_property
    def lower_csc(self) -> sparse.csc_matrix:
        """B by columns: column i lists U(i) = {j : i in N(j)} with b_{j,i}."""
        return self.lower.tocsc()

    def residuals(self, w: np.ndarray) -> np.ndarray:
        """e = w - B w."""
        return w - self.lower @ w

def conditional_weights(
    neighbor_cov: np.ndarray,
    cross_cov: np.ndarray,
    variance: float,
    context: str = ""
) -> Tuple[np.ndarray, float, int]:
    """Solve C_NN a = C_Ni and return (a, f, jittered) with f = C_ii - C_iN a."""

    def solve(matrix: np.ndarray) -> Tuple[np.ndarray, float]:
        factor = cho_factor(matrix, lower=True)
        a = cho_solve(factor, cross_cov)
        f = variance - float(cross_cov @ a)
        if not f > 0.0:
            raise np.linalg.LinAlgError(f"non-positive conditional variance {f:.3e}")
        return a, f

    (a, f), jittered = retry_sync(solve, neighbor_cov, variance, context=context)
    return a, f, jittered

def _neighbor_system(ref: ReferenceSet, i: int, idx: np.ndarray, params: CovarianceParams):
    h, u = ref.pairwise_lags(idx, idx)
    hi, ui = ref.lags_to(i, idx)
    return cov(h, u, params), cov(hi, ui, params)

def _full_factors(ref: ReferenceSet, params: CovarianceParams) -> Tuple[List[np.ndarray], np.ndarray, int]:
    """Exact factors from one dense Cholesky C = L L'."""
    all_idx = np.arange(ref.size)
    h, u = ref.pairwise_lags(all_idx, all_idx)
    dense = cov(h, u, params)
    chol, jittered = retry_sync(lambda mat: np.linalg.cholesky(mat), dense, params.sigma2, context="full conditioning")
    diag = np.diag(chol)
    unit = chol / diag[None, :]
    inv_unit = solve_triangular(unit, np.eye(ref.size), lower=True, unit_diagonal=True)
    weights = [-inv_unit[i, :i].copy() for i in range(ref.size)]
    return weights, diag ** 2, jittered

def compute_factors(
    ref: ReferenceSet,
    table: NeighborTable,
    params: CovarianceParams,
    threads: int = 1
) -> SparseFactors:
    """Kriging weights and conditional variances for every reference point."""
    if len(table) != ref.size:
        raise NeighborError(f"neighbor table has {len(table)} entries, reference set has {ref.size}")
    started = time.perf_counter()

    if table.scheme is NeighborScheme.FULL:
        weights, cond_var, jittered = _full_factors(ref, params)
    else:
        if table.m > MAX_NEIGHBORS:
            raise NeighborError(f"neighbor budget m={table.m} exceeds the supported maximum {MAX_NEIGHBORS}")

        def solve_range(start: int, stop: int) -> List[Tuple[np.ndarray, float, int]]:
            out = []
            for i in range(start, stop):
                idx = table[i]
                if idx.shape[0] == 0:
                    out.append((np.empty(0), params.sigma2, 0))
                    continue
                c_nn, c_ni = _neighbor_system(ref, i, idx, params)
                out.append(conditional_weights(c_nn, c_ni, params.sigma2, context=f"point {i}"))
            return out

        results = map_index_chunks(solve_range, ref.size, threads)
        weights = [a for a, _, _ in results]
        cond_var = np.array([f for _, f, _ in results], dtype=float)
        jittered = sum(j for _, _, j in results)

    factors = SparseFactors(
        params=params,
        table=table,
        weights=weights,
        cond_var=np.asarray(cond_var, dtype=float),
        n_jittered=jittered
    )
    log_factor_build(ref.size, jittered, time.perf_counter() - started)
    return factors

def log_prior_density(w: np.ndarray, factors: SparseFactors) -> float:
    """log p(w | theta) = sum_i log N(w_i | a_i' w_N(i), f_i)."""
    w = np.asarray(w, dtype=float)
    if w.shape != (factors.size,):
        raise ValueError(f"w has shape {w.shape}, expected ({factors.size},)")
    e = factors.residuals(w)
    f = factors.cond_var
    return float(-0.5 * np.sum(LOG_2PI + np.log(f) + e * e / f))

@dataclass(eq=False)
class PrecisionView:
    """Sparse K^-1 with its log determinant."""
    matrix: sparse.csc_matrix
    logdet_cov: float

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

def assemble_precision(factors: SparseFactors) -> PrecisionView:
    """K^-1 = V' F^-1 V with V = I - B."""
    v = sparse.identity(factors.size, format="csr") - factors.lower
    precision = (v.T @ sparse.diags(1.0 / factors.cond_var) @ v).tocsc()
    precision.eliminate_zeros()
    return PrecisionView(matrix=precision, logdet_cov=float(np.sum(np.log(factors.cond_var))))

def sample_prior(factors: SparseFactors, seed=None, size: Optional[int] = None) -> np.ndarray:
    """Ancestral draw(s) of w in enumeration order.

    Returns shape (r,) or, with size, (size, r).
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = 1 if size is None else size
    e = rng.standard_normal((factors.size, n)) * np.sqrt(factors.cond_var)[:, None]
    v = (sparse.identity(factors.size, format="csr") - factors.lower).tocsr()
    w = spsolve_triangular(v, e, lower=True, unit_diagonal=True)
    w = np.asarray(w).reshape(factors.size, n)
    return w[:, 0] if size is None else w.T

def dense_covariance(factors: SparseFactors) -> np.ndarray:
    """K = V^-1 F V^-T as a dense matrix. Test and diagnostic use only."""
    v = np.eye(factors.size) - factors.lower.toarray()
    v_inv = solve_triangular(v, np.eye(factors.size), lower=True, unit_diagonal=True)
    return (v_inv * factors.cond_var[None, :]) @ v_inv.T

@dataclass(eq=False)
class PointFactors:
    """Conditional law of w at a point outside the reference set."""
    neighbors: np.ndarray
    weights: np.ndarray
    cond_var: float
    jittered: int = 0

def new_point_factors(
    point: SpaceTimePoint,
    ref: ReferenceSet,
    params: CovarianceParams,
    scheme: NeighborScheme,
    m: int,
    eligible: Optional[np.ndarray] = None,
    neighbors: Optional[np.ndarray] = None
) -> PointFactors:
    """a_N(l) and f_l for an off-reference point."""
    if neighbors is None:
        neighbors = prediction_neighbors(point, ref, scheme, m, params=params, eligible=eligible)
    if neighbors.shape[0] == 0:
        return PointFactors(neighbors=neighbors, weights=np.empty(0), cond_var=params.sigma2)

    h, u = ref.pairwise_lags(neighbors, neighbors)
    site_d = canonical_lags(np.linalg.norm(ref.locations[neighbors % ref.n_sites] - np.asarray(point.s), axis=1))
    time_d = canonical_lags(np.abs(ref.times[neighbors // ref.n_sites] - point.t))
    a, f, jittered = conditional_weights(cov(h, u, params), cov(site_d, time_d, params), params.sigma2,
                                         context="prediction point")
    return PointFactors(neighbors=neighbors, weights=a, cond_var=f, jittered=jittered)

def induced_cov(
    point_a: SpaceTimePoint,
    point_b: SpaceTimePoint,
    factors: SparseFactors,
    ref: ReferenceSet,
    dense_k: Optional[np.ndarray] = None
) -> float:
    """Covariance of the DNNGP between two arbitrary points.

    Reference points read K directly; off-reference points go through their
    own kriging weights, with f_l added on the diagonal.
    """
    if dense_k is None:
        dense_k = dense_covariance(factors)
    params = factors.params
    scheme = factors.table.scheme
    m = factors.table.m

    def representation(point: SpaceTimePoint) -> Tuple[np.ndarray, np.ndarray, float]:
        index = ref.locate(point)
        if index is not None:
            return np.array([index]), np.array([1.0]), 0.0
        pf = new_point_factors(point, ref, params, scheme, m)
        return pf.neighbors, pf.weights, pf.cond_var

    idx_a, wa, fa = representation(point_a)
    idx_b, wb, _ = representation(point_b)
    value = float(wa @ dense_k[np.ix_(idx_a, idx_b)] @ wb)
    if fa > 0.0 and point_a == point_b:
        value += fa
    return value
