"""
Bayesian DNNGP regression and its MCMC sampler.

Model: y(l) = x(l)'beta + w(l) + eps(l), eps ~ N(0, tau2), with a DNNGP prior
on w over the reference set. One sweep updates beta, tau2 and w by Gibbs and
theta by a random-walk Metropolis step on transformed scales:

- log scale for positive parameters (sigma2, a, c, nu, delta)
- logit scale on the prior box for kappa and alpha

Under the adaptive scheme the proposal's neighbor sets are rebuilt from the
cached eligible sets before its density is evaluated; the rebuilt table is
kept only when the proposal is accepted.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit

from dnngp.covariance import PARAM_NAMES, CovarianceForm, CovarianceParams, check_natural_monotonicity
from dnngp.errors import ConfigError, PredictionError, SamplerError
from dnngp.neighbors import (
    NeighborScheme,
    NeighborTable,
    adaptive_neighbors,
    build_neighbor_table,
    reference_lag_grids,
    validate_budget
)
from dnngp.process import SparseFactors, compute_factors, log_prior_density
from dnngp.spacetime import ReferenceSet
from utils.logging_config import log_chain_summary, log_sampler_progress

logger = logging.getLogger(__name__)

TARGET_ACCEPTANCE = 0.35
ADAPTATION_EXPONENT = 0.6

# Parameters proposed on a logit scale over their prior box
BOXED_PARAMS = ("kappa", "alpha")

def form_param_names(form: CovarianceForm) -> Tuple[str, ...]:
    """Theta components that exist under a covariance form."""
    if CovarianceForm(form) is CovarianceForm.EXPONENTIAL:
        return ("sigma2", "a", "c", "kappa")
    return PARAM_NAMES

class PriorDistribution(str, Enum):
    UNIFORM = "uniform"
    INVERSE_GAMMA = "inverse_gamma"

class ThetaPrior(BaseModel):
    """Prior on one covariance parameter, or a fixed value."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    distribution: PriorDistribution = PriorDistribution.UNIFORM
    lower: Optional[float] = None
    upper: Optional[float] = None
    shape: Optional[float] = Field(default=None, gt=0)
    rate: Optional[float] = Field(default=None, gt=0)
    fixed: bool = False
    value: Optional[float] = None

    @model_validator(mode="after")
    def _check_support(self) -> "ThetaPrior":
        if self.fixed:
            if self.value is None:
                raise ValueError("a fixed parameter needs a value")
            return self
        if self.distribution is PriorDistribution.UNIFORM:
            if self.lower is None or self.upper is None:
                raise ValueError("a uniform prior needs lower and upper bounds")
            if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
                raise ValueError("uniform prior bounds must be finite")
            if self.lower < 0 or not self.lower < self.upper:
                raise ValueError(f"uniform prior needs 0 <= lower < upper, got [{self.lower}, {self.upper}]")
        elif self.shape is None or self.rate is None:
            raise ValueError("an inverse-gamma prior needs shape and rate")
        return self

    def contains(self, x: float) -> bool:
        if self.distribution is PriorDistribution.INVERSE_GAMMA:
            return x > 0
        return self.lower <= x <= self.upper

    def log_density(self, x: float) -> float:
        if not self.contains(x):
            return -math.inf
        if self.distribution is PriorDistribution.INVERSE_GAMMA:
            return float(stats.invgamma.logpdf(x, self.shape, scale=self.rate))
        return -math.log(self.upper - self.lower)

    def initial_value(self, boxed: bool = False) -> float:
        """Fixed value, inverse-gamma mode, or box midpoint (geometric on log-scale boxes)."""
        if self.fixed:
            return float(self.value)
        if self.distribution is PriorDistribution.INVERSE_GAMMA:
            return self.rate / (self.shape + 1.0)
        if boxed or self.lower <= 0:
            return 0.5 * (self.lower + self.upper)
        return math.sqrt(self.lower * self.upper)

def _inside_box(prior: ThetaPrior, x: float) -> float:
    """x clipped to the open interval (lower, upper)."""
    low = np.nextafter(prior.lower, prior.upper)
    high = np.nextafter(prior.upper, prior.lower)
    return float(min(max(x, low), high))

def to_unconstrained(name: str, prior: ThetaPrior, x: float) -> float:
    if name in BOXED_PARAMS:
        x = _inside_box(prior, x)
        return math.log(x - prior.lower) - math.log(prior.upper - x)
    return math.log(x)

def from_unconstrained(name: str, prior: ThetaPrior, z: float) -> float:
    if name in BOXED_PARAMS:
        return _inside_box(prior, prior.lower + (prior.upper - prior.lower) * float(expit(z)))
    return math.exp(z)

def log_jacobian(name: str, prior: ThetaPrior, x: float) -> float:
    """log |d theta / d z| at theta = x."""
    if name in BOXED_PARAMS:
        x = _inside_box(prior, x)
        return math.log(x - prior.lower) + math.log(prior.upper - x) - math.log(prior.upper - prior.lower)
    return math.log(x)

@dataclass(eq=False)
class ModelSpec:
    """Data, observation map, priors and neighbor scheme of one model."""
    ref: ReferenceSet
    x: np.ndarray
    y: np.ndarray
    observed: np.ndarray
    theta_priors: Dict[str, ThetaPrior]
    scheme: NeighborScheme = NeighborScheme.ADAPTIVE
    m: int = 25
    covariance_form: CovarianceForm = CovarianceForm.EXPONENTIAL
    tau2_a: float = 2.0
    tau2_b: float = 0.1
    beta_mean: Optional[np.ndarray] = None
    beta_cov: Optional[np.ndarray] = None
    include_own_site: bool = False
    initial_theta: Dict[str, float] = field(default_factory=dict)
    initial_beta: Optional[np.ndarray] = None
    initial_tau2: Optional[float] = None

    def __post_init__(self):
        self.scheme = NeighborScheme(self.scheme)
        self.covariance_form = CovarianceForm(self.covariance_form)
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.observed = np.asarray(self.observed, dtype=np.int64).ravel()
        if self.y.shape[0] == 0:
            self.x = self.x.reshape(0, self.x.shape[-1])

        if self.x.shape[0] != self.y.shape[0] or self.observed.shape[0] != self.y.shape[0]:
            raise ConfigError(
                f"x has {self.x.shape[0]} rows, y {self.y.shape[0]}, observation map {self.observed.shape[0]}"
            )
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ConfigError("observed responses and covariates must be finite")
        if np.any(self.observed < 0) or np.any(self.observed >= self.ref.size):
            raise ConfigError("observation map points outside the reference set")
        if np.unique(self.observed).shape[0] != self.observed.shape[0]:
            raise ConfigError("two observed rows map to the same reference index")
        if self.tau2_a <= 0 or self.tau2_b <= 0:
            raise ConfigError("tau2 prior needs positive shape and rate")

        if self.spatial:
            validate_budget(self.m, self.scheme, self.ref.size)
        missing = [name for name in form_param_names(self.covariance_form) if name not in self.theta_priors]
        if missing:
            raise ConfigError(f"no prior given for covariance parameters {missing}")
        for name in form_param_names(self.covariance_form):
            prior = self.theta_priors[name]
            if name in BOXED_PARAMS and not prior.fixed and prior.distribution is not PriorDistribution.UNIFORM:
                raise ConfigError(f"{name} needs a uniform prior box")
            if name == "kappa" and not prior.fixed and prior.upper > 1:
                raise ConfigError("kappa prior box must lie inside [0, 1]")
            if name == "alpha" and not prior.fixed and prior.upper > 1:
                raise ConfigError("alpha prior box must lie inside (0, 1]")

        if self.beta_cov is not None:
            self.beta_cov = np.atleast_2d(np.asarray(self.beta_cov, dtype=float))
            self.beta_mean = (np.zeros(self.p) if self.beta_mean is None
                              else np.asarray(self.beta_mean, dtype=float).ravel())
            if self.beta_cov.shape != (self.p, self.p) or self.beta_mean.shape != (self.p,):
                raise ConfigError(f"beta prior must have mean ({self.p},) and covariance ({self.p}, {self.p})")

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def r(self) -> int:
        return self.ref.size

    @property
    def spatial(self) -> bool:
        """False in non-spatial mode (m = 0), where w stays at zero."""
        return self.scheme is NeighborScheme.FULL or self.m > 0

    @property
    def theta_names(self) -> Tuple[str, ...]:
        return form_param_names(self.covariance_form)

    @property
    def sampled_names(self) -> Tuple[str, ...]:
        return tuple(n for n in self.theta_names if not self.theta_priors[n].fixed)

    @cached_property
    def observed_mask(self) -> np.ndarray:
        mask = np.zeros(self.r, dtype=bool)
        mask[self.observed] = True
        return mask

    @cached_property
    def xtx(self) -> np.ndarray:
        return self.x.T @ self.x

    @cached_property
    def beta_precision(self) -> Optional[np.ndarray]:
        if self.beta_cov is None:
            return None
        return np.linalg.inv(self.beta_cov)

    def scatter(self, values: np.ndarray) -> np.ndarray:
        """Length-r vector holding values at observed indices and zero elsewhere."""
        out = np.zeros(self.r)
        out[self.observed] = values
        return out

    def make_params(self, values: Dict[str, float]) -> CovarianceParams:
        return CovarianceParams.create(form=self.covariance_form, **values)

class SamplerConfig(BaseModel):
    """MCMC run lengths, seeding and parallelism."""
    model_config = ConfigDict(extra="forbid")

    n_iter: int = Field(ge=0)
    n_burn: int = Field(default=0, ge=0)
    n_chains: int = Field(default=1, ge=1)
    thin: int = Field(default=1, ge=1)
    seed: int = 0
    threads: int = Field(default=1, ge=1)
    proposal_scale: float = Field(default=0.1, gt=0)
    w_subset: Optional[List[int]] = None
    progress_every: int = Field(default=1000, ge=1)

    @model_validator(mode="after")
    def _check_burn(self) -> "SamplerConfig":
        if self.n_burn > self.n_iter:
            raise ValueError(f"n_burn={self.n_burn} exceeds n_iter={self.n_iter}")
        return self

    def stored_iterations(self) -> np.ndarray:
        """1-based iteration numbers kept after burn-in and thinning."""
        return np.arange(self.n_burn + self.thin, self.n_iter + 1, self.thin, dtype=np.int64)

@dataclass(eq=False)
class ChainState:
    """Current values of one chain."""
    beta: np.ndarray
    tau2: float
    theta: CovarianceParams
    w: np.ndarray
    factors: Optional[SparseFactors]
    table: Optional[NeighborTable]
    rng: np.random.Generator
    chain: int = 0
    iteration: int = 0
    log_step: float = math.log(0.1)
    n_accepted: int = 0
    n_proposed: int = 0
    threads: int = 1

    @property
    def acceptance(self) -> float:
        return self.n_accepted / self.n_proposed if self.n_proposed else 0.0

# --- beta -------------------------------------------------------------------

def beta_conditional(state: ChainState, spec: ModelSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of beta | y, w, tau2."""
    precision = spec.xtx / state.tau2
    rhs = spec.x.T @ (spec.y - state.w[spec.observed]) / state.tau2
    if spec.beta_precision is not None:
        precision = precision + spec.beta_precision
        rhs = rhs + spec.beta_precision @ spec.beta_mean
    try:
        factor = cho_factor(precision, lower=True)
    except np.linalg.LinAlgError as e:
        raise SamplerError(
            "X'X is singular under the flat beta prior; use a normal (ridge) beta prior"
        ) from e
    mean = cho_solve(factor, rhs)
    covariance = cho_solve(factor, np.eye(spec.p))
    return mean, covariance

def update_beta(state: ChainState, spec: ModelSpec) -> np.ndarray:
    mean, covariance = beta_conditional(state, spec)
    chol = np.linalg.cholesky(covariance)
    state.beta = mean + chol @ state.rng.standard_normal(spec.p)
    return state.beta

# --- tau2 -------------------------------------------------------------------

def tau2_conditional(state: ChainState, spec: ModelSpec) -> Tuple[float, float]:
    """Shape and rate of the inverse-gamma full conditional of tau2."""
    resid = spec.y - spec.x @ state.beta - state.w[spec.observed]
    return spec.tau2_a + 0.5 * spec.n_obs, spec.tau2_b + 0.5 * float(resid @ resid)

def update_tau2(state: ChainState, spec: ModelSpec) -> float:
    shape, rate = tau2_conditional(state, spec)
    state.tau2 = rate / state.rng.gamma(shape)
    return state.tau2

# --- w ----------------------------------------------------------------------

def _w_precisions(factors: SparseFactors, spec: ModelSpec, tau2: float) -> np.ndarray:
    inv_f = 1.0 / factors.cond_var
    csc = factors.lower_csc
    reverse = csc.multiply(csc).T @ inv_f
    return spec.observed_mask / tau2 + inv_f + np.asarray(reverse).ravel()

def w_conditional(i: int, state: ChainState, spec: ModelSpec) -> Tuple[float, float]:
    """Mean and variance of w_i given everything else."""
    factors = state.factors
    f = factors.cond_var
    e = factors.residuals(state.w)
    data = spec.scatter(spec.y - spec.x @ state.beta) / state.tau2
    precision = _w_precisions(factors, spec, state.tau2)[i]

    csc = factors.lower_csc
    lo, hi = csc.indptr[i], csc.indptr[i + 1]
    rows, b = csc.indices[lo:hi], csc.data[lo:hi]
    wi = state.w[i]
    numerator = data[i] + (wi - e[i]) / f[i] + float(np.dot(b, (e[rows] + b * wi) / f[rows]))
    variance = 1.0 / precision
    return variance * numerator, variance

def update_w(state: ChainState, spec: ModelSpec) -> np.ndarray:
    """One sequential sweep over the reference set in enumeration order."""
    factors = state.factors
    f = factors.cond_var
    csc = factors.lower_csc
    indptr, indices, values = csc.indptr, csc.indices, csc.data

    w = state.w
    e = factors.residuals(w)
    data = spec.scatter(spec.y - spec.x @ state.beta) / state.tau2
    sd = np.sqrt(1.0 / _w_precisions(factors, spec, state.tau2))
    z = state.rng.standard_normal(spec.r)

    for i in range(spec.r):
        lo, hi = indptr[i], indptr[i + 1]
        wi = w[i]
        numerator = data[i] + (wi - e[i]) / f[i]
        if hi > lo:
            rows, b = indices[lo:hi], values[lo:hi]
            numerator += np.dot(b, (e[rows] + b * wi) / f[rows])
        new = sd[i] * sd[i] * numerator + sd[i] * z[i]
        delta = new - wi
        if hi > lo:
            e[rows] -= b * delta
        e[i] += delta
        w[i] = new
    return w

# --- theta ------------------------------------------------------------------

def theta_log_prior(values: Dict[str, float], spec: ModelSpec) -> float:
    return sum(spec.theta_priors[name].log_density(values[name]) for name in spec.sampled_names)

def theta_log_jacobian(values: Dict[str, float], spec: ModelSpec) -> float:
    return sum(log_jacobian(name, spec.theta_priors[name], values[name]) for name in spec.sampled_names)

def _theta_values(params: CovarianceParams, spec: ModelSpec) -> Dict[str, float]:
    return {name: float(getattr(params, name)) for name in spec.theta_names}

def _proposal_state(
    state: ChainState,
    spec: ModelSpec,
    values: Dict[str, float]
) -> Tuple[float, Optional[CovarianceParams], Optional[NeighborTable], Optional[SparseFactors]]:
    """Log acceptance ratio plus the proposal's params, table and factors."""
    log_prior_new = theta_log_prior(values, spec)
    if not math.isfinite(log_prior_new):
        return -math.inf, None, None, None

    params = spec.make_params(values)
    table = state.table
    if spec.scheme is NeighborScheme.ADAPTIVE:
        table = adaptive_neighbors(state.table.eligible, spec.ref, params, spec.m, threads=state.threads)
    factors = compute_factors(spec.ref, table, params, threads=state.threads)

    current = _theta_values(state.theta, spec)
    log_new = log_prior_density(state.w, factors) + log_prior_new + theta_log_jacobian(values, spec)
    log_old = (log_prior_density(state.w, state.factors) + theta_log_prior(current, spec)
               + theta_log_jacobian(current, spec))
    return log_new - log_old, params, table, factors

def log_acceptance_ratio(state: ChainState, spec: ModelSpec, proposal: Dict[str, float]) -> float:
    """log [p(w | theta') p(theta') J(theta')] - log [p(w | theta) p(theta) J(theta)]."""
    values = {**_theta_values(state.theta, spec), **proposal}
    return _proposal_state(state, spec, values)[0]

def propose_theta(state: ChainState, spec: ModelSpec) -> Dict[str, float]:
    """Gaussian random walk on the transformed scale of every sampled component."""
    values = _theta_values(state.theta, spec)
    step = math.exp(state.log_step)
    for name in spec.sampled_names:
        prior = spec.theta_priors[name]
        z = to_unconstrained(name, prior, values[name]) + step * state.rng.standard_normal()
        values[name] = from_unconstrained(name, prior, z)
    return values

def update_theta(state: ChainState, spec: ModelSpec, adapt: bool = False) -> CovarianceParams:
    """One Metropolis step for theta; on accept the table and factors follow."""
    if not spec.sampled_names:
        return state.theta
    values = propose_theta(state, spec)
    ratio, params, table, factors = _proposal_state(state, spec, values)

    accepted = math.log(state.rng.uniform()) < ratio
    if accepted:
        state.theta, state.table, state.factors = params, table, factors
    state.n_accepted += int(accepted)
    state.n_proposed += 1

    if adapt:
        gain = max(state.iteration, 1) ** -ADAPTATION_EXPONENT
        state.log_step += gain * (float(accepted) - TARGET_ACCEPTANCE)
    return state.theta

# --- driver -----------------------------------------------------------------

def initial_state(spec: ModelSpec, config: SamplerConfig, chain: int, threads: int = 1) -> ChainState:
    """OLS beta, half the OLS residual variance for tau2, prior-box centre for theta, w = 0."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, chain]))

    if spec.initial_beta is not None:
        beta = np.asarray(spec.initial_beta, dtype=float).copy()
    elif spec.n_obs >= spec.p:
        beta = np.linalg.lstsq(spec.x, spec.y, rcond=None)[0]
    else:
        beta = spec.beta_mean.copy() if spec.beta_mean is not None else np.zeros(spec.p)

    if spec.initial_tau2 is not None:
        tau2 = float(spec.initial_tau2)
    else:
        resid = spec.y - spec.x @ beta
        dof = spec.n_obs - spec.p
        tau2 = 0.5 * float(resid @ resid) / dof if dof > 0 else 0.0
        if not tau2 > 0:
            tau2 = spec.tau2_b / (spec.tau2_a + 1.0)

    values = {name: spec.theta_priors[name].initial_value(boxed=name in BOXED_PARAMS) for name in spec.theta_names}
    values.update(spec.initial_theta)
    theta = spec.make_params(values)

    table = factors = None
    if spec.spatial:
        table = build_neighbor_table(spec.ref, spec.scheme, spec.m, params=theta,
                                     include_own_site=spec.include_own_site, threads=threads)
        factors = compute_factors(spec.ref, table, theta, threads=threads)
        if spec.scheme is NeighborScheme.ADAPTIVE:
            h_grid, u_grid = reference_lag_grids(spec.ref)
            if not check_natural_monotonicity(theta, h_grid, u_grid):
                logger.warning(
                    f"Chain {chain}: initial theta is not naturally monotone over the reference lags; "
                    f"eligible sets may miss some most-correlated neighbors"
                )

    return ChainState(
        beta=beta,
        tau2=tau2,
        theta=theta,
        w=np.zeros(spec.r),
        factors=factors,
        table=table,
        rng=rng,
        chain=chain,
        log_step=math.log(config.proposal_scale),
        threads=threads
    )

def _check_finite(state: ChainState) -> None:
    bad = []
    if not np.all(np.isfinite(state.beta)):
        bad.append(f"beta={state.beta}")
    if not (math.isfinite(state.tau2) and state.tau2 > 0):
        bad.append(f"tau2={state.tau2}")
    if not np.all(np.isfinite(state.w)):
        bad.append(f"w has {int(np.sum(~np.isfinite(state.w)))} non-finite entries")
    if bad:
        raise SamplerError(
            f"chain {state.chain} went non-finite at iteration {state.iteration}: {'; '.join(bad)} "
            f"(theta={state.theta.values()})"
        )

@dataclass(eq=False)
class ChainDraws:
    chain: int
    iteration: np.ndarray
    beta: np.ndarray
    tau2: np.ndarray
    theta: np.ndarray
    w: np.ndarray
    acceptance: float

def run_chain(spec: ModelSpec, config: SamplerConfig, chain: int, threads: int = 1) -> ChainDraws:
    """Run one chain and return its stored draws."""
    started = time.perf_counter()
    state = initial_state(spec, config, chain, threads=threads)
    keep = config.stored_iterations()
    w_index = np.arange(spec.r) if config.w_subset is None else np.asarray(config.w_subset, dtype=np.int64)

    n_keep = keep.shape[0]
    beta = np.empty((n_keep, spec.p))
    tau2 = np.empty(n_keep)
    theta = np.empty((n_keep, len(spec.theta_names)))
    w = np.empty((n_keep, w_index.shape[0]))
    slot = 0
    burn_acceptance = 0.0

    for k in range(1, config.n_iter + 1):
        state.iteration = k
        update_beta(state, spec)
        update_tau2(state, spec)
        if spec.spatial:
            update_w(state, spec)
            update_theta(state, spec, adapt=k <= config.n_burn)
        _check_finite(state)

        if k == config.n_burn:
            burn_acceptance = state.acceptance
            state.n_accepted = state.n_proposed = 0
        if k % config.progress_every == 0:
            log_sampler_progress(chain, k, config.n_iter, state.acceptance, math.exp(state.log_step))

        if slot < n_keep and keep[slot] == k:
            beta[slot] = state.beta
            tau2[slot] = state.tau2
            theta[slot] = [getattr(state.theta, name) for name in spec.theta_names]
            w[slot] = state.w[w_index]
            slot += 1

    acceptance = state.acceptance if state.n_proposed else burn_acceptance
    log_chain_summary(chain, n_keep, acceptance, time.perf_counter() - started)
    return ChainDraws(chain=chain, iteration=keep, beta=beta, tau2=tau2, theta=theta, w=w, acceptance=acceptance)

@dataclass(eq=False)
class PosteriorSamples:
    """Stored draws of every chain, stacked chain-major."""
    theta_names: Tuple[str, ...]
    covariance_form: CovarianceForm
    chain: np.ndarray
    iteration: np.ndarray
    beta: np.ndarray
    tau2: np.ndarray
    theta: np.ndarray
    w: np.ndarray
    w_index: np.ndarray
    acceptance: Dict[int, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.tau2.shape[0]

    @property
    def n_draws(self) -> int:
        return len(self)

    @property
    def p(self) -> int:
        return self.beta.shape[1]

    def theta_column(self, name: str) -> np.ndarray:
        return self.theta[:, self.theta_names.index(name)]

    def params_at(self, k: int) -> CovarianceParams:
        values = dict(zip(self.theta_names, (float(v) for v in self.theta[k])))
        return CovarianceParams.create(form=self.covariance_form, **values)

    def w_columns(self, indices: Sequence[int]) -> np.ndarray:
        """Positions of reference indices inside the stored w block."""
        lookup = {int(j): col for col, j in enumerate(self.w_index)}
        missing = [int(j) for j in indices if int(j) not in lookup]
        if missing:
            raise PredictionError(f"w draws were not stored for reference indices {missing[:10]}")
        return np.array([lookup[int(j)] for j in indices], dtype=np.int64)

    def w_at(self, indices: Sequence[int]) -> np.ndarray:
        """(n_draws, len(indices)) stored w draws."""
        return self.w[:, self.w_columns(indices)]

    def parameter_frame(self) -> pd.DataFrame:
        """beta_k, tau2 and theta columns, one row per draw."""
        data = {f"beta_{k}": self.beta[:, k] for k in range(self.p)}
        data["tau2"] = self.tau2
        for j, name in enumerate(self.theta_names):
            data[name] = self.theta[:, j]
        return pd.DataFrame(data)

    def summary(self, truth: Optional[Dict[str, float]] = None) -> pd.DataFrame:
        """Posterior median with the 2.5 and 97.5 percentiles, per parameter."""
        frame = self.parameter_frame()
        rows = []
        for name in frame.columns:
            values = frame[name].to_numpy()
            if values.size:
                q_lo, median, q_hi = np.percentile(values, [2.5, 50.0, 97.5])
                row = {"parameter": name, "mean": values.mean(), "sd": values.std(ddof=1) if values.size > 1 else 0.0,
                       "median": median, "q2.5": q_lo, "q97.5": q_hi}
            else:
                row = {"parameter": name, "mean": np.nan, "sd": np.nan, "median": np.nan, "q2.5": np.nan, "q97.5": np.nan}
            if truth is not None and name in truth:
                row["truth"] = truth[name]
                row["covered"] = bool(row["q2.5"] <= truth[name] <= row["q97.5"])
            rows.append(row)
        return pd.DataFrame(rows).set_index("parameter")

    @classmethod
    def from_chains(
        cls,
        draws: List[ChainDraws],
        theta_names: Tuple[str, ...],
        form: CovarianceForm,
        w_index: np.ndarray
    ) -> "PosteriorSamples":
        draws = sorted(draws, key=lambda d: d.chain)
        return cls(
            theta_names=tuple(theta_names),
            covariance_form=CovarianceForm(form),
            chain=np.concatenate([np.full(d.iteration.shape[0], d.chain, dtype=np.int64) for d in draws]),
            iteration=np.concatenate([d.iteration for d in draws]),
            beta=np.concatenate([d.beta for d in draws]),
            tau2=np.concatenate([d.tau2 for d in draws]),
            theta=np.concatenate([d.theta for d in draws]),
            w=np.concatenate([d.w for d in draws]),
            w_index=np.asarray(w_index, dtype=np.int64),
            acceptance={d.chain: d.acceptance for d in draws}
        )

def run_sampler(spec: ModelSpec, config: SamplerConfig) -> PosteriorSamples:
    """Run config.n_chains independent chains.

    Chains run in separate processes when threads > 1; each chain's random
    stream depends only on (seed, chain index).
    """
    if config.w_subset is not None:
        bad = [j for j in config.w_subset if not 0 <= j < spec.r]
        if bad:
            raise ConfigError(f"w_subset indices outside the reference set: {bad[:10]}")
    logger.info(
        f"Sampling {config.n_chains} chain(s) x {config.n_iter} iterations "
        f"(burn {config.n_burn}, thin {config.thin}), scheme={spec.scheme.value}, m={spec.m}, r={spec.r}"
    )

    workers = min(config.threads, config.n_chains)
    if workers > 1:
        inner = max(1, config.threads // workers)
        draws = Parallel(n_jobs=workers)(
            delayed(run_chain)(spec, config, chain, inner) for chain in range(config.n_chains)
        )
    else:
        draws = [run_chain(spec, config, chain, config.threads) for chain in range(config.n_chains)]

    w_index = np.arange(spec.r) if config.w_subset is None else np.asarray(config.w_subset, dtype=np.int64)
    return PosteriorSamples.from_chains(draws, spec.theta_names, spec.covariance_form, w_index)
