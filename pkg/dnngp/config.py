"""
Run configuration.

A run is described by one JSON document validated with pydantic. Unknown keys
are rejected. DNNGP_THREADS and DNNGP_SCRATCH_DIR environment variables (read
through python-dotenv) override the thread count and the scratch directory.
"""

import hashlib
import json
import logging
import os
import tempfile
from enum import Enum
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from dnngp.covariance import CovarianceForm, CovarianceParams
from dnngp.datagen import DATASET_PRESETS, SyntheticSpec
from dnngp.errors import ConfigError
from dnngp.mcmc import SamplerConfig, ThetaPrior, form_param_names
from dnngp.neighbors import MAX_NEIGHBORS, NeighborScheme

load_dotenv()

logger = logging.getLogger(__name__)

class ResponseTransform(str, Enum):
    """Transform applied to y before fitting; predictions are mapped back."""
    NONE = "none"
    SQRT = "sqrt"

    def forward(self, y: np.ndarray) -> np.ndarray:
        if self is ResponseTransform.SQRT:
            return np.sqrt(y)
        return y

    def inverse(self, y: np.ndarray) -> np.ndarray:
        if self is ResponseTransform.SQRT:
            return np.square(y)
        return y

class HoldoutPolicy(BaseModel):
    """Which observed cells are withheld from fitting."""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["none", "random_fraction", "block_days"] = "none"
    fraction: Optional[float] = Field(default=None, gt=0, lt=1)
    days: Optional[int] = Field(default=None, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_kind(self) -> "HoldoutPolicy":
        if self.kind == "random_fraction" and self.fraction is None:
            raise ValueError("random_fraction holdout needs 'fraction'")
        if self.kind == "block_days" and self.days is None:
            raise ValueError("block_days holdout needs 'days'")
        return self

class Tau2Prior(BaseModel):
    model_config = ConfigDict(extra="forbid")

    a: float = Field(default=2.0, gt=0)
    b: float = Field(default=0.1, gt=0)

class BetaPrior(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["flat", "normal"] = "flat"
    mean: Optional[List[float]] = None
    covariance: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _check_normal(self) -> "BetaPrior":
        if self.kind == "normal" and self.covariance is None:
            raise ValueError("a normal beta prior needs 'covariance'")
        return self

class SimulationConfig(BaseModel):
    """Synthetic design used by the simulate command."""
    model_config = ConfigDict(extra="forbid")

    preset: Optional[Literal["dataset1", "dataset2", "dataset3"]] = None
    n_side: int = Field(default=8, ge=1)
    dim: int = Field(default=2, ge=1, le=3)
    n_times: int = Field(default=8, ge=1)
    n_holdout: int = Field(default=100, ge=0)
    theta: Optional[Dict[str, float]] = None
    beta: Optional[List[float]] = None
    tau2: Optional[float] = Field(default=None, ge=0)
    seed: Optional[int] = None

    @model_validator(mode="after")
    def _check_truth(self) -> "SimulationConfig":
        if self.preset is None and self.theta is None:
            raise ValueError("simulation needs a 'preset' or explicit 'theta'")
        return self

    def synthetic_spec(self, default_seed: int) -> SyntheticSpec:
        preset = DATASET_PRESETS[self.preset] if self.preset else None
        theta = CovarianceParams.create(**self.theta) if self.theta else preset.theta
        beta = tuple(self.beta) if self.beta is not None else (preset.beta if preset else (1.0, 5.0))
        tau2 = self.tau2 if self.tau2 is not None else (preset.tau2 if preset else 0.1)
        return SyntheticSpec(
            n_side=self.n_side,
            dim=self.dim,
            n_times=self.n_times,
            theta=theta,
            beta=beta,
            tau2=tau2,
            n_holdout=self.n_holdout,
            seed=default_seed if self.seed is None else self.seed
        )

class RunConfig(BaseModel):
    """Everything needed to simulate, fit, predict and validate one model."""
    model_config = ConfigDict(extra="forbid")

    scheme: NeighborScheme = NeighborScheme.ADAPTIVE
    m: int = Field(default=25, ge=0, le=MAX_NEIGHBORS)
    covariance_form: CovarianceForm = CovarianceForm.EXPONENTIAL
    include_own_site: bool = False
    priors: Dict[str, ThetaPrior] = Field(default_factory=dict)
    tau2_prior: Tau2Prior = Field(default_factory=Tau2Prior)
    beta_prior: BetaPrior = Field(default_factory=BetaPrior)
    n_iter: int = Field(default=5000, ge=0)
    n_burn: int = Field(default=2000, ge=0)
    n_chains: int = Field(default=3, ge=1)
    thin: int = Field(default=1, ge=1)
    seed: int = 0
    threads: int = Field(default=1, ge=1)
    proposal_scale: float = Field(default=0.1, gt=0)
    progress_every: int = Field(default=1000, ge=1)
    response_transform: ResponseTransform = ResponseTransform.NONE
    holdout: HoldoutPolicy = Field(default_factory=HoldoutPolicy)
    thresholds: List[float] = Field(default_factory=lambda: [50.0])
    w_subset: Optional[List[int]] = None
    max_prediction_draws: Optional[int] = Field(default=None, ge=1)
    simulation: Optional[SimulationConfig] = None

    @model_validator(mode="after")
    def _check_consistency(self) -> "RunConfig":
        if self.n_burn > self.n_iter:
            raise ValueError(f"n_burn={self.n_burn} exceeds n_iter={self.n_iter}")
        names = form_param_names(self.covariance_form)
        unknown = sorted(set(self.priors) - set(names))
        if unknown:
            raise ValueError(f"priors given for parameters {unknown} not used by the {self.covariance_form.value} form")
        return self

    def theta_priors(self) -> Dict[str, ThetaPrior]:
        """Configured priors, falling back to the preset's for missing components."""
        priors = dict(self.priors)
        if self.simulation is not None and self.simulation.preset is not None:
            for name, prior in DATASET_PRESETS[self.simulation.preset].priors.items():
                priors.setdefault(name, prior)
        missing = [name for name in form_param_names(self.covariance_form) if name not in priors]
        if missing:
            raise ConfigError(f"no prior configured for covariance parameters {missing}")
        return priors

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            n_iter=self.n_iter,
            n_burn=self.n_burn,
            n_chains=self.n_chains,
            thin=self.thin,
            seed=self.seed,
            threads=self.threads,
            proposal_scale=self.proposal_scale,
            progress_every=self.progress_every
        )

    def beta_prior_arrays(self, p: int) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
        if self.beta_prior.kind == "flat":
            return None, None
        mean = np.zeros(p) if self.beta_prior.mean is None else np.asarray(self.beta_prior.mean, dtype=float)
        return mean, np.asarray(self.beta_prior.covariance, dtype=float)

    def semantic_dict(self) -> Dict:
        """Fields that change results; threads and progress_every do not."""
        return self.model_dump(mode="json", exclude={"threads", "progress_every"})

    def config_hash(self) -> str:
        canonical = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

def _env_threads() -> Optional[int]:
    raw = os.getenv("DNNGP_THREADS")
    if raw is None or raw == "":
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"DNNGP_THREADS must be a positive integer, got {raw!r}")
    if value < 1:
        raise ConfigError(f"DNNGP_THREADS must be a positive integer, got {raw!r}")
    return value

def scratch_dir() -> Path:
    """Directory for intermediate files (DNNGP_SCRATCH_DIR, else the system temp dir)."""
    path = Path(os.getenv("DNNGP_SCRATCH_DIR") or tempfile.gettempdir())
    path.mkdir(parents=True, exist_ok=True)
    return path

def parse_run_config(data: Dict, threads: Optional[int] = None) -> RunConfig:
    """Validate a config mapping; explicit threads beat DNNGP_THREADS beat the file."""
    override = threads if threads is not None else _env_threads()
    if override is not None:
        data = {**data, "threads": override}
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid run configuration: {e.errors(include_url=False)}") from e

def load_run_config(path, threads: Optional[int] = None) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}")
    config = parse_run_config(data, threads=threads)
    logger.info(f"Loaded run config {path} (hash {config.config_hash()[:12]})")
    return config
