"""
Shared fixtures for the DNNGP test suite.
"""

import numpy as np
import pytest

from dnngp.covariance import CovarianceForm, CovarianceParams
from dnngp.datagen import grid_locations
from dnngp.mcmc import ModelSpec, PosteriorSamples, PriorDistribution, ThetaPrior
from dnngp.spacetime import enumerate_reference

def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow statistical tests")

def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)

def grid_reference(n_side: int, n_times: int, dim: int = 2, extent: float = 1.0):
    return enumerate_reference(grid_locations(n_side, dim, (0.0, extent)), np.linspace(0.0, 1.0, n_times))

@pytest.fixture
def ref3():
    """3x3 sites over 3 times in the unit cube."""
    return grid_reference(3, 3)

@pytest.fixture
def ref4():
    return grid_reference(4, 4)

@pytest.fixture
def monotone_theta():
    """c * h stays below 2 on the unit square, so C decreases in both lags."""
    return CovarianceParams(sigma2=1.0, a=2.0, c=1.0, kappa=0.5)

@pytest.fixture
def dataset1_theta():
    return CovarianceParams(sigma2=1.0, a=50.0, c=25.0, kappa=0.75)

@pytest.fixture
def theta_priors():
    return {
        "sigma2": ThetaPrior(distribution=PriorDistribution.INVERSE_GAMMA, shape=2.0, rate=1.0),
        "a": ThetaPrior(lower=0.5, upper=8.0),
        "c": ThetaPrior(lower=0.2, upper=4.0),
        "kappa": ThetaPrior(lower=0.0, upper=1.0)
    }

def make_spec(ref, priors, scheme="adaptive", m=9, seed=0, observed=None, **kwargs) -> ModelSpec:
    """ModelSpec with an intercept plus one N(0, 1) covariate and noisy y."""
    rng = np.random.default_rng(seed)
    observed = np.arange(ref.size) if observed is None else np.asarray(observed)
    x = np.column_stack([np.ones(observed.size), rng.standard_normal(observed.size)])
    y = x @ np.array([1.0, 2.0]) + 0.5 * rng.standard_normal(observed.size)
    return ModelSpec(ref=ref, x=x, y=y, observed=observed, theta_priors=priors, scheme=scheme, m=m, **kwargs)

def make_samples(beta, tau2, w, theta=None, w_index=None, chain=None) -> PosteriorSamples:
    """PosteriorSamples from raw arrays; theta defaults to a fixed monotone value."""
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    n = beta.shape[0]
    tau2 = np.broadcast_to(np.asarray(tau2, dtype=float), (n,)).copy()
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w.reshape(n, -1)
    if theta is None:
        theta = np.tile([1.0, 2.0, 1.0, 0.5], (n, 1))
    return PosteriorSamples(
        theta_names=("sigma2", "a", "c", "kappa"),
        covariance_form=CovarianceForm.EXPONENTIAL,
        chain=np.zeros(n, dtype=np.int64) if chain is None else np.asarray(chain, dtype=np.int64),
        iteration=np.arange(1, n + 1, dtype=np.int64),
        beta=beta,
        tau2=tau2,
        theta=np.asarray(theta, dtype=float),
        w=w,
        w_index=np.arange(w.shape[1]) if w_index is None else np.asarray(w_index),
        acceptance={0: 0.3}
    )
