"""
Tests for DIC, posterior predictive loss and holdout statistics.
"""

import numpy as np
import pytest

from dnngp.errors import PredictionError
from dnngp.mcmc import SamplerConfig, run_sampler
from dnngp.metrics import (
    bias,
    ci_coverage,
    deviance,
    dic,
    fit_metrics,
    predictive_loss,
    r_squared,
    rmspe,
    validation_report
)
from tests.conftest import make_samples, make_spec

@pytest.fixture
def spec(ref3, theta_priors):
    return make_spec(ref3, theta_priors, m=4)

def _noisy_samples(spec, n=200, seed=0):
    rng = np.random.default_rng(seed)
    beta = np.array([1.0, 2.0]) + 0.1 * rng.standard_normal((n, 2))
    tau2 = 0.25 * np.exp(0.1 * rng.standard_normal(n))
    w = 0.3 * rng.standard_normal((n, spec.r))
    return make_samples(beta, tau2, w)

def test_degenerate_chain_has_zero_pd(spec):
    n = 10
    samples = make_samples(np.tile([1.0, 2.0], (n, 1)), 0.3, np.tile(np.linspace(-1, 1, spec.r), (n, 1)))
    p_d, value = dic(samples, spec)
    assert p_d == pytest.approx(0.0, abs=1e-9)
    mu = spec.x @ np.array([1.0, 2.0]) + np.linspace(-1, 1, spec.r)[spec.observed]
    assert value == pytest.approx(float(deviance(spec.y, mu, np.array([0.3]))[0]), rel=1e-12)

def test_dic_is_pd_plus_mean_deviance(spec):
    samples = _noisy_samples(spec)
    p_d, value = dic(samples, spec)
    mu = samples.beta @ spec.x.T + samples.w[:, spec.observed]
    d_bar = np.mean(deviance(spec.y, mu, samples.tau2))
    assert value == pytest.approx(d_bar + p_d, rel=1e-12)
    assert p_d > 0

def test_metrics_ignore_draw_order(spec):
    samples = _noisy_samples(spec)
    order = np.random.default_rng(1).permutation(len(samples))
    shuffled = make_samples(samples.beta[order], samples.tau2[order], samples.w[order])
    assert dic(shuffled, spec) == pytest.approx(dic(samples, spec), rel=1e-12)
    assert predictive_loss(shuffled, spec) == pytest.approx(predictive_loss(samples, spec), rel=1e-12)

def test_loss_decomposes(spec):
    samples = _noisy_samples(spec)
    g, p, d = predictive_loss(samples, spec)
    assert d == pytest.approx(g + p)
    assert g >= 0 and p > 0

def test_exact_fit_has_zero_goodness_of_fit_term(ref3, theta_priors):
    spec = make_spec(ref3, theta_priors, m=4)
    n = 5
    w = np.zeros((n, spec.r))
    w[:, spec.observed] = spec.y - spec.x @ np.array([1.0, 2.0])
    samples = make_samples(np.tile([1.0, 2.0], (n, 1)), 0.5, w)
    g, p, d = predictive_loss(samples, spec)
    assert g == pytest.approx(0.0, abs=1e-18)
    assert p == pytest.approx(0.5 * spec.n_obs)
    assert d == pytest.approx(p)

def test_two_draw_loss_by_hand(ref3, theta_priors):
    spec = make_spec(ref3, theta_priors, m=4, observed=[0])
    y = spec.y[0]
    x = spec.x[0]
    w = np.zeros((2, spec.r))
    w[:, 0] = [0.0, 1.0]
    samples = make_samples(np.tile([1.0, 2.0], (2, 1)), [0.2, 0.4], w)
    mu = x @ np.array([1.0, 2.0]) + np.array([0.0, 1.0])
    g, p, _ = predictive_loss(samples, spec)
    assert g == pytest.approx((y - mu.mean()) ** 2)
    assert p == pytest.approx(0.3 + 0.25)

def test_simulated_loss_tracks_rao_blackwell(spec):
    samples = _noisy_samples(spec, n=4000)
    g_rb, p_rb, _ = predictive_loss(samples, spec)
    g_mc, p_mc, _ = predictive_loss(samples, spec, method="simulate", seed=3)
    assert p_mc == pytest.approx(p_rb, rel=0.05)
    assert g_mc == pytest.approx(g_rb, rel=0.05)
    with pytest.raises(ValueError):
        predictive_loss(samples, spec, method="bogus")

def test_one_draw_is_not_enough(spec):
    samples = make_samples(np.array([[1.0, 2.0]]), 0.5, np.zeros((1, spec.r)))
    with pytest.raises(PredictionError):
        dic(samples, spec)
    with pytest.raises(PredictionError):
        fit_metrics(samples, spec)

def test_fit_metrics_bundle(spec):
    metrics = fit_metrics(_noisy_samples(spec), spec)
    payload = metrics.to_dict()
    assert set(payload) == {"pD", "DIC", "G", "P", "D", "RMSPE", "coverage95"}
    assert payload["RMSPE"] is None
    assert payload["D"] == pytest.approx(payload["G"] + payload["P"])

@pytest.mark.slow
def test_non_spatial_pd_counts_regression_parameters(ref4, theta_priors):
    spec = make_spec(ref4, theta_priors, m=0, seed=5)
    samples = run_sampler(spec, SamplerConfig(n_iter=4000, n_burn=500, seed=6))
    p_d, _ = dic(samples, spec)
    assert p_d == pytest.approx(3.0, abs=0.5)

def test_point_statistics():
    truth = np.array([1.0, 2.0, 3.0, 4.0])
    predicted = np.array([1.5, 2.0, 2.5, 4.0])
    assert rmspe(predicted, truth) == pytest.approx(np.sqrt(0.125))
    assert bias(predicted, truth) == pytest.approx(0.0)
    assert r_squared(predicted, truth) == pytest.approx(1.0 - 0.5 / 5.0)
    assert np.isnan(r_squared(predicted, np.ones(4)))
    with pytest.raises(ValueError):
        rmspe(predicted, truth[:3])
    with pytest.raises(ValueError):
        rmspe([], [])

def test_interval_coverage():
    intervals = np.array([[0.0, 2.0], [1.0, 3.0], [2.0, 4.0], [3.0, 5.0]])
    assert ci_coverage(intervals, [1.0, 2.0, 3.0, 9.0]) == pytest.approx(75.0)
    assert ci_coverage(intervals, [0.0, 3.0, 2.0, 5.0]) == pytest.approx(100.0)
    assert ci_coverage(intervals, [-1.0, 0.0, 5.0, 6.0]) == pytest.approx(0.0)

def test_interval_coverage_rejects_bad_input():
    with pytest.raises(ValueError):
        ci_coverage([[2.0, 1.0]], [1.5])
    with pytest.raises(ValueError):
        ci_coverage([[0.0, 1.0]], [0.5, 0.5])
    with pytest.raises(ValueError):
        ci_coverage([[0.0, 1.0]], [0.5], level=1.0)

def test_validation_report_keys():
    report = validation_report([1.0, 2.0], [[0.0, 2.0], [0.0, 1.0]], [1.0, 2.0])
    assert report["n"] == 2
    assert report["rmspe"] == 0.0
    assert report["coverage95"] == pytest.approx(50.0)
    assert report["bias"] == 0.0
