"""
Model comparison and validation statistics.

DIC and the posterior predictive loss D = G + P are computed from the stored
draws of (beta, tau2, w) conditionally on w. Holdout validation reports
RMSPE, interval coverage, bias and R^2.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from dnngp.errors import PredictionError
from dnngp.mcmc import ModelSpec, PosteriorSamples

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))

@dataclass
class FitMetrics:
    p_d: float
    dic: float
    g: float
    p: float
    d: float
    rmspe: Optional[float] = None
    coverage95: Optional[float] = None

    def to_dict(self) -> Dict[str, Optional[float]]:
        return {"pD": self.p_d, "DIC": self.dic, "G": self.g, "P": self.p, "D": self.d,
                "RMSPE": self.rmspe, "coverage95": self.coverage95}

def _require_draws(samples: PosteriorSamples) -> None:
    if len(samples) < 2:
        raise PredictionError(f"need at least 2 posterior draws, got {len(samples)}")

def observed_means(samples: PosteriorSamples, spec: ModelSpec) -> np.ndarray:
    """(n_draws, n_obs) conditional means x'beta + w at the observed points."""
    mu = samples.beta @ spec.x.T
    if spec.spatial:
        mu = mu + samples.w_at(spec.observed)
    return mu

def deviance(y: np.ndarray, mu: np.ndarray, tau2) -> np.ndarray:
    """-2 log N(y | mu, tau2) summed over observations (last axis)."""
    tau2 = np.asarray(tau2, dtype=float)
    if tau2.ndim == 1:
        tau2 = tau2[:, None]
    resid = y - mu
    return np.sum(LOG_2PI + np.log(tau2) + resid * resid / tau2, axis=-1)

def dic(samples: PosteriorSamples, spec: ModelSpec) -> Tuple[float, float]:
    """(pD, DIC) with the plug-in deviance at the posterior means of beta, tau2 and w."""
    _require_draws(samples)
    mu = observed_means(samples, spec)
    d_bar = float(np.mean(deviance(spec.y, mu, samples.tau2)))
    d_hat = float(deviance(spec.y, mu.mean(axis=0), np.mean(samples.tau2)))
    p_d = d_bar - d_hat
    return p_d, d_bar + p_d

def predictive_loss(
    samples: PosteriorSamples,
    spec: ModelSpec,
    method: str = "rao_blackwell",
    seed: int = 0
) -> Tuple[float, float, float]:
    """(G, P, D) for replicates y_rep ~ N(x'beta + w, tau2) at the observed points.

    The default integrates the replicate noise analytically, so the result is
    a deterministic function of the stored draws. method="simulate" draws one
    replicate per stored draw instead.
    """
    _require_draws(samples)
    mu = observed_means(samples, spec)
    if method == "rao_blackwell":
        rep_mean = mu.mean(axis=0)
        rep_var = float(np.mean(samples.tau2)) + mu.var(axis=0)
    elif method == "simulate":
        rng = np.random.default_rng(seed)
        y_rep = mu + np.sqrt(samples.tau2)[:, None] * rng.standard_normal(mu.shape)
        rep_mean = y_rep.mean(axis=0)
        rep_var = y_rep.var(axis=0)
    else:
        raise ValueError(f"unknown predictive-loss method {method!r}")
    g = float(np.sum((spec.y - rep_mean) ** 2))
    p = float(np.sum(rep_var))
    return g, p, g + p

def fit_metrics(samples: PosteriorSamples, spec: ModelSpec) -> FitMetrics:
    p_d, dic_value = dic(samples, spec)
    g, p, d = predictive_loss(samples, spec)
    logger.info(f"Fit metrics: pD={p_d:.2f}, DIC={dic_value:.2f}, G={g:.2f}, P={p:.2f}, D={d:.2f}")
    return FitMetrics(p_d=p_d, dic=dic_value, g=g, p=p, d=d)

def _paired(predicted, truth) -> Tuple[np.ndarray, np.ndarray]:
    predicted = np.asarray(predicted, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if predicted.shape != truth.shape:
        raise ValueError(f"{predicted.shape[0]} predictions for {truth.shape[0]} truths")
    if predicted.size == 0:
        raise ValueError("need at least one prediction")
    return predicted, truth

def rmspe(predicted, truth) -> float:
    predicted, truth = _paired(predicted, truth)
    return float(np.sqrt(np.mean((predicted - truth) ** 2)))

def bias(predicted, truth) -> float:
    predicted, truth = _paired(predicted, truth)
    return float(np.mean(predicted - truth))

def r_squared(predicted, truth) -> float:
    predicted, truth = _paired(predicted, truth)
    total = np.sum((truth - truth.mean()) ** 2)
    if total == 0:
        return float("nan")
    return float(1.0 - np.sum((truth - predicted) ** 2) / total)

def ci_coverage(intervals, truth, level: float = 0.95) -> float:
    """Percent of truth values inside the closed intervals (n, 2)."""
    intervals = np.atleast_2d(np.asarray(intervals, dtype=float))
    truth = np.asarray(truth, dtype=float).ravel()
    if intervals.shape != (truth.shape[0], 2):
        raise ValueError(f"intervals have shape {intervals.shape}, expected ({truth.shape[0]}, 2)")
    if np.any(intervals[:, 0] > intervals[:, 1]):
        raise ValueError("interval lower bounds exceed upper bounds")
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    inside = (intervals[:, 0] <= truth) & (truth <= intervals[:, 1])
    return float(100.0 * inside.mean())

def validation_report(median, intervals, truth, level: float = 0.95) -> Dict[str, float]:
    """RMSPE, coverage, bias and R^2 of holdout predictions."""
    report = {
        "n": int(np.asarray(truth).size),
        "rmspe": rmspe(median, truth),
        f"coverage{int(round(100 * level))}": ci_coverage(intervals, truth, level),
        "bias": bias(median, truth),
        "r2": r_squared(median, truth)
    }
    logger.info(f"Validation: {report}")
    return report
