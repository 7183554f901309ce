"""
Prior construction: theta means/variances and the eta mean elicited from a survival curve.

The eta mean follows mu_l = log(-log(S(s_l) / S(s_{l-1}))) with S(s_0) = 1, which makes
the prior-mean step CDF reproduce 1 - S at every knot.
"""

import logging
from typing import Optional, Sequence

import numpy as np

from promocure.core.dataset import CurrentStatusDataset, npmle_survival
from promocure.core.errors import ConfigValidationError, DataValidationError, DimensionError
from promocure.core.gompertz import gompertz_survival
from promocure.core.model_core import Ar1Covariance, DenseCovariance, PriorSpec
from promocure.models.schemas import Ar1Spec, GompertzParams, PriorConfig

logger = logging.getLogger(__name__)

# smallest survival value and relative step used when an estimated curve is made strictly decreasing
SURVIVAL_FLOOR = 1e-6
MIN_DECREASE = 1e-3


def elicit_mu(survival_at_knots: Sequence[float]) -> np.ndarray:
    """mu_l = log(-log(S(s_l) / S(s_{l-1}))), S(s_0) = 1"""
    survival = np.asarray(survival_at_knots, dtype=float).ravel()
    if survival.size == 0:
        raise DataValidationError("need survival values at one knot at least")
    if not np.all(np.isfinite(survival)) or np.any(survival <= 0) or np.any(survival > 1):
        raise DataValidationError("survival values must lie in (0, 1]")
    ratio = survival / np.concatenate([[1.0], survival[:-1]])
    bad = np.flatnonzero(ratio >= 1.0)
    if bad.size:
        raise DataValidationError(
            f"survival must decrease strictly at every knot; knot {bad[0] + 1} has ratio {ratio[bad[0]]:.6g}"
        )
    return np.log(-np.log(ratio))


def elicit_mu_from_cdf(cdf_at_knots: Sequence[float]) -> np.ndarray:
    cdf = np.asarray(cdf_at_knots, dtype=float)
    if np.any(cdf < 0) or np.any(cdf >= 1):
        raise DataValidationError("baseline CDF values must lie in [0, 1)")
    return elicit_mu(1.0 - cdf)


def baseline_cdf_from_survival(survival: Sequence[float], theta0: float) -> np.ndarray:
    """F(s_l) = -log S_pop(s_l | X = 0) / e^{theta0}"""
    survival = np.asarray(survival, dtype=float)
    if np.any(survival <= 0) or np.any(survival > 1):
        raise DataValidationError("survival estimates must lie in (0, 1]")
    cdf = -np.log(survival) / np.exp(theta0)
    if np.any(cdf >= 1):
        raise DataValidationError(
            f"survival estimates imply a baseline CDF >= 1 for theta0 = {theta0}; "
            "the survival curve falls below the cure fraction exp(-e^theta0)"
        )
    return cdf


def strictly_decreasing(survival: Sequence[float]) -> np.ndarray:
    """Floor zeros and nudge flat stretches so consecutive ratios stay below one"""
    values = np.clip(np.asarray(survival, dtype=float), SURVIVAL_FLOOR, 1.0)
    adjusted = values.copy()
    previous = 1.0
    for l, value in enumerate(adjusted):
        adjusted[l] = min(value, previous * (1.0 - MIN_DECREASE))
        previous = adjusted[l]
    changed = int(np.sum(adjusted != np.asarray(survival, dtype=float)))
    if changed:
        logger.warning("adjusted %d survival values to keep the curve strictly decreasing", changed)
    return adjusted


def _eta_covariance(covariance, n0: int):
    if isinstance(covariance, Ar1Spec):
        return Ar1Covariance(n0, covariance.rho, covariance.scale)
    matrix = np.asarray(covariance, dtype=float)
    if matrix.shape != (n0, n0):
        raise DimensionError(f"explicit eta covariance must be {n0}x{n0}, got {matrix.shape}")
    return DenseCovariance(matrix)


def _eta_mean(config: PriorConfig, data: CurrentStatusDataset, gompertz: Optional[GompertzParams]) -> np.ndarray:
    source = config.eta.mean
    knots = data.grid.knots
    if not isinstance(source, str):
        mu = np.asarray(source, dtype=float)
        if mu.size != data.grid.n0:
            raise DimensionError(f"eta mean has {mu.size} entries, grid has {data.grid.n0} knots")
        return mu
    if source == "npmle":
        estimate = npmle_survival(data)
        return elicit_mu(strictly_decreasing(estimate.survival))
    if source == "gompertz":
        law = config.eta.gompertz or gompertz
        if law is None:
            raise ConfigValidationError(
                "eta mean source 'gompertz' needs the Gompertz law", {"prior.eta.gompertz": "field required"}
            )
        return elicit_mu(gompertz_survival(law, knots))
    # baseline_survival
    survival = np.asarray(config.eta.survival, dtype=float)
    if survival.size != data.grid.n0:
        raise DimensionError(f"eta.survival has {survival.size} entries, grid has {data.grid.n0} knots")
    cdf = baseline_cdf_from_survival(survival, config.theta_mean[0])
    return elicit_mu(strictly_decreasing(1.0 - cdf))


def build_prior(
    config: PriorConfig,
    data: CurrentStatusDataset,
    gompertz: Optional[GompertzParams] = None,
) -> PriorSpec:
    """PriorSpec for ``data`` from a validated prior config"""
    if len(config.theta_mean) != data.n_theta:
        raise DimensionError(
            f"prior has {len(config.theta_mean)} theta entries, dataset needs {data.n_theta}"
        )
    mu = _eta_mean(config, data, gompertz)
    prior = PriorSpec(
        tau=np.asarray(config.theta_mean, dtype=float),
        sigma_theta_diag=np.asarray(config.theta_sd, dtype=float) ** 2,
        mu=mu,
        eta_cov=_eta_covariance(config.eta.covariance, data.grid.n0),
    )
    source = config.eta.mean if isinstance(config.eta.mean, str) else "explicit"
    logger.debug("built prior: %d theta, %d eta (mean from %s)", prior.n_theta, prior.n0, source)
    return prior
