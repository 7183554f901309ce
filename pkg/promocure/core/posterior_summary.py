"""
Posterior summaries: means, percentile credible intervals and plug-in estimates of the
baseline CDF, population survival and cure fraction.
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from promocure.core.dataset import MonitoringGrid
from promocure.core.errors import DataValidationError, DimensionError
from promocure.core.model_core import cure_fraction, linear_predictor, step_cdf_at_knots
from promocure.core.sampler import PosteriorChain


@dataclass(frozen=True)
class CurveEstimate:
    """Plug-in survival curve and cure fraction for one covariate profile"""

    name: str
    x: np.ndarray
    survival: np.ndarray
    cure: float


@dataclass(frozen=True)
class FitSummary:
    theta_mean: np.ndarray
    eta_mean: np.ndarray
    theta_sd: np.ndarray
    eta_sd: np.ndarray
    theta_ci: np.ndarray  # (k+1, 2)
    eta_ci: np.ndarray  # (n0, 2)
    level: float
    knots: np.ndarray
    F_tilde: np.ndarray
    acceptance_rate: float
    m0: int
    names: Tuple[str, ...]
    curves: Dict[str, CurveEstimate] = field(default_factory=dict)
    F_functional: Optional[np.ndarray] = None


def _check_chain(chain: PosteriorChain) -> None:
    if chain.m0 == 0:
        raise DataValidationError("chain holds no retained draws")


def posterior_mean(chain: PosteriorChain) -> Tuple[np.ndarray, np.ndarray]:
    _check_chain(chain)
    mean = chain.draws.mean(axis=0)
    return mean[: chain.n_theta], mean[chain.n_theta :]


def posterior_sd(chain: PosteriorChain) -> Tuple[np.ndarray, np.ndarray]:
    """Sample standard deviation (ddof=1; zero for a single draw)"""
    _check_chain(chain)
    sd = chain.draws.std(axis=0, ddof=1) if chain.m0 > 1 else np.zeros(chain.draws.shape[1])
    return sd[: chain.n_theta], sd[chain.n_theta :]


def percentile_ci(draws: Sequence[float], level: float = 0.95) -> Tuple[float, float]:
    """Equal-tailed interval from linearly interpolated order statistics"""
    draws = np.asarray(draws, dtype=float).ravel()
    if draws.size == 0:
        raise DataValidationError("credible interval needs at least one draw")
    if not 0.0 < level < 1.0:
        raise DataValidationError(f"level must lie in (0, 1), got {level}")
    tail = (1.0 - level) / 2.0
    lower, upper = np.quantile(draws, [tail, 1.0 - tail], method="linear")
    return float(lower), float(upper)


def estimate_F(eta_mean: np.ndarray, grid: MonitoringGrid) -> np.ndarray:
    """F~_s at every knot with eta = posterior mean"""
    eta_mean = np.asarray(eta_mean, dtype=float)
    if eta_mean.size != grid.n0:
        raise DimensionError(f"eta has {eta_mean.size} entries, grid has {grid.n0} knots")
    return step_cdf_at_knots(eta_mean)


def estimate_survival_curve(
    theta_mean: np.ndarray, eta_mean: np.ndarray, grid: MonitoringGrid, x: np.ndarray
) -> np.ndarray:
    predictor = linear_predictor(theta_mean, x)
    return np.exp(-np.exp(predictor) * estimate_F(eta_mean, grid))


def estimate_cure(theta_mean: np.ndarray, x: np.ndarray) -> float:
    return cure_fraction(theta_mean, x)


def functional_mean_F(chain: PosteriorChain) -> np.ndarray:
    """Posterior mean of F_s(s_l), for comparison with the plug-in F~"""
    _check_chain(chain)
    return step_cdf_at_knots(chain.eta_draws).mean(axis=0)


def summarize(
    chain: PosteriorChain,
    grid: MonitoringGrid,
    level: float = 0.95,
    profiles: Optional[Mapping[str, Sequence[float]]] = None,
    functional_mean: bool = False,
) -> FitSummary:
    """Everything reported for a fit; ``profiles`` map a name to covariates without the intercept"""
    theta_mean, eta_mean = posterior_mean(chain)
    theta_sd, eta_sd = posterior_sd(chain)
    intervals = np.array([percentile_ci(column, level) for column in chain.draws.T])

    curves = {}
    for name, covariates in (profiles or {}).items():
        x = np.concatenate([[1.0], np.asarray(covariates, dtype=float)])
        curves[name] = CurveEstimate(
            name=name,
            x=x,
            survival=estimate_survival_curve(theta_mean, eta_mean, grid, x),
            cure=estimate_cure(theta_mean, x),
        )

    return FitSummary(
        theta_mean=theta_mean,
        eta_mean=eta_mean,
        theta_sd=theta_sd,
        eta_sd=eta_sd,
        theta_ci=intervals[: chain.n_theta],
        eta_ci=intervals[chain.n_theta :],
        level=level,
        knots=grid.knots,
        F_tilde=estimate_F(eta_mean, grid),
        acceptance_rate=chain.acceptance_rate,
        m0=chain.m0,
        names=tuple(chain.names),
        curves=curves,
        F_functional=functional_mean_F(chain) if functional_mean else None,
    )
