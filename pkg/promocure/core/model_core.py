"""
Promotion time cure model quantities.

Population survival is S_pop(t | x) = exp(-e^{theta'x} F(t)) with a baseline step CDF
F_s(t) = 1 - exp(-sum_{l: s_l <= t} e^{eta_l}) that jumps only at the monitoring grid.
All evaluations are pure functions of immutable inputs.
"""

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, toeplitz

from promocure.core.dataset import CurrentStatusDataset, MonitoringGrid, Observation
from promocure.core.errors import DataValidationError, DimensionError, NumericalError

LOG2 = np.log(2.0)
LOG_2PI = np.log(2.0 * np.pi)


def _vector(values, name: str) -> np.ndarray:
    values = np.array(values, dtype=float).ravel()
    if not np.all(np.isfinite(values)):
        raise DataValidationError(f"{name} must be finite")
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class ModelParams:
    """Joint parameter (theta, eta): regression coefficients and step-function parameters"""

    theta: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", _vector(self.theta, "theta"))
        object.__setattr__(self, "eta", _vector(self.eta, "eta"))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.theta, self.eta])

    @classmethod
    def from_vector(cls, vector: Sequence[float], n_theta: int) -> "ModelParams":
        vector = np.asarray(vector, dtype=float)
        return cls(vector[:n_theta], vector[n_theta:])

    def check_against(self, data: CurrentStatusDataset) -> None:
        if self.theta.size != data.n_theta:
            raise DimensionError(f"theta has {self.theta.size} entries, dataset needs {data.n_theta}")
        if self.eta.size != data.grid.n0:
            raise DimensionError(f"eta has {self.eta.size} entries, grid has {data.grid.n0} knots")


def ar1_covariance(n0: int, rho: float, scale: float = 1.0) -> np.ndarray:
    """scale * rho^|i-j|"""
    if n0 < 1:
        raise DimensionError("AR(1) covariance needs n0 >= 1")
    if not 0.0 < rho < 1.0:
        raise DataValidationError(f"rho must lie in (0, 1), got {rho}")
    if scale <= 0:
        raise DataValidationError(f"scale must be positive, got {scale}")
    return scale * toeplitz(rho ** np.arange(n0))


class Ar1Covariance:
    """scale * Sigma_n0(rho) with the closed-form tridiagonal inverse"""

    def __init__(self, n0: int, rho: float, scale: float = 1.0):
        ar1_covariance(n0, rho, scale)
        self.n0 = n0
        self.rho = float(rho)
        self.scale = float(scale)

    def matrix(self) -> np.ndarray:
        return ar1_covariance(self.n0, self.rho, self.scale)

    def log_det(self) -> float:
        return self.n0 * np.log(self.scale) + (self.n0 - 1) * np.log1p(-self.rho ** 2)

    def quad_form(self, d: np.ndarray) -> float:
        """d' Sigma^{-1} d without forming the inverse"""
        if self.n0 == 1:
            return float(d[0] ** 2 / self.scale)
        rho = self.rho
        total = d @ d + rho ** 2 * (d[1:-1] @ d[1:-1]) - 2.0 * rho * (d[:-1] @ d[1:])
        return float(total / ((1.0 - rho ** 2) * self.scale))


class DenseCovariance:
    """Explicit symmetric positive-definite covariance, Cholesky-factored once"""

    def __init__(self, matrix: Union[np.ndarray, Sequence[Sequence[float]]]):
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionError("covariance must be a square matrix")
        if not np.allclose(matrix, matrix.T, rtol=1e-10, atol=1e-12):
            raise NumericalError("covariance must be symmetric")
        try:
            self._factor = cho_factor(matrix, lower=True)
        except LinAlgError:
            raise NumericalError("covariance is not positive definite")
        self._matrix = matrix
        self.n0 = matrix.shape[0]

    def matrix(self) -> np.ndarray:
        return self._matrix.copy()

    def log_det(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self._factor[0]))))

    def quad_form(self, d: np.ndarray) -> float:
        return float(d @ cho_solve(self._factor, d))


EtaCovariance = Union[Ar1Covariance, DenseCovariance]


@dataclass(frozen=True)
class PriorSpec:
    """theta ~ N(tau, diag(sigma_theta_diag)), eta ~ N(mu, eta_cov), independent"""

    tau: np.ndarray
    sigma_theta_diag: np.ndarray
    mu: np.ndarray
    eta_cov: EtaCovariance

    def __post_init__(self):
        object.__setattr__(self, "tau", _vector(self.tau, "tau"))
        object.__setattr__(self, "sigma_theta_diag", _vector(self.sigma_theta_diag, "sigma_theta_diag"))
        object.__setattr__(self, "mu", _vector(self.mu, "mu"))
        if self.tau.size != self.sigma_theta_diag.size:
            raise DimensionError("tau and sigma_theta_diag must have the same length")
        if np.any(self.sigma_theta_diag <= 0):
            raise DataValidationError("prior variances must be positive")
        if self.eta_cov.n0 != self.mu.size:
            raise DimensionError("eta covariance does not match the length of mu")

    @property
    def n_theta(self) -> int:
        return int(self.tau.size)

    @property
    def n0(self) -> int:
        return int(self.mu.size)

    @property
    def mode(self) -> ModelParams:
        return ModelParams(self.tau, self.mu)


def linear_predictor(theta: np.ndarray, x: np.ndarray) -> Union[float, np.ndarray]:
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != theta.size:
        raise DimensionError(f"covariate vector has {x.shape[-1]} entries, theta has {theta.size}")
    return x @ theta


def log_cumulative_hazard(eta: np.ndarray) -> np.ndarray:
    """log sum_{l <= k} e^{eta_l} for k = 1..n0 (last axis)"""
    return np.logaddexp.accumulate(np.asarray(eta, dtype=float), axis=-1)


def step_cdf_at_knots(eta: np.ndarray) -> np.ndarray:
    """F_s(s_k) for every knot k, computed from the log cumulative hazard"""
    return -np.expm1(-np.exp(log_cumulative_hazard(eta)))


def step_cdf(eta: np.ndarray, grid: MonitoringGrid, t: float) -> float:
    """F_s(t) = 1 - prod_{l: s_l <= t} exp(-e^{eta_l})"""
    eta = np.asarray(eta, dtype=float)
    if eta.size != grid.n0:
        raise DimensionError(f"eta has {eta.size} entries, grid has {grid.n0} knots")
    k = grid.count_at_or_below(t)
    if k == 0:
        return 0.0
    return float(step_cdf_at_knots(eta[:k])[-1])


def pop_survival(params: ModelParams, grid: MonitoringGrid, x: np.ndarray, t: float) -> float:
    """exp(-e^{theta'x} F_s(t))"""
    predictor = linear_predictor(params.theta, x)
    return float(np.exp(-np.exp(predictor) * step_cdf(params.eta, grid, t)))


def cure_fraction(theta: np.ndarray, x: np.ndarray) -> float:
    """exp(-e^{theta'x}), the limit of S_pop as t grows"""
    return float(np.exp(-np.exp(linear_predictor(theta, x))))


def log1mexp(z: np.ndarray) -> np.ndarray:
    """log(1 - exp(-z)) for z >= 0, split at z = log 2 for accuracy"""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(z <= LOG2, np.log(-np.expm1(-np.minimum(z, LOG2))), np.log1p(-np.exp(-np.maximum(z, LOG2))))


def interval_probability(params: ModelParams, grid: MonitoringGrid, obs: Observation) -> float:
    """P(T in (0, u]) when delta = 1, P(T in (u, inf]) when delta = 0"""
    survival = pop_survival(params, grid, obs.x, obs.u)
    return 1.0 - survival if obs.delta == 1 else survival


def _hazard_scale(theta: np.ndarray, eta: np.ndarray, data: CurrentStatusDataset) -> np.ndarray:
    """z_i = e^{theta'x_i} F_s(u_i) for each observation (broadcast over leading draw axes)"""
    cdf = step_cdf_at_knots(eta)[..., data.knot_index - 1]
    with np.errstate(over="ignore"):
        return np.exp(theta @ data.X.T) * cdf


def log_interval_probabilities(params: ModelParams, data: CurrentStatusDataset) -> np.ndarray:
    """log P_i for every observation"""
    params.check_against(data)
    return log_interval_probabilities_batch(params.theta, params.eta, data)


def log_interval_probabilities_batch(theta: np.ndarray, eta: np.ndarray, data: CurrentStatusDataset) -> np.ndarray:
    """log P_i for draws stacked along the leading axis: (m, k+1), (m, n0) -> (m, n)"""
    z = _hazard_scale(np.asarray(theta, dtype=float), np.asarray(eta, dtype=float), data)
    return np.where(data.delta == 1, log1mexp(z), -z)


def log_likelihood(params: ModelParams, data: CurrentStatusDataset) -> float:
    """sum_i (1 - delta_i)(-z_i) + delta_i log(1 - e^{-z_i})"""
    if data.n == 0:
        params.check_against(data)
        return 0.0
    return float(np.sum(log_interval_probabilities(params, data)))


def _log_normal(d: np.ndarray, log_det: float, quad: float) -> float:
    return -0.5 * (d.size * LOG_2PI + log_det + quad)


def log_prior(params: ModelParams, prior: PriorSpec) -> float:
    """log N(theta; tau, Sigma_theta) + log N(eta; mu, Sigma_eta), normalizing constants included"""
    if params.theta.size != prior.n_theta or params.eta.size != prior.n0:
        raise DimensionError("parameter sizes do not match the prior")
    d_theta = params.theta - prior.tau
    theta_part = _log_normal(
        d_theta,
        float(np.sum(np.log(prior.sigma_theta_diag))),
        float(np.sum(d_theta ** 2 / prior.sigma_theta_diag)),
    )
    d_eta = params.eta - prior.mu
    eta_part = _log_normal(d_eta, prior.eta_cov.log_det(), prior.eta_cov.quad_form(d_eta))
    return theta_part + eta_part


def log_posterior(params: ModelParams, data: CurrentStatusDataset, prior: PriorSpec) -> float:
    """Unnormalized log posterior: log prior + log likelihood"""
    return log_prior(params, prior) + log_likelihood(params, data)


class PosteriorTarget:
    """Log posterior as a function of the flat vector (theta_0..theta_k, eta_1..eta_n0)"""

    def __init__(self, data: CurrentStatusDataset, prior: PriorSpec):
        if prior.n_theta != data.n_theta:
            raise DimensionError(f"prior covers {prior.n_theta} coefficients, dataset has {data.n_theta}")
        if prior.n0 != data.grid.n0:
            raise DimensionError(f"prior covers {prior.n0} knots, grid has {data.grid.n0}")
        self.data = data
        self.prior = prior
        self.n_theta = data.n_theta
        self.dim = data.n_theta + data.grid.n0

    def params(self, vector: np.ndarray) -> ModelParams:
        return ModelParams.from_vector(vector, self.n_theta)

    @property
    def prior_mode(self) -> np.ndarray:
        return self.prior.mode.vector

    def __call__(self, vector: np.ndarray) -> float:
        vector = np.asarray(vector, dtype=float)
        if not np.all(np.isfinite(vector)):
            return -np.inf
        return log_posterior(self.params(vector), self.data, self.prior)
