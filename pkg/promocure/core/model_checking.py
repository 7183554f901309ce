"""
Model adequacy and comparison: CPO, scaled CPO, LPML and DIC.

All quantities are built from the matrix of log interval probabilities
log P_i^(m) = log P(T_i in (L_i, R_i] | draw m), with (L_i, R_i] = (0, u_i] for
delta_i = 1 and (u_i, inf] for delta_i = 0. The deviance uses the constant c = 0.
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from promocure.core.dataset import CurrentStatusDataset
from promocure.core.errors import DimensionError, NumericalError
from promocure.core.model_core import ModelParams, log_interval_probabilities_batch, log_likelihood
from promocure.core.posterior_summary import posterior_mean
from promocure.core.sampler import PosteriorChain

logger = logging.getLogger(__name__)

OUTLIER_THRESHOLD = 0.01


@dataclass(frozen=True)
class DicResult:
    dbar: float
    dhat: float
    p_d: float
    dic: float


@dataclass(frozen=True)
class CheckReport:
    cpo: np.ndarray
    log_cpo: np.ndarray
    scaled_cpo: np.ndarray
    lpml: float
    dic: float
    dbar: float
    dhat: float
    p_d: float
    outlier_count: int
    collapsed_count: int


def log_interval_matrix(chain: PosteriorChain, data: CurrentStatusDataset) -> np.ndarray:
    """(m0, n) matrix of log P_i^(m)"""
    if chain.n_theta != data.n_theta or chain.n0 != data.grid.n0:
        raise DimensionError("chain parameter layout does not match the dataset")
    return log_interval_probabilities_batch(chain.theta_draws, chain.eta_draws, data)


def _log_cpo(log_p: np.ndarray) -> np.ndarray:
    m0 = log_p.shape[0]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        log_cpo = np.log(m0) - logsumexp(-log_p, axis=0)
    collapsed = np.flatnonzero(~np.isfinite(log_cpo))
    if collapsed.size:
        message = f"CPO collapsed to zero for {collapsed.size} observation(s), first index {collapsed[0]}"
        logger.warning(message)
        warnings.warn(message, RuntimeWarning, stacklevel=3)
        log_cpo[collapsed] = -np.inf
    return log_cpo


def log_cpo(chain: PosteriorChain, data: CurrentStatusDataset) -> np.ndarray:
    return _log_cpo(log_interval_matrix(chain, data))


def cpo(chain: PosteriorChain, data: CurrentStatusDataset) -> np.ndarray:
    """Harmonic mean of P_i^(m) over draws, evaluated in the log domain"""
    return np.exp(log_cpo(chain, data))


def lpml(cpo_values: np.ndarray) -> float:
    cpo_values = np.asarray(cpo_values, dtype=float)
    zeros = int(np.sum(cpo_values <= 0))
    if zeros:
        message = f"{zeros} CPO value(s) are zero; LPML is -inf"
        logger.warning(message)
        warnings.warn(message, RuntimeWarning, stacklevel=2)
        return float("-inf")
    return float(np.sum(np.log(cpo_values)))


def scaled_cpo(cpo_values: np.ndarray) -> np.ndarray:
    """CPO normalised to its maximum"""
    cpo_values = np.asarray(cpo_values, dtype=float)
    peak = np.max(cpo_values) if cpo_values.size else 0.0
    if not peak > 0:
        raise NumericalError("cannot scale CPO values: all are zero")
    return cpo_values / peak


def _dic_from(log_p: np.ndarray, chain: PosteriorChain, data: CurrentStatusDataset) -> DicResult:
    deviance = -2.0 * log_p.sum(axis=1)
    bad = np.flatnonzero(~np.isfinite(deviance))
    if bad.size:
        raise NumericalError(f"deviance is not finite at retained draw {bad[0]} (0-based)")
    theta_mean, eta_mean = posterior_mean(chain)
    dhat = -2.0 * log_likelihood(ModelParams(theta_mean, eta_mean), data)
    if not np.isfinite(dhat):
        raise NumericalError("deviance is not finite at the posterior mean")
    dbar = float(deviance.mean())
    return DicResult(dbar=dbar, dhat=float(dhat), p_d=dbar - dhat, dic=2.0 * dbar - dhat)


def dic(chain: PosteriorChain, data: CurrentStatusDataset) -> DicResult:
    """DIC = 2 * mean deviance - deviance at the posterior mean"""
    return _dic_from(log_interval_matrix(chain, data), chain, data)


def check_model(chain: PosteriorChain, data: CurrentStatusDataset) -> CheckReport:
    log_p = log_interval_matrix(chain, data)
    log_cpo_values = _log_cpo(log_p)
    cpo_values = np.exp(log_cpo_values)
    collapsed = int(np.sum(~np.isfinite(log_cpo_values)))
    scaled = scaled_cpo(cpo_values)
    try:
        criteria = _dic_from(log_p, chain, data)
    except NumericalError as exc:
        logger.warning("DIC not available: %s", exc)
        criteria = DicResult(dbar=float("nan"), dhat=float("nan"), p_d=float("nan"), dic=float("nan"))
    lpml_value = float(np.sum(log_cpo_values)) if not collapsed else lpml(cpo_values)
    outliers = int(np.sum(scaled < OUTLIER_THRESHOLD))
    logger.info("LPML %.4f, DIC %.4f (p_D %.3f), %d scaled CPO below %.2f", lpml_value, criteria.dic, criteria.p_d, outliers, OUTLIER_THRESHOLD)
    return CheckReport(
        cpo=cpo_values,
        log_cpo=log_cpo_values,
        scaled_cpo=scaled,
        lpml=lpml_value,
        dic=criteria.dic,
        dbar=criteria.dbar,
        dhat=criteria.dhat,
        p_d=criteria.p_d,
        outlier_count=outliers,
        collapsed_count=collapsed,
    )
