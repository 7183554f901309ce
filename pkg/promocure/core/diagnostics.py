"""
Convergence and mixing diagnostics: autocorrelation, effective sample size,
Gelman-Rubin PSRF, trace and histogram exports.
"""

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.signal import correlate

from promocure.core.errors import DataValidationError, DimensionError
from promocure.core.sampler import PosteriorChain
from promocure.utils.helpers import write_table

logger = logging.getLogger(__name__)

HISTOGRAM_BINS = 50
MIN_PSRF_LENGTH = 10
MIN_ESS_LENGTH = 10


@dataclass(frozen=True)
class AcfResult:
    values: np.ndarray
    zero_variance: bool = False


@dataclass(frozen=True)
class DiagnosticsReport:
    names: Tuple[str, ...]
    acf: np.ndarray  # (parameters, max_lag + 1), averaged over chains
    zero_variance: np.ndarray
    ess: np.ndarray
    psrf: Optional[np.ndarray]
    psrf_mode: str  # "chains", "split" or "none"
    acceptance_rate: float
    seconds_per_iteration: float
    n_chains: int
    m0: int


def _series(values: Sequence[float]) -> np.ndarray:
    return np.asarray(values, dtype=float).ravel()


def autocorrelation(series: Sequence[float], max_lag: int) -> AcfResult:
    """Biased sample autocorrelation at lags 0..max_lag"""
    x = _series(series)
    if max_lag < 1 or x.size <= max_lag:
        raise DataValidationError(f"need 1 <= max_lag < series length ({x.size}), got {max_lag}")
    if np.ptp(x) == 0:
        values = np.zeros(max_lag + 1)
        values[0] = 1.0
        return AcfResult(values, zero_variance=True)
    centered = x - x.mean()
    full = correlate(centered, centered, mode="full", method="fft")
    values = full[x.size - 1 : x.size + max_lag] / full[x.size - 1]
    values[0] = 1.0
    return AcfResult(values)


def initial_positive_sum(rho: Sequence[float]) -> float:
    """Sum of lag pairs rho_2k + rho_2k+1 up to, not including, the first negative pair"""
    rho = _series(rho)
    if rho.size % 2:
        rho = rho[:-1]
    pairs = rho[0::2] + rho[1::2]
    negative = np.flatnonzero(pairs < 0)
    kept = pairs[: negative[0]] if negative.size else pairs
    return float(np.sum(kept))


def ess(series: Sequence[float]) -> float:
    """m0 / (1 + 2 sum rho_t) truncated by the initial positive sequence of lag pairs.

    Capped at m0. A constant series returns m0 with a RuntimeWarning.
    """
    x = _series(series)
    m = x.size
    if m < MIN_ESS_LENGTH:
        raise DataValidationError(f"ESS needs at least {MIN_ESS_LENGTH} draws, got {m}")
    acf = autocorrelation(x, m - 1)
    if acf.zero_variance:
        warnings.warn("series is constant; ESS reported as its length", RuntimeWarning, stacklevel=2)
        return float(m)
    tau = -1.0 + 2.0 * initial_positive_sum(acf.values)
    return m / max(tau, 1.0)


def ess_chains(chains: Sequence[Sequence[float]]) -> float:
    """Total ESS over independent chains of one parameter"""
    return float(sum(ess(chain) for chain in chains))


def split_chains(chains: np.ndarray) -> np.ndarray:
    """Cut every chain in half: (m,) -> (2, m//2) and (c, m, ...) -> (2c, m//2, ...)"""
    chains = np.asarray(chains, dtype=float)
    if chains.ndim == 1:
        chains = chains[np.newaxis]
    half = chains.shape[1] // 2
    if half < 1:
        raise DataValidationError("chain too short to split")
    first = chains[:, :half]
    second = chains[:, chains.shape[1] - half :]
    return np.concatenate([first, second], axis=0)


def gelman_rubin(chains: np.ndarray) -> np.ndarray:
    """Classic PSRF sqrt(V/W), V = ((m-1)/m) W + B/m, per parameter.

    ``chains`` is (n_chains, m) for one parameter or (n_chains, m, p). Values below one,
    which the classic estimator produces when chains agree closely, are floored at one.
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim == 2:
        chains = chains[:, :, np.newaxis]
    if chains.ndim != 3:
        raise DimensionError("chains must be shaped (n_chains, m) or (n_chains, m, p)")
    n_chains, m, _ = chains.shape
    if n_chains < 2:
        raise DataValidationError("PSRF needs at least two chains; use split_chains for a single chain")
    if m < MIN_PSRF_LENGTH:
        raise DataValidationError(f"PSRF needs at least {MIN_PSRF_LENGTH} draws per chain, got {m}")

    W = chains.var(axis=1, ddof=1).mean(axis=0)
    B = m * chains.mean(axis=1).var(axis=0, ddof=1)
    V = ((m - 1) / m) * W + B / m
    with np.errstate(divide="ignore", invalid="ignore"):
        psrf = np.sqrt(V / W)
    psrf = np.where(W > 0, psrf, np.where(B > 0, np.inf, 1.0))
    floored = psrf < 1.0
    if np.any(floored):
        logger.debug("PSRF floored at 1 for %d parameter(s)", int(floored.sum()))
    return np.maximum(psrf, 1.0)


def export_trace(
    chain: PosteriorChain, path: Union[str, Path], header_lines: Sequence[str] = ()
) -> Tuple[Path, Path]:
    """Long-format trace (iteration, parameter, value) plus 50-bin histograms next to it"""
    path = Path(path)
    m0 = chain.m0
    trace = pd.DataFrame(
        {
            "iteration": np.tile(np.arange(1, m0 + 1), len(chain.names)),
            "parameter": np.repeat(chain.names, m0),
            "value": chain.draws.T.ravel(),
        }
    )
    rows = []
    for name, column in zip(chain.names, chain.draws.T):
        counts, edges = np.histogram(column, bins=HISTOGRAM_BINS)
        for count, left, right in zip(counts, edges[:-1], edges[1:]):
            rows.append({"parameter": name, "bin_left": left, "bin_right": right, "count": int(count)})
    hist_path = path.with_name(f"{path.stem}_hist{path.suffix or '.csv'}")
    return write_table(trace, path, header_lines), write_table(pd.DataFrame(rows), hist_path, header_lines)


def trace_to_draws(trace: pd.DataFrame, names: Sequence[str]) -> np.ndarray:
    """Inverse of the trace layout: (m0, parameters) in ``names`` order"""
    columns = [trace.loc[trace["parameter"] == name].sort_values("iteration")["value"].to_numpy() for name in names]
    return np.column_stack(columns)


def diagnose(chains: Sequence[PosteriorChain], max_lag: int = 50) -> DiagnosticsReport:
    """ACF, ESS and PSRF over one or more chains with the same layout and length.

    A single chain gets split-chain PSRF when it holds enough draws.
    """
    chains = list(chains)
    if not chains:
        raise DataValidationError("no chains to diagnose")
    first = chains[0]
    for chain in chains[1:]:
        if chain.draws.shape != first.draws.shape or chain.n_theta != first.n_theta:
            raise DimensionError("chains must share parameter layout and length")
    m0 = first.m0
    lag = min(max_lag, m0 - 1)
    if lag < max_lag:
        logger.warning("max_lag lowered to %d for chains of %d draws", lag, m0)

    stacked = np.stack([c.draws for c in chains])  # (chains, m0, p)
    p = stacked.shape[2]
    acf = np.zeros((p, lag + 1))
    zero_variance = np.zeros(p, dtype=bool)
    ess_values = np.zeros(p)
    for j in range(p):
        results: List[AcfResult] = [autocorrelation(stacked[c, :, j], lag) for c in range(len(chains))]
        acf[j] = np.mean([r.values for r in results], axis=0)
        zero_variance[j] = any(r.zero_variance for r in results)
        if m0 < MIN_ESS_LENGTH:
            ess_values[j] = np.nan
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            ess_values[j] = ess_chains(stacked[:, :, j])
    if zero_variance.any():
        logger.warning("%d parameter(s) have constant draws", int(zero_variance.sum()))

    psrf, mode = None, "none"
    if len(chains) >= 2 and m0 >= MIN_PSRF_LENGTH:
        psrf, mode = gelman_rubin(stacked), "chains"
    elif m0 // 2 >= MIN_PSRF_LENGTH:
        psrf, mode = gelman_rubin(split_chains(stacked)), "split"

    rates = [c.acceptance_rate for c in chains]
    timings = [c.seconds_per_iteration for c in chains]
    return DiagnosticsReport(
        names=tuple(first.names),
        acf=acf,
        zero_variance=zero_variance,
        ess=ess_values,
        psrf=psrf,
        psrf_mode=mode,
        acceptance_rate=float(np.mean(rates)),
        seconds_per_iteration=float(np.mean(timings)),
        n_chains=len(chains),
        m0=m0,
    )
