"""
Adaptive random-walk Metropolis-Hastings over (theta, eta).

A chain starts at the posterior mode, proposes from a Gaussian whose covariance is the
inverse observed information there, refreshes that covariance from its own history every
``adapt_interval`` iterations of the burn-in and keeps it fixed afterwards.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, cho_factor, cho_solve, cholesky
from scipy.optimize import minimize

from promocure.core.dataset import CurrentStatusDataset
from promocure.core.errors import DataValidationError, DimensionError, MapConvergenceError, NumericalError
from promocure.core.model_core import ModelParams, PosteriorTarget, PriorSpec
from promocure.core.monitoring import Stopwatch, monitor_performance
from promocure.core.orchestrator import run_ordered
from promocure.models.schemas import SamplerConfig
from promocure.utils.helpers import read_comment_header, read_table, stream_rng, write_table

logger = logging.getLogger(__name__)

LogDensity = Callable[[np.ndarray], float]

PROPOSAL_SCALE = 2.38 ** 2
ADAPT_JITTER = 1e-6
HESSIAN_STEP = 1e-4
MAP_EVALS_PER_DIM = 2000
MAP_FATOL = 1e-8
MAP_XATOL = 1e-6


def parameter_names(n_theta: int, n0: int) -> List[str]:
    return [f"theta_{j}" for j in range(n_theta)] + [f"eta_{l}" for l in range(1, n0 + 1)]


# -- posterior mode -----------------------------------------------------------------------


def _nelder_mead(target: LogDensity, start: np.ndarray, max_evals: int):
    def objective(vector: np.ndarray) -> float:
        value = target(vector)
        return -value if np.isfinite(value) else np.inf

    return minimize(
        objective,
        start,
        method="Nelder-Mead",
        options={
            "maxfev": max_evals,
            "maxiter": max_evals,
            "fatol": MAP_FATOL,
            "xatol": MAP_XATOL,
            "adaptive": True,
        },
    )


def find_mode(target: PosteriorTarget, init: Optional[np.ndarray] = None) -> np.ndarray:
    """Maximize the log posterior from ``init`` (prior mode by default).

    A failed search restarts once from the prior mode, or from the best point found when
    the search already started there. Never returns a point worse than the start.
    """
    prior_mode = target.prior_mode
    x0 = prior_mode if init is None else np.asarray(init, dtype=float)
    if x0.size != target.dim:
        raise DimensionError(f"initial point has {x0.size} entries, posterior has {target.dim}")
    f0 = target(x0)
    if not np.isfinite(f0):
        logger.warning("log posterior is not finite at the initial point; starting from the prior mode")
        x0, f0 = prior_mode, target(prior_mode)

    max_evals = MAP_EVALS_PER_DIM * target.dim
    best_x, best_f = x0, f0
    start = x0
    for attempt in (1, 2):
        result = _nelder_mead(target, start, max_evals)
        if np.isfinite(result.fun) and -result.fun >= best_f:
            best_x, best_f = np.asarray(result.x, dtype=float), -float(result.fun)
        if result.success:
            logger.info("posterior mode found after %d evaluations (log posterior %.6g)", result.nfev, best_f)
            return best_x
        logger.debug("mode search attempt %d stopped: %s", attempt, result.message)
        start = best_x if np.array_equal(start, prior_mode) else prior_mode

    raise MapConvergenceError(
        f"posterior mode search did not converge within {max_evals} evaluations", best_x, best_f
    )


def map_estimate(data: CurrentStatusDataset, prior: PriorSpec, init: Optional[ModelParams] = None) -> ModelParams:
    target = PosteriorTarget(data, prior)
    return target.params(find_mode(target, None if init is None else init.vector))


# -- curvature and the initial proposal ---------------------------------------------------


def hessian(fn: LogDensity, at: np.ndarray) -> np.ndarray:
    """Central-difference Hessian with per-coordinate step 1e-4 * (1 + |x_i|)"""
    x = np.asarray(at, dtype=float)
    d = x.size
    h = HESSIAN_STEP * (1.0 + np.abs(x))
    f0 = fn(x)
    H = np.empty((d, d))

    def shifted(i, si, j=None, sj=0.0):
        point = x.copy()
        point[i] += si * h[i]
        if j is not None:
            point[j] += sj * h[j]
        return fn(point)

    for i in range(d):
        H[i, i] = (shifted(i, 1.0) - 2.0 * f0 + shifted(i, -1.0)) / h[i] ** 2
        for j in range(i + 1, d):
            value = (
                shifted(i, 1.0, j, 1.0)
                - shifted(i, 1.0, j, -1.0)
                - shifted(i, -1.0, j, 1.0)
                + shifted(i, -1.0, j, -1.0)
            ) / (4.0 * h[i] * h[j])
            H[i, j] = H[j, i] = value
    return 0.5 * (H + H.T)


def _information(target: LogDensity, at: np.ndarray, names: Sequence[str]) -> np.ndarray:
    info = -hessian(target, at)
    bad = np.argwhere(~np.isfinite(info))
    if bad.size:
        i, j = bad[0]
        raise NumericalError(f"observed information entry ({names[i]}, {names[j]}) is not finite")
    return info


def observed_information(data: CurrentStatusDataset, prior: PriorSpec, at: ModelParams) -> np.ndarray:
    """Negative Hessian of the log posterior at ``at``"""
    target = PosteriorTarget(data, prior)
    return _information(target, at.vector, parameter_names(data.n_theta, data.grid.n0))


def _inverse(factor) -> np.ndarray:
    inverse = cho_solve(factor, np.eye(factor[0].shape[0]))
    return 0.5 * (inverse + inverse.T)


def initial_proposal_cov(info: np.ndarray) -> np.ndarray:
    """Inverse information, ridge-regularized until positive definite"""
    info = np.asarray(info, dtype=float)
    if info.ndim != 2 or info.shape[0] != info.shape[1]:
        raise DimensionError("information matrix must be square")
    if not np.all(np.isfinite(info)):
        raise NumericalError("information matrix has non-finite entries")
    info = 0.5 * (info + info.T)
    try:
        return _inverse(cho_factor(info, lower=True))
    except LinAlgError:
        pass

    ridge = ADAPT_JITTER * (np.max(np.abs(np.diag(info))) or 1.0)
    identity = np.eye(info.shape[0])
    while True:
        try:
            factor = cho_factor(info + ridge * identity, lower=True)
        except LinAlgError:
            ridge *= 2.0
            continue
        logger.warning("observed information is not positive definite; added ridge %.3g", ridge)
        return _inverse(factor)


@dataclass(frozen=True)
class ChainStart:
    """Shared starting point of every chain: mode, information and initial proposal"""

    mode: np.ndarray
    information: np.ndarray = field(repr=False)
    proposal_cov: np.ndarray = field(repr=False)


@monitor_performance("prepare_start")
def prepare_start(target: PosteriorTarget, init: Optional[ModelParams] = None) -> ChainStart:
    mode = find_mode(target, None if init is None else init.vector)
    info = _information(target, mode, parameter_names(target.n_theta, target.dim - target.n_theta))
    proposal = initial_proposal_cov(info)
    logger.info("initial proposal ready (dimension %d)", target.dim)
    return ChainStart(mode, info, proposal)


# -- Metropolis-Hastings kernel -----------------------------------------------------------


@dataclass
class ChainState:
    """Current position (flat theta/eta vector), its cached log posterior and the kernel"""

    position: np.ndarray
    log_post: float
    proposal_cov: np.ndarray
    rng: np.random.Generator = field(repr=False)
    accept_count: int = 0
    iteration: int = 0
    proposal_chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.set_proposal(self.proposal_cov)

    @classmethod
    def start(
        cls, position: np.ndarray, log_density: LogDensity, proposal_cov: np.ndarray, rng: np.random.Generator
    ) -> "ChainState":
        position = np.array(position, dtype=float)
        return cls(position, float(log_density(position)), proposal_cov, rng)

    def set_proposal(self, cov: np.ndarray) -> None:
        self.proposal_cov = np.asarray(cov, dtype=float)
        try:
            self.proposal_chol = cholesky(self.proposal_cov, lower=True)
        except LinAlgError:
            raise NumericalError("proposal covariance is not positive definite")

    def current(self, n_theta: int) -> ModelParams:
        return ModelParams.from_vector(self.position, n_theta)


def mh_step(state: ChainState, log_density: LogDensity) -> ChainState:
    """One random-walk Metropolis update of ``state`` in place.

    Draws z ~ N(0, I) and then u ~ U(0, 1) from the state's generator, proposes
    position + L z and accepts when log u <= log pi(proposal) - log pi(current).
    """
    z = state.rng.standard_normal(state.position.size)
    log_u = np.log(state.rng.random())
    proposal = state.position + state.proposal_chol @ z
    log_post = log_density(proposal)
    state.iteration += 1
    if np.isfinite(log_post) and log_u <= log_post - state.log_post:
        state.position = proposal
        state.log_post = float(log_post)
        state.accept_count += 1
    return state


def adapt_covariance(history: np.ndarray, current: np.ndarray, config: SamplerConfig) -> np.ndarray:
    """(2.38^2 / d) times the sample covariance of the latest ``adapt_fraction`` of history, plus 1e-6 I"""
    history = np.atleast_2d(np.asarray(history, dtype=float))
    m, d = history.shape
    if m < d + 2:
        return current
    window = max(int(np.ceil(config.adapt_fraction * m)), 2)
    sample_cov = np.atleast_2d(np.cov(history[-window:], rowvar=False))
    return (PROPOSAL_SCALE / d) * sample_cov + ADAPT_JITTER * np.eye(d)


# -- chains -------------------------------------------------------------------------------


@dataclass(frozen=True)
class PosteriorChain:
    """Retained draws (rows: theta_0..theta_k, eta_1..eta_n0) with acceptance bookkeeping"""

    draws: np.ndarray
    n_theta: int
    accept_count: int = 0
    iterations: int = 0
    map_point: Optional[ModelParams] = None
    config: Optional[SamplerConfig] = None
    chain_id: int = 0
    proposal_cov: Optional[np.ndarray] = field(default=None, repr=False)
    seconds_per_iteration: float = float("nan")

    def __post_init__(self):
        draws = np.atleast_2d(np.array(self.draws, dtype=float))
        if draws.shape[1] <= self.n_theta:
            raise DimensionError("draws must hold theta and at least one eta column")
        draws.setflags(write=False)
        object.__setattr__(self, "draws", draws)

    @property
    def m0(self) -> int:
        return int(self.draws.shape[0])

    @property
    def n0(self) -> int:
        return int(self.draws.shape[1] - self.n_theta)

    @property
    def theta_draws(self) -> np.ndarray:
        return self.draws[:, : self.n_theta]

    @property
    def eta_draws(self) -> np.ndarray:
        return self.draws[:, self.n_theta :]

    @property
    def names(self) -> List[str]:
        return parameter_names(self.n_theta, self.n0)

    @property
    def acceptance_rate(self) -> float:
        if self.iterations == 0:
            return float("nan")
        return self.accept_count / self.iterations


def _run_from(
    target: PosteriorTarget,
    config: SamplerConfig,
    start: ChainStart,
    chain_id: int,
    stream: Tuple[int, ...],
) -> PosteriorChain:
    rng = stream_rng(config.seed, *stream, chain_id)
    state = ChainState.start(start.mode, target, start.proposal_cov, rng)
    d = target.dim
    draws = np.empty((config.retained, d))
    history = np.empty((config.burn_in, d)) if config.adapt else None
    kept = 0

    with Stopwatch(f"chain {chain_id}", config.iterations, stage="chain") as watch:
        for t in range(1, config.iterations + 1):
            mh_step(state, target)
            if t <= config.burn_in:
                if history is not None:
                    history[t - 1] = state.position
                    if t % config.adapt_interval == 0:
                        state.set_proposal(adapt_covariance(history[:t], state.proposal_cov, config))
                        logger.debug("chain %d: proposal refreshed at iteration %d", chain_id, t)
                if t == config.burn_in:
                    logger.info("chain %d: burn-in finished, acceptance so far %.4f", chain_id, state.accept_count / t)
            elif (t - config.burn_in) % config.thin == 0:
                draws[kept] = state.position
                kept += 1

    chain = PosteriorChain(
        draws=draws,
        n_theta=target.n_theta,
        accept_count=state.accept_count,
        iterations=config.iterations,
        map_point=target.params(start.mode),
        config=config,
        chain_id=chain_id,
        proposal_cov=state.proposal_cov.copy(),
        seconds_per_iteration=watch.per_iteration,
    )
    logger.info(
        "chain %d finished: %d draws, acceptance %.4f, %.3g s/iteration",
        chain_id, chain.m0, chain.acceptance_rate, chain.seconds_per_iteration,
    )
    return chain


def run_chain(
    data: CurrentStatusDataset,
    prior: PriorSpec,
    config: SamplerConfig,
    chain_id: int = 0,
    start: Optional[ChainStart] = None,
    stream: Tuple[int, ...] = (),
) -> PosteriorChain:
    """Mode, proposal, then ``config.iterations`` MH steps; deterministic in (seed, stream, chain_id)"""
    target = PosteriorTarget(data, prior)
    if start is None:
        start = prepare_start(target)
    return _run_from(target, config, start, chain_id, stream)


def _chain_task(task) -> PosteriorChain:
    return _run_from(*task)


def run_chains(
    data: CurrentStatusDataset,
    prior: PriorSpec,
    config: SamplerConfig,
    workers: int = 1,
) -> List[PosteriorChain]:
    """``config.n_chains`` chains from one shared start, ordered by chain id"""
    target = PosteriorTarget(data, prior)
    start = prepare_start(target)
    tasks = [(target, config, start, chain_id, ()) for chain_id in range(config.n_chains)]
    return run_ordered(_chain_task, tasks, workers=workers, desc="chains")


def pool_chains(chains: Sequence[PosteriorChain]) -> PosteriorChain:
    """Stack the draws of several chains into one"""
    if not chains:
        raise DataValidationError("no chains to pool")
    if len(chains) == 1:
        return chains[0]
    first = chains[0]
    if any(c.n_theta != first.n_theta or c.draws.shape[1] != first.draws.shape[1] for c in chains):
        raise DimensionError("chains differ in parameter layout")
    return PosteriorChain(
        draws=np.vstack([c.draws for c in chains]),
        n_theta=first.n_theta,
        accept_count=sum(c.accept_count for c in chains),
        iterations=sum(c.iterations for c in chains),
        map_point=first.map_point,
        config=first.config,
        chain_id=first.chain_id,
        proposal_cov=first.proposal_cov,
        seconds_per_iteration=float(np.mean([c.seconds_per_iteration for c in chains])),
    )


# -- chain files --------------------------------------------------------------------------


def export_chain(chain: PosteriorChain, path: Union[str, Path], header_lines: Sequence[str] = ()) -> Path:
    """One row per retained draw, columns theta_0..theta_k, eta_1..eta_n0"""
    header = [
        *header_lines,
        f"chain_id: {chain.chain_id}",
        f"accept_count: {chain.accept_count}",
        f"iterations: {chain.iterations}",
    ]
    return write_table(pd.DataFrame(chain.draws, columns=chain.names), path, header)


def read_chain(path: Union[str, Path]) -> PosteriorChain:
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"chain file not found: {path}")
    frame = read_table(path)
    n_theta = sum(1 for c in frame.columns if str(c).startswith("theta_"))
    expected = parameter_names(n_theta, frame.shape[1] - n_theta)
    if n_theta == 0 or list(frame.columns) != expected:
        raise DataValidationError(f"{path} does not hold theta_0..theta_k, eta_1..eta_n0 columns")
    header = read_comment_header(path)
    return PosteriorChain(
        draws=frame.to_numpy(dtype=float),
        n_theta=n_theta,
        accept_count=int(header.get("accept_count", 0)),
        iterations=int(header.get("iterations", 0)),
        chain_id=int(header.get("chain_id", 0)),
    )
