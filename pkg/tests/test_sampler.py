"""
Tests for the posterior mode search, proposal setup and the adaptive MH chain
"""

from unittest.mock import patch

import numpy as np
import pytest

from promocure.core.dataset import CurrentStatusDataset, build_grid
from promocure.core.diagnostics import ess
from promocure.core.errors import DataValidationError, NumericalError
from promocure.core.model_core import DenseCovariance, PosteriorTarget, PriorSpec, log_posterior
from promocure.core.sampler import (
    ChainState,
    PosteriorChain,
    adapt_covariance,
    export_chain,
    find_mode,
    hessian,
    initial_proposal_cov,
    map_estimate,
    mh_step,
    observed_information,
    parameter_names,
    pool_chains,
    prepare_start,
    read_chain,
    run_chain,
    run_chains,
)
from promocure.models.schemas import SamplerConfig


@pytest.fixture
def short_config():
    return SamplerConfig(iterations=30, burn_in=10, thin=2, adapt_interval=5, seed=42)


@pytest.fixture
def unit_prior_target():
    """Empty dataset, standard normal prior on (theta_0, theta_1, eta_1..eta_3)"""
    data = CurrentStatusDataset.empty(build_grid([1.0, 2.0, 3.0]), n_covariates=1)
    prior = PriorSpec(np.zeros(2), np.ones(2), np.zeros(3), DenseCovariance(np.eye(3)))
    return data, prior


class TestMode:
    """Posterior mode and curvature"""

    def test_prior_only_mode_is_prior_mean(self):
        data = CurrentStatusDataset.empty(build_grid([1.0]), n_covariates=0)
        prior = PriorSpec([0.4], [2.0], [-0.3], DenseCovariance([[0.5]]))
        mode = map_estimate(data, prior)
        assert mode.theta == pytest.approx([0.4], abs=1e-3)
        assert mode.eta == pytest.approx([-0.3], abs=1e-3)

    def test_mode_improves_on_start(self, toy_data, toy_prior):
        target = PosteriorTarget(toy_data, toy_prior)
        mode = find_mode(target)
        assert target(mode) >= target(target.prior_mode)

    def test_hessian_of_quadratic(self):
        A = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 3.0]])
        H = hessian(lambda x: -0.5 * x @ A @ x, np.array([0.3, -0.2, 1.0]))
        assert H == pytest.approx(-A, abs=1e-5)

    def test_identity_information(self, unit_prior_target):
        data, prior = unit_prior_target
        info = observed_information(data, prior, prior.mode)
        assert info == pytest.approx(np.eye(5), abs=1e-5)


class TestProposal:
    """Initial proposal and covariance adaptation"""

    def test_inverse_of_diagonal(self):
        assert initial_proposal_cov(np.diag([4.0, 1.0])) == pytest.approx(np.diag([0.25, 1.0]))

    def test_singular_information_gets_ridge(self):
        cov = initial_proposal_cov(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert np.all(np.isfinite(cov))
        assert np.all(np.linalg.eigvalsh(cov) > 0)

    def test_non_finite_information(self):
        with pytest.raises(NumericalError):
            initial_proposal_cov(np.array([[np.nan, 0.0], [0.0, 1.0]]))

    def test_short_history_keeps_current(self):
        config = SamplerConfig(iterations=100, burn_in=10)
        current = np.eye(3)
        assert adapt_covariance(np.zeros((4, 3)), current, config) is current

    def test_adapted_covariance(self, rng):
        config = SamplerConfig(iterations=1000, burn_in=500, adapt_fraction=0.5)
        history = rng.normal(size=(100, 2)) @ np.array([[1.0, 0.0], [0.6, 0.5]])
        expected = (2.38 ** 2 / 2) * np.cov(history[-50:], rowvar=False) + 1e-6 * np.eye(2)
        assert adapt_covariance(history, np.eye(2), config) == pytest.approx(expected)

    def test_constant_history_stays_positive_definite(self):
        config = SamplerConfig(iterations=1000, burn_in=500)
        cov = adapt_covariance(np.ones((50, 2)), np.eye(2), config)
        assert cov == pytest.approx(1e-6 * np.eye(2))


class TestKernel:
    """Single Metropolis-Hastings updates"""

    def test_replay_from_same_generator(self):
        def log_density(x):
            return -0.5 * float(x @ x)

        cov = np.array([[0.5, 0.1], [0.1, 0.3]])
        state = ChainState.start(np.array([0.2, -0.1]), log_density, cov, np.random.default_rng(7))
        replay = np.random.default_rng(7)
        L = np.linalg.cholesky(cov)
        for _ in range(50):
            before = state.position.copy()
            z = replay.standard_normal(2)
            log_u = np.log(replay.random())
            proposal = before + L @ z
            mh_step(state, log_density)
            if log_u <= log_density(proposal) - log_density(before):
                assert state.position == pytest.approx(proposal)
            else:
                assert np.array_equal(state.position, before)
        assert state.iteration == 50

    def test_non_finite_proposals_rejected(self):
        calls = iter([0.0] + [-np.inf] * 20)
        state = ChainState.start(np.zeros(2), lambda x: next(calls), np.eye(2), np.random.default_rng(1))
        for _ in range(20):
            mh_step(state, lambda x: next(calls))
        assert state.accept_count == 0
        assert np.array_equal(state.position, np.zeros(2))

    def test_cached_log_posterior_matches_recomputed(self, toy_data, toy_prior, rng):
        target = PosteriorTarget(toy_data, toy_prior)
        state = ChainState.start(target.prior_mode, target, 0.05 * np.eye(target.dim), np.random.default_rng(5))
        checkpoints = set(rng.choice(300, size=25, replace=False).tolist())
        for t in range(300):
            mh_step(state, target)
            if t in checkpoints:
                expected = log_posterior(state.current(target.n_theta), toy_data, toy_prior)
                assert state.log_post == pytest.approx(expected, rel=1e-12, abs=1e-12)
        assert state.accept_count > 0

    def test_bad_proposal_covariance(self):
        with pytest.raises(NumericalError):
            ChainState.start(np.zeros(2), lambda x: 0.0, np.array([[1.0, 2.0], [2.0, 1.0]]), np.random.default_rng(1))


class TestChain:
    """Full chains"""

    def test_retained_count(self, toy_data, toy_prior, short_config):
        chain = run_chain(toy_data, toy_prior, short_config)
        assert short_config.retained == 10
        assert chain.m0 == 10
        assert chain.draws.shape == (10, toy_data.n_theta + toy_data.grid.n0)
        assert chain.names == ["theta_0", "theta_1", "eta_1", "eta_2", "eta_3"]
        assert 0.0 <= chain.acceptance_rate <= 1.0

    def test_deterministic(self, toy_data, toy_prior, short_config):
        first = run_chain(toy_data, toy_prior, short_config)
        second = run_chain(toy_data, toy_prior, short_config)
        assert np.array_equal(first.draws, second.draws)
        assert first.accept_count == second.accept_count

    def test_chain_ids_differ(self, toy_data, toy_prior, short_config):
        first = run_chain(toy_data, toy_prior, short_config, chain_id=0)
        second = run_chain(toy_data, toy_prior, short_config, chain_id=1)
        assert not np.array_equal(first.draws, second.draws)

    def test_single_chain_run_matches(self, toy_data, toy_prior, short_config):
        chains = run_chains(toy_data, toy_prior, short_config)
        assert len(chains) == 1
        assert np.array_equal(chains[0].draws, run_chain(toy_data, toy_prior, short_config).draws)

    def test_pool(self, toy_data, toy_prior):
        config = SamplerConfig(iterations=30, burn_in=10, thin=2, seed=3, n_chains=2)
        chains = run_chains(toy_data, toy_prior, config)
        pooled = pool_chains(chains)
        assert [c.chain_id for c in chains] == [0, 1]
        assert pooled.m0 == 20
        assert pooled.iterations == 60
        with pytest.raises(DataValidationError):
            pool_chains([])

    def test_proposal_frozen_after_burn_in(self, toy_data, toy_prior, short_config):
        refreshed = []

        def recording(history, current, config):
            cov = adapt_covariance(history, current, config)
            refreshed.append((history.shape[0], cov))
            return cov

        with patch("promocure.core.sampler.adapt_covariance", side_effect=recording):
            chain = run_chain(toy_data, toy_prior, short_config)
        assert [rows for rows, _ in refreshed] == [5, 10]
        assert np.array_equal(chain.proposal_cov, refreshed[-1][1])

    def test_non_adaptive_keeps_initial_proposal(self, toy_data, toy_prior):
        config = SamplerConfig(iterations=30, burn_in=10, thin=2, adapt_interval=5, seed=42, adapt=False)
        target = PosteriorTarget(toy_data, toy_prior)
        start = prepare_start(target)
        with patch("promocure.core.sampler.adapt_covariance") as adapt:
            chain = run_chain(toy_data, toy_prior, config, start=start)
        adapt.assert_not_called()
        assert np.array_equal(chain.proposal_cov, start.proposal_cov)

    @pytest.mark.slow
    def test_fixed_kernel_standard_gaussian(self):
        # empty data and a N(0, I) prior give a 2-D standard Gaussian target
        data = CurrentStatusDataset.empty(build_grid([1.0]), n_covariates=0)
        prior = PriorSpec([0.0], [1.0], [0.0], DenseCovariance([[1.0]]))
        config = SamplerConfig(iterations=61000, burn_in=1000, thin=10, seed=2024, adapt=False)
        chain = run_chain(data, prior, config)
        assert chain.m0 == 6000
        for column in chain.draws.T:
            n_eff = ess(column)
            assert abs(column.mean()) < 4.0 * np.sqrt(1.0 / n_eff)
            assert abs(column.var(ddof=1) - 1.0) < 4.0 * np.sqrt(2.0 / n_eff)
        assert 0.2 < chain.acceptance_rate < 0.8

    @pytest.mark.slow
    def test_prior_recovery_without_data(self):
        data = CurrentStatusDataset.empty(build_grid([1.0]), n_covariates=0)
        prior = PriorSpec([0.0], [1.0], [0.0], DenseCovariance([[1.0]]))
        config = SamplerConfig(iterations=22000, burn_in=2000, thin=2, seed=11)
        chain = run_chain(data, prior, config)
        assert chain.draws.mean(axis=0) == pytest.approx([0.0, 0.0], abs=0.1)
        assert chain.draws.var(axis=0) == pytest.approx([1.0, 1.0], abs=0.15)
        assert 0.2 < chain.acceptance_rate < 0.8


class TestChainFiles:
    """Exported chain tables"""

    def test_round_trip(self, tmp_path, rng):
        chain = PosteriorChain(rng.normal(size=(6, 4)), n_theta=2, accept_count=3, iterations=12, chain_id=4)
        path = export_chain(chain, tmp_path / "chain.csv", ["config_hash: abc"])
        loaded = read_chain(path)
        assert np.array_equal(loaded.draws, chain.draws)
        assert loaded.n_theta == 2
        assert (loaded.chain_id, loaded.accept_count, loaded.iterations) == (4, 3, 12)

    def test_wrong_columns(self, tmp_path):
        path = tmp_path / "chain.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(DataValidationError):
            read_chain(path)

    def test_names(self):
        assert parameter_names(1, 2) == ["theta_0", "eta_1", "eta_2"]
