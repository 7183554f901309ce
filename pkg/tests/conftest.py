"""
Shared fixtures for the promocure test suite
"""

import numpy as np
import pytest

from promocure.core.dataset import CurrentStatusDataset
from promocure.core.model_core import Ar1Covariance, PriorSpec


@pytest.fixture
def toy_data():
    """Three subjects, one covariate, mixed status"""
    return CurrentStatusDataset.from_arrays(
        u=[0.5, 1.0, 2.0],
        delta=[1, 0, 1],
        covariates=[[0.0], [1.0], [0.5]],
    )


@pytest.fixture
def toy_prior(toy_data):
    return PriorSpec(
        tau=np.zeros(toy_data.n_theta),
        sigma_theta_diag=np.ones(toy_data.n_theta),
        mu=np.full(toy_data.grid.n0, -0.5),
        eta_cov=Ar1Covariance(toy_data.grid.n0, rho=0.3),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
