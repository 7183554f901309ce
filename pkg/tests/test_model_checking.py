"""
Tests for CPO, LPML, scaled CPO and DIC
"""

import math

import numpy as np
import pytest

from promocure.core.dataset import CurrentStatusDataset
from promocure.core.errors import DimensionError, NumericalError
from promocure.core.model_checking import (
    check_model,
    cpo,
    dic,
    log_interval_matrix,
    lpml,
    scaled_cpo,
)
from promocure.core.model_core import ModelParams, log_interval_probabilities, log_likelihood
from promocure.core.sampler import PosteriorChain

HALF_F = math.log(math.log(2.0))  # eta giving F(s_1) = 0.5 on a one-knot grid


@pytest.fixture
def censored_one():
    return CurrentStatusDataset.from_arrays([1.0], [0])


def draw_with_probability(p):
    """theta_0 such that a censored subject at F = 0.5 has P = p"""
    return [math.log(-2.0 * math.log(p)), HALF_F]


class TestCpo:
    def test_single_draw_equals_probability(self, censored_one):
        chain = PosteriorChain([draw_with_probability(0.4)], n_theta=1)
        assert cpo(chain, censored_one) == pytest.approx([0.4])

    def test_harmonic_mean(self, censored_one):
        chain = PosteriorChain([draw_with_probability(0.5), draw_with_probability(0.25)], n_theta=1)
        assert cpo(chain, censored_one) == pytest.approx([1.0 / 3.0])

    def test_identical_draws(self, toy_data):
        draw = [0.2, -0.3, -1.0, 0.0, 0.4]
        chain = PosteriorChain([draw] * 4, n_theta=2)
        expected = np.exp(log_interval_probabilities(ModelParams.from_vector(draw, 2), toy_data))
        assert cpo(chain, toy_data) == pytest.approx(expected)

    def test_matches_direct_harmonic_mean(self, toy_data, rng):
        draws = rng.normal(scale=0.5, size=(30, 5))
        chain = PosteriorChain(draws, n_theta=2)
        probs = np.array([np.exp(log_interval_probabilities(ModelParams.from_vector(d, 2), toy_data)) for d in draws])
        expected = 1.0 / np.mean(1.0 / probs, axis=0)
        assert cpo(chain, toy_data) == pytest.approx(expected, rel=1e-10)

    def test_layout_mismatch(self, toy_data):
        with pytest.raises(DimensionError):
            log_interval_matrix(PosteriorChain([[0.0, 0.0]], n_theta=1), toy_data)


class TestCriteria:
    def test_lpml(self):
        assert lpml(np.ones(4)) == 0.0
        assert lpml([0.5, 0.25]) == pytest.approx(-2.0794, abs=1e-4)

    def test_lpml_zero(self):
        with pytest.warns(RuntimeWarning):
            assert lpml([0.5, 0.0]) == -np.inf

    def test_scaled(self):
        assert scaled_cpo([0.2, 0.4]) == pytest.approx([0.5, 1.0])
        assert scaled_cpo([0.3, 0.3, 0.3]).tolist() == [1.0, 1.0, 1.0]
        with pytest.raises(NumericalError):
            scaled_cpo([0.0, 0.0])

    def test_dic_identical_draws(self, toy_data):
        chain = PosteriorChain([[0.2, -0.3, -1.0, 0.0, 0.4]] * 3, n_theta=2)
        result = dic(chain, toy_data)
        assert result.p_d == pytest.approx(0.0, abs=1e-9)
        assert result.dic == pytest.approx(result.dbar)
        assert result.dbar == pytest.approx(result.dhat)

    def test_dic_arithmetic(self, toy_data, rng):
        draws = rng.normal(scale=0.5, size=(2, 5))
        chain = PosteriorChain(draws, n_theta=2)
        deviances = [-2.0 * log_likelihood(ModelParams.from_vector(d, 2), toy_data) for d in draws]
        dhat = -2.0 * log_likelihood(ModelParams.from_vector(draws.mean(axis=0), 2), toy_data)
        result = dic(chain, toy_data)
        assert result.dbar == pytest.approx(np.mean(deviances))
        assert result.dhat == pytest.approx(dhat)
        assert result.dic == pytest.approx(2.0 * np.mean(deviances) - dhat)


class TestCheckModel:
    def test_report(self, toy_data, rng):
        chain = PosteriorChain(rng.normal(scale=0.5, size=(50, 5)), n_theta=2)
        report = check_model(chain, toy_data)
        assert report.lpml == pytest.approx(np.sum(np.log(report.cpo)))
        assert report.scaled_cpo.max() == pytest.approx(1.0)
        assert report.outlier_count == int(np.sum(report.scaled_cpo < 0.01))
        assert report.collapsed_count == 0
        assert report.dic == pytest.approx(dic(chain, toy_data).dic)

    def test_collapsed_cpo(self):
        data = CurrentStatusDataset.from_arrays([1.0, 1.0], [1, 0])
        chain = PosteriorChain([[0.0, -800.0], [0.0, -800.0]], n_theta=1)
        with pytest.warns(RuntimeWarning):
            report = check_model(chain, data)
        assert report.collapsed_count == 1
        assert report.cpo[0] == 0.0
        assert report.lpml == -np.inf
        assert math.isnan(report.dic)
        with pytest.raises(NumericalError, match="retained draw 0"):
            dic(chain, data)
