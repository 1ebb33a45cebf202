# test_mc_oracle.py
import math

import numpy as np
import pytest

from superres_moments.demux_model import MomentData, demux_moments
from superres_moments.errors import DimensionMismatch, DomainError
from superres_moments.mc_oracle import McConfig, McEstimate, sample_counts
from superres_moments.noise import DarkCounts, sample_crosstalk
from superres_moments.scene import ALIGNED, Misalignment, ModeBasis, Scene


@pytest.fixture
def unequal_scene():
    return Scene(0.6, math.pi / 4, 1.5, gamma=0.3)


def _noisy_case():
    return Misalignment(0.1, math.pi / 3), sample_crosstalk(9, 0.01, [0, 0]), DarkCounts.uniform(0.2, 9)


class TestMcConfig:

    def test_batches(self):
        assert McConfig(20000).batches == 100
        assert McConfig(1500).batches == 15
        sizes = McConfig(1234).batch_sizes()
        assert len(sizes) == 12
        assert sum(sizes) == 1234
        assert max(sizes) - min(sizes) <= 1

    @pytest.mark.parametrize("kwargs", [{"samples": 999}, {"samples": 1500.5}, {"path": "gibbs"}])
    def test_domain(self, kwargs):
        with pytest.raises(DomainError):
            McConfig(**kwargs)


@pytest.mark.parametrize("path", ["beta", "source"])
def test_ideal_moments_agree(unequal_scene, path):
    basis = ModeBasis.full(2)
    estimate = sample_counts(unequal_scene, basis=basis, mc=McConfig(20000, 11, path))
    assert estimate.samples == 20000
    assert estimate.max_abs_z(demux_moments(unequal_scene, basis=basis)) < 5.0


@pytest.mark.parametrize("path", ["beta", "source"])
def test_noisy_moments_agree(unequal_scene, path):
    misalignment, ct, dark = _noisy_case()
    basis = ModeBasis.full(2)
    estimate = sample_counts(unequal_scene, misalignment, ct, dark, basis, McConfig(20000, 12, path))
    analytic = demux_moments(unequal_scene, misalignment, ct, dark, basis)
    assert estimate.max_abs_z(analytic) < 5.0


def test_source_path_estimates_the_derivative(unequal_scene):
    misalignment, ct, _ = _noisy_case()
    estimate = sample_counts(unequal_scene, misalignment, ct, mc=McConfig(20000, 5, "source"))
    assert "deriv" in estimate.z_scores(demux_moments(unequal_scene, misalignment, ct))
    assert sample_counts(unequal_scene, mc=McConfig(5000, 5, "beta")).deriv is None


def test_dark_counts_alone():
    far = Scene(40.0, 0.0, 1.0)
    estimate = sample_counts(far, dark=DarkCounts.uniform(0.5, 4), basis=ModeBasis.full(1),
                             mc=McConfig(200000, 3))
    np.testing.assert_allclose(estimate.means, 0.5, atol=0.01)
    np.testing.assert_allclose(np.diag(estimate.cov), 0.75, atol=0.03)


def test_reproducible_and_independent_of_threads(diagonal_scene):
    mc = McConfig(5000, [3, 1])
    serial = sample_counts(diagonal_scene, mc=mc, threads=1)
    pooled = sample_counts(diagonal_scene, mc=mc, threads=4)
    np.testing.assert_array_equal(serial.means, pooled.means)
    np.testing.assert_array_equal(serial.cov, pooled.cov)
    np.testing.assert_array_equal(serial.cov_se, pooled.cov_se)
    other = sample_counts(diagonal_scene, mc=McConfig(5000, [3, 2]))
    assert not np.array_equal(serial.means, other.means)


def test_covariance_is_symmetric(diagonal_scene):
    estimate = sample_counts(diagonal_scene, mc=McConfig(2000, 1))
    np.testing.assert_array_equal(estimate.cov, estimate.cov.T)


def test_dimension_checks(diagonal_scene):
    estimate = sample_counts(diagonal_scene, basis=ModeBasis.full(1), mc=McConfig(2000, 1))
    with pytest.raises(DimensionMismatch):
        estimate.z_scores(demux_moments(diagonal_scene, basis=ModeBasis.full(2)))
    with pytest.raises(DimensionMismatch):
        sample_counts(diagonal_scene, ALIGNED, sample_crosstalk(4, 0.01, [0]), basis=ModeBasis.full(2),
                      mc=McConfig(2000, 1))


def test_rare_modes_that_never_click():
    estimate = McEstimate(np.zeros(1), np.zeros((1, 1)), np.zeros(1), np.zeros((1, 1)), 20000, 0, "beta")
    rare = MomentData(np.array([3e-6]), np.array([[3e-6]]), np.zeros(1))
    assert estimate.max_abs_z(rare) == pytest.approx(math.sqrt(3e-6 * 20000))
    silent = MomentData(np.zeros(1), np.zeros((1, 1)), np.zeros(1))
    assert estimate.max_abs_z(silent) == 0.0
    clicked = McEstimate(np.array([1e-3]), np.zeros((1, 1)), np.zeros(1), np.zeros((1, 1)), 20000, 0, "beta")
    assert clicked.max_abs_z(silent) == math.inf


@pytest.mark.slow
@pytest.mark.parametrize("path", ["beta", "source"])
def test_million_sample_agreement(unequal_scene, path):
    misalignment, ct, dark = _noisy_case()
    basis = ModeBasis.full(2)
    estimate = sample_counts(unequal_scene, misalignment, ct, dark, basis, McConfig(1_000_000, 2024, path), threads=4)
    assert estimate.max_abs_z(demux_moments(unequal_scene, misalignment, ct, dark, basis)) < 5.0
