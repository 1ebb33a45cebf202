# test_direct_imaging.py
import math

import numpy as np
import pytest

from superres_moments.direct_imaging import (
    PixelGrid,
    di_sensitivity,
    di_small_separation,
    first_term,
    pixel_overlaps,
)
from superres_moments.errors import DomainError
from superres_moments.moments_engine import sensitivity
from superres_moments.scene import Scene

from conftest import assert_symmetric_psd, central_difference


def test_pixel_grid_geometry():
    grid = PixelGrid(4, 2.0)
    np.testing.assert_allclose(grid.edges, [-2.0, -1.0, 0.0, 1.0, 2.0])
    np.testing.assert_allclose(grid.centers, [-1.5, -0.5, 0.5, 1.5])
    assert grid.pixel_area == pytest.approx(1.0)


@pytest.mark.parametrize("n_p, half_side", [(0, 3.0), (2.5, 3.0), (10, 0.0)])
def test_pixel_grid_domain(n_p, half_side):
    with pytest.raises(DomainError):
        PixelGrid(n_p, half_side)


def test_images_hold_almost_all_light(diagonal_scene):
    moments = pixel_overlaps(diagonal_scene)
    assert moments.phi.sum() == pytest.approx(1.0, abs=1e-6)
    assert moments.psi.sum() == pytest.approx(1.0, abs=1e-6)
    assert moments.xi.sum() == pytest.approx(math.exp(-2 * diagonal_scene.x ** 2), rel=1e-6)
    assert moments.intensities.sum() == pytest.approx(2 * diagonal_scene.n_kappa, rel=1e-6)


def test_images_swap_under_reflection():
    moments = pixel_overlaps(Scene(0.8, 0.0, 1.0), PixelGrid(10, 3.0))
    np.testing.assert_allclose(moments.phi, moments.psi[::-1, :], atol=1e-13)


@pytest.mark.parametrize("theta", [0.0, math.pi / 3])
def test_intensity_derivative_matches_finite_difference(theta):
    grid = PixelGrid(12, 3.0)

    def intensities(d):
        return pixel_overlaps(Scene(d, theta, 2.0, gamma=0.3), grid).intensities

    moments = pixel_overlaps(Scene(0.7, theta, 2.0, gamma=0.3), grid)
    np.testing.assert_allclose(moments.deriv, central_difference(intensities, 0.7), rtol=1e-6, atol=1e-10)


@pytest.mark.parametrize("form", ["complete", "printed"])
@pytest.mark.parametrize("x, gamma", [(0.1, 0.0), (0.4, 0.3), (1.0, -0.5)])
def test_woodbury_matches_dense_solve(form, x, gamma):
    scene = Scene(2 * x, math.pi / 6, 1.5, gamma=gamma)
    grid = PixelGrid(8, 3.0)
    dense = pixel_overlaps(scene, grid, form).dense_moments()
    assert_symmetric_psd(dense.cov)
    lowrank = di_sensitivity(scene, grid, form)
    assert lowrank.m_value == pytest.approx(sensitivity(dense).m_value, rel=1e-8)


def test_lowrank_factor_reproduces_dense_covariance():
    scene = Scene(0.6, 0.4, 1.5, gamma=0.4)
    moments = pixel_overlaps(scene, PixelGrid(6, 3.0))
    u = moments.lowrank_u
    np.testing.assert_allclose(np.diag(moments.intensities.ravel()) + u @ u.T,
                               moments.dense_moments().cov, rtol=1e-12, atol=1e-16)


def test_covariance_forms_agree_for_equal_sources():
    scene = Scene(0.6, 0.4, 1.5)
    grid = PixelGrid(10, 3.0)
    assert di_sensitivity(scene, grid, "printed").m_value == pytest.approx(
        di_sensitivity(scene, grid, "complete").m_value, rel=1e-12)
    with pytest.raises(DomainError):
        pixel_overlaps(scene, grid, "exact")


def test_bunching_only_reduces_sensitivity(diagonal_scene):
    assert di_sensitivity(diagonal_scene).m_value <= first_term(diagonal_scene)


def test_zero_separation_with_unequal_sources():
    scene = Scene(0.0, 0.0, 1.5, gamma=0.5)
    m_value = di_sensitivity(scene).m_value
    assert m_value * scene.waist ** 2 / (2 * scene.n_kappa) == pytest.approx(0.25, rel=0.02)
    assert di_small_separation(scene) == pytest.approx(2 * 1.5 * 0.25)


def test_pixel_refinement_converges():
    scene = Scene(0.1, math.pi / 4, 1.5, gamma=0.5)
    coarse = di_sensitivity(scene, PixelGrid(50, 3.0)).m_value
    fine = di_sensitivity(scene, PixelGrid(100, 3.0)).m_value
    assert coarse == pytest.approx(fine, rel=5e-3)


def test_dropped_pixels_get_zero_coefficients():
    scene = Scene(0.4, 0.0, 1.0)
    grid = PixelGrid(20, 6.0)
    floor = 1e-6
    result = di_sensitivity(scene, grid, floor=floor)
    dropped = ~pixel_overlaps(scene, grid).kept(floor)
    assert dropped.any()
    assert not np.any(result.coeffs[dropped])
    assert np.linalg.norm(result.coeffs) == pytest.approx(1.0)


@pytest.mark.parametrize("gamma", [0.0, 0.3])
def test_rotation_by_quarter_turn(gamma):
    grid = PixelGrid(16, 3.0)
    base = di_sensitivity(Scene(0.5, 0.3, 1.5, gamma=gamma), grid).m_value
    for turns in (1, 2, 3):
        rotated = di_sensitivity(Scene(0.5, 0.3 + turns * math.pi / 2, 1.5, gamma=gamma), grid).m_value
        assert rotated == pytest.approx(base, rel=1e-8)
