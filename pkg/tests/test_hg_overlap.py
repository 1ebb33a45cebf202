# test_hg_overlap.py
import math

import numpy as np
import pytest

from superres_moments.errors import DimensionMismatch
from superres_moments.hg_overlap import (beta, beta_derivative, overlap_delta, overlap_table)
from superres_moments.scene import Misalignment, ModeBasis, Scene

from conftest import central_difference


def test_fundamental_overlap_is_gaussian(diagonal_scene):
    x = diagonal_scene.x
    assert beta(0, 0, diagonal_scene) == pytest.approx(math.exp(-x * x / 2))
    assert beta(0, 0, diagonal_scene, sign=-1) == pytest.approx(math.exp(-x * x / 2))


def test_first_order_overlap():
    scene = Scene(0.8, 0.0, 1.0)
    assert beta(1, 0, scene) == pytest.approx(0.4 * math.exp(-0.08))
    assert beta(0, 1, scene) == 0.0


def test_parity_under_source_exchange(diagonal_scene):
    for n in range(4):
        for m in range(4):
            assert beta(n, m, diagonal_scene, sign=-1) == pytest.approx(
                (-1) ** (n + m) * beta(n, m, diagonal_scene), abs=1e-15)


def test_completeness_of_large_basis():
    scene = Scene(1.0, math.pi / 6, 1.0)
    table = overlap_table(scene, basis=ModeBasis.full(30))
    assert np.sum(table.f_plus ** 2) == pytest.approx(1.0, rel=1e-12)


def test_image_overlap_matches_delta():
    scene = Scene(1.3, math.pi / 5, 1.0)
    table = overlap_table(scene, basis=ModeBasis.full(30))
    assert np.sum(table.f_plus * table.f_minus) == pytest.approx(overlap_delta(scene), rel=1e-10)
    assert overlap_delta(scene) == pytest.approx(math.exp(-2 * scene.x ** 2))


def test_axis_scene_has_exact_structural_zeros():
    scene = Scene(0.6, math.pi / 2, 1.0)
    table = overlap_table(scene, basis=ModeBasis.full(2))
    for (n, m), fp, dfp in zip(table.basis.active, table.f_plus, table.df_plus):
        if n > 0:
            assert fp == 0.0
            assert dfp == 0.0


@pytest.mark.parametrize("mode", [(0, 0), (1, 0), (0, 1), (2, 1), (1, 2), (3, 0), (2, 2)])
@pytest.mark.parametrize("sign", [1, -1])
def test_derivative_matches_finite_difference(mode, sign):
    n, m = mode
    misalignment = Misalignment(0.1, math.pi / 3)

    def value(d):
        return beta(n, m, Scene(d, math.pi / 7, 1.0, waist=1.3), misalignment, sign)

    analytic = beta_derivative(n, m, Scene(0.9, math.pi / 7, 1.0, waist=1.3), misalignment, sign)
    assert analytic == pytest.approx(central_difference(value, 0.9), rel=1e-6, abs=1e-10)


def test_derivative_at_zero_separation_is_finite():
    scene = Scene(0.0, math.pi / 4, 1.0)
    table = overlap_table(scene, basis=ModeBasis.full(3))
    assert np.all(np.isfinite(table.df_plus))
    # only first-order modes move at d = 0
    moving = [label for label, df in zip(table.basis.labels, table.df_plus) if df != 0.0]
    assert sorted(moving) == ["01", "10"]


def test_select_requires_full_table(diagonal_scene):
    full = overlap_table(diagonal_scene, basis=ModeBasis.full(2))
    sub = full.select(ModeBasis(2, ((0, 1), (1, 0))))
    np.testing.assert_allclose(sub.f_plus, full.f_plus[[1, 3]])
    with pytest.raises(DimensionMismatch):
        sub.select(ModeBasis(2, ((0, 1),)))
    with pytest.raises(DimensionMismatch):
        full.select(ModeBasis.full(1))
