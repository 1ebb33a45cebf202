# test_scene.py
import math

import numpy as np
import pytest

from superres_moments.errors import DomainError
from superres_moments.scene import (Misalignment, ModeBasis, Scene, axis_alignment, exact_cos_sin,
                                    make_scene)


def test_exact_cos_sin_snaps_axes():
    assert exact_cos_sin(math.pi / 2) == (0.0, 1.0)
    assert exact_cos_sin(math.pi) == (-1.0, 0.0)
    assert exact_cos_sin(-math.pi / 2) == (0.0, -1.0)
    c, s = exact_cos_sin(math.pi / 4)
    assert c == pytest.approx(math.sqrt(0.5))
    assert s == pytest.approx(math.sqrt(0.5))


def test_axis_alignment():
    assert axis_alignment(0.0) == "x"
    assert axis_alignment(math.pi) == "x"
    assert axis_alignment(math.pi / 2) == "y"
    assert axis_alignment(3 * math.pi / 2) == "y"
    assert axis_alignment(math.pi / 6) == ""


def test_scene_reduced_quantities():
    scene = Scene(0.6, 0.0, 2.0, kappa=0.5, waist=1.5)
    assert scene.x == pytest.approx(0.2)
    assert scene.n_kappa == pytest.approx(1.0)
    assert scene.r0 == (pytest.approx(0.2), 0.0)
    assert scene.with_x(0.4).d == pytest.approx(1.2)
    assert scene.with_brightness(4.0).n_kappa == pytest.approx(2.0)


@pytest.mark.parametrize("kwargs", [
    dict(d=-0.1, theta=0.0, n_mean=1.0),
    dict(d=0.1, theta=0.0, n_mean=0.0),
    dict(d=0.1, theta=0.0, n_mean=1.0, gamma=1.0),
    dict(d=0.1, theta=0.0, n_mean=1.0, gamma=-1.0),
    dict(d=0.1, theta=0.0, n_mean=1.0, kappa=0.0),
    dict(d=0.1, theta=0.0, n_mean=1.0, kappa=1.5),
    dict(d=0.1, theta=0.0, n_mean=1.0, waist=0.0),
    dict(d=float("nan"), theta=0.0, n_mean=1.0),
])
def test_scene_rejects_unphysical_parameters(kwargs):
    with pytest.raises(DomainError):
        make_scene(**kwargs)


def test_misalignment_shift():
    shift = Misalignment(0.02, math.pi / 2)
    assert shift.x_s(1.0) == pytest.approx(0.01)
    assert shift.shift(1.0) == (0.0, pytest.approx(0.02))
    assert not shift.is_aligned
    assert Misalignment().is_aligned
    with pytest.raises(DomainError):
        Misalignment(-0.1, 0.0)


def test_full_basis_layout():
    basis = ModeBasis.full(2)
    assert basis.size == basis.full_size == 9
    assert basis.is_full
    assert basis.labels == ["00", "01", "02", "10", "11", "12", "20", "21", "22"]
    np.testing.assert_array_equal(basis.positions, np.arange(9))
    np.testing.assert_array_equal(basis.orders, [0, 1, 2, 1, 2, 3, 2, 3, 4])


def test_active_modes_are_sorted_row_major():
    basis = ModeBasis(2, ((2, 0), (0, 1), (1, 1)))
    assert basis.active == ((0, 1), (1, 1), (2, 0))
    np.testing.assert_array_equal(basis.positions, [1, 4, 6])
    assert not basis.is_full
    assert basis.restrict([0, 2]).active == ((0, 1), (2, 0))


def test_axis_bases():
    assert ModeBasis.axis(2, "x").active == ((0, 0), (1, 0), (2, 0))
    assert ModeBasis.axis(2, "y").active == ((0, 0), (0, 1), (0, 2))
    with pytest.raises(DomainError):
        ModeBasis.axis(2, "z")


@pytest.mark.parametrize("active", [((0, 1), (0, 1)), ((0, 3),), ((-1, 0),)])
def test_invalid_active_modes(active):
    with pytest.raises(DomainError):
        ModeBasis(2, active)
