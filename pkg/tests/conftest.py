# conftest.py
import json
import math

import numpy as np
import pytest

from superres_moments.scene import Misalignment, ModeBasis, Scene


@pytest.fixture
def diagonal_scene():
    """N kappa = 1.5, theta = pi/4, x = 0.3: the reference point used throughout."""
    return Scene(0.6, math.pi / 4, 1.5)


@pytest.fixture
def misaligned():
    return Misalignment(0.02, math.pi / 3)


@pytest.fixture
def q2_basis():
    return ModeBasis.full(2)


@pytest.fixture
def write_config(tmp_path):
    """Write a JSON config document and return its path."""
    def write(document, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document, indent=2))
        return str(path)
    return write


def central_difference(func, value, step=1e-6):
    return (func(value + step) - func(value - step)) / (2.0 * step)


def assert_symmetric_psd(matrix, atol=1e-12):
    np.testing.assert_allclose(matrix, matrix.T, rtol=0, atol=atol)
    assert np.linalg.eigvalsh(matrix).min() > -atol * max(1.0, np.abs(matrix).max())
