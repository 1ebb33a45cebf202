# test_server.py
import asyncio
import math

import pytest

from superres_moments.commands.sweeps import point_sensitivity
from superres_moments.ideal_closed_form import sensitivity_ideal
from superres_moments.scene import Scene
from superres_moments.server import mcp


def test_tools_are_registered():
    names = {tool.name for tool in asyncio.run(mcp.list_tools())}
    assert names == {"sweep_sensitivity", "measurement_coefficients", "sensitivity_at_point",
                     "minimal_resolvable_distance", "validate_models"}


def test_point_sensitivity_without_noise_is_ideal():
    result = point_sensitivity(0.6, math.pi / 4, 1.5)
    assert result.m_value == pytest.approx(sensitivity_ideal(Scene(0.6, math.pi / 4, 1.5), 2), rel=1e-9)
    assert result.coeffs.size == 9


def test_point_sensitivity_on_the_axis_pads_coefficients():
    result = point_sensitivity(0.6, 0.0, 1.5)
    assert result.coeffs.size == 9
    assert result.coeffs[1] == 0.0


def test_noise_lowers_the_point_sensitivity():
    clean = point_sensitivity(0.1, math.pi / 4, 1.5).m_value
    noisy = point_sensitivity(0.1, math.pi / 4, 1.5, d_s=0.02, dark_level=0.01, crosstalk_power=0.0017)
    assert noisy.m_value < clean
