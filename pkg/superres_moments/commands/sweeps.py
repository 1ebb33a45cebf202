# commands/sweeps.py
"""Sensitivity and coefficient sweeps over the source separation."""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from mcp.server.fastmcp import FastMCP

from superres_moments.asymptotics import approx_sensitivity
from superres_moments.config import CROSSTALK_POLICY, RunConfig, parse_config
from superres_moments.demux_model import prepared_moments
from superres_moments.direct_imaging import di_sensitivity
from superres_moments.errors import ConfigError
from superres_moments.ideal_closed_form import ideal_basis, ideal_result, sensitivity_asymptotic
from superres_moments.moments_engine import SensitivityResult, sensitivity
from superres_moments.noise import CrosstalkMatrix, DarkCounts, NoiseModel, sample_crosstalk
from superres_moments.output import ResultTable, run_metadata
from superres_moments.scene import Misalignment, ModeBasis, Scene, make_scene
from superres_moments.workers import parallel_map

logger = logging.getLogger(__name__)

COEFFICIENT_METHODS = ("demux-exact", "demux-ideal-closed")
UNITS = {
    "x": "d/2w",
    "d": "waist units",
    "M": "1/waist^2",
    "m": "unit-norm coefficient",
    "count": "members",
}


def _noise_dependent(method: str) -> bool:
    return method == "demux-exact" or method.startswith("approx-")


def expand_coefficients(result_basis: ModeBasis, basis: ModeBasis, coeffs: np.ndarray) -> np.ndarray:
    """Place coefficients of a reduced basis into the slots of `basis` (zeros elsewhere)."""
    lookup = dict(zip(result_basis.active, coeffs))
    return np.array([lookup.get(mode, 0.0) for mode in basis.active])


def evaluate_method(method: str, scene: Scene, config: RunConfig,
                    noise: NoiseModel) -> Tuple[float, Optional[np.ndarray]]:
    """M (and coefficients on config.basis where the method has them) at one scene."""
    basis = config.basis
    if method == "demux-exact":
        md = prepared_moments(scene, config.misalignment, noise, basis, config.covariance_form)
        result = sensitivity(md)
        return result.m_value, expand_coefficients(md.basis, basis, result.coeffs)
    if method == "demux-ideal-closed":
        result = ideal_result(scene, basis.q_max)
        return result.m_value, expand_coefficients(ideal_basis(scene, basis.q_max), basis, result.coeffs)
    if method == "demux-asymptotic":
        return sensitivity_asymptotic(scene), None
    if method == "direct-imaging":
        return di_sensitivity(scene, config.pixels, config.covariance_form).m_value, None
    regime = method[len("approx-"):]
    return approx_sensitivity(scene, config.misalignment, regime, noise, basis), None


def _members(config: RunConfig) -> List[Optional[CrosstalkMatrix]]:
    members = config.crosstalk_members()
    return members if members else [None]


def _require_grid(config: RunConfig) -> None:
    if not config.x_values:
        raise ConfigError("Empty d-grid", field="sweep")


def _metadata(command: str, config: RunConfig, **extra) -> Dict:
    return run_metadata(command, config.document, config.seed_list(), CROSSTALK_POLICY,
                        covariance_form=config.covariance_form, **extra)


def cmd_sweep_sensitivity(config: RunConfig) -> ResultTable:
    """One row per separation: M for every configured method.

    Methods that see crosstalk report mean, std and member count over the
    ensemble when one is configured. Demux-exact also reports its optimal
    coefficients (ensemble mean).
    """
    _require_grid(config)
    ensemble = config.crosstalk is not None
    members = _members(config)
    labels = config.basis.labels
    columns = ["x", "d"]
    units = {"x": UNITS["x"], "d": UNITS["d"]}
    for method in config.methods:
        if ensemble and _noise_dependent(method):
            names = [f"M_{method}_mean", f"M_{method}_std", f"M_{method}_count"]
            units.update({names[0]: UNITS["M"], names[1]: UNITS["M"], names[2]: UNITS["count"]})
        else:
            names = [f"M_{method}"]
            units[names[0]] = UNITS["M"]
        columns.extend(names)
    with_coeffs = "demux-exact" in config.methods
    if with_coeffs:
        columns.extend(f"m_{label}" for label in labels)
        units.update({f"m_{label}": UNITS["m"] for label in labels})

    logger.info(f"Sweeping {len(config.x_values)} separations with methods {list(config.methods)}"
                f" over {len(members)} crosstalk member(s)")

    def point(x: float) -> List:
        scene = config.scene.with_x(x)
        row = [x, 2.0 * config.scene.waist * x]
        coeff_sum = np.zeros(config.basis.size)
        for method in config.methods:
            runs = members if _noise_dependent(method) else [None]
            values = []
            for ct in runs:
                m_value, coeffs = evaluate_method(method, scene, config, config.noise_for(scene, ct))
                values.append(m_value)
                if method == "demux-exact":
                    coeff_sum += coeffs
            if ensemble and _noise_dependent(method):
                row.extend([float(np.mean(values)), float(np.std(values)), len(values)])
            else:
                row.append(values[0])
        if with_coeffs:
            row.extend(float(c) for c in coeff_sum / len(members))
        logger.debug(f"x={x:.6g}: {row[2:]}")
        return row

    table = ResultTable(columns, units, metadata=_metadata("sweep-sensitivity", config))
    for row in parallel_map(point, config.x_values, config.threads):
        table.add_row(row)
    return table


def cmd_coefficients(config: RunConfig) -> ResultTable:
    """Optimal unit-norm coefficients m_nm per separation (ensemble mean and std with crosstalk)."""
    _require_grid(config)
    method = config.methods[0]
    if method not in COEFFICIENT_METHODS:
        raise ConfigError(f"Coefficients need one of {list(COEFFICIENT_METHODS)} first, got '{method}'",
                          field="methods")
    ensemble = config.crosstalk is not None and method == "demux-exact"
    members = _members(config) if method == "demux-exact" else [None]
    labels = config.basis.labels
    columns = ["x", "d"]
    units = {"x": UNITS["x"], "d": UNITS["d"]}
    if ensemble:
        for label in labels:
            columns.extend([f"m_{label}_mean", f"m_{label}_std"])
            units.update({f"m_{label}_mean": UNITS["m"], f"m_{label}_std": UNITS["m"]})
        columns.append("count")
        units["count"] = UNITS["count"]
    else:
        columns.extend(f"m_{label}" for label in labels)
        units.update({f"m_{label}": UNITS["m"] for label in labels})

    def point(x: float) -> List:
        scene = config.scene.with_x(x)
        stack = np.array([evaluate_method(method, scene, config, config.noise_for(scene, ct))[1]
                          for ct in members])
        row = [x, 2.0 * config.scene.waist * x]
        if ensemble:
            for mean, std in zip(stack.mean(axis=0), stack.std(axis=0)):
                row.extend([float(mean), float(std)])
            row.append(len(members))
        else:
            row.extend(float(c) for c in stack[0])
        return row

    logger.info(f"Coefficient sweep over {len(config.x_values)} separations ({method})")
    table = ResultTable(columns, units, metadata=_metadata("coefficients", config, method=method))
    for row in parallel_map(point, config.x_values, config.threads):
        table.add_row(row)
    return table


def point_sensitivity(d: float, theta: float, n_mean: float, gamma: float = 0.0, kappa: float = 1.0,
                      waist: float = 1.0, q_max: int = 2, d_s: float = 0.0, theta_s: float = 0.0,
                      dark_level: float = 0.0, crosstalk_power: float = 0.0,
                      crosstalk_seed: Sequence[int] = (0, 0)) -> SensitivityResult:
    """Demultiplexing sensitivity for one fully specified measurement."""
    scene = make_scene(d, theta, n_mean, gamma, kappa, waist)
    basis = ModeBasis.full(q_max)
    ct = sample_crosstalk(basis.full_size, crosstalk_power, list(crosstalk_seed)) if crosstalk_power else None
    dark = DarkCounts.uniform(dark_level, basis.full_size) if dark_level else None
    md = prepared_moments(scene, Misalignment(d_s, theta_s), NoiseModel(ct, dark), basis)
    result = sensitivity(md)
    return SensitivityResult(result.m_value, expand_coefficients(md.basis, basis, result.coeffs),
                             result.eta, result.condition)


def register_sweep_commands(mcp: FastMCP):
    """Register MCP commands for sensitivity and coefficient sweeps."""

    @mcp.tool()
    def sweep_sensitivity(config: dict) -> dict:
        """Sensitivity M along a separation grid.

        Args:
            config: Run configuration document (same schema as the config file).

        Returns:
            Table with metadata, columns, units and rows.
        """
        return cmd_sweep_sensitivity(parse_config(config)).as_dict()

    @mcp.tool()
    def measurement_coefficients(config: dict) -> dict:
        """Optimal linear-observable coefficients m_nm along a separation grid."""
        return cmd_coefficients(parse_config(config)).as_dict()

    @mcp.tool()
    def sensitivity_at_point(d: float, theta: float, n_mean: float, gamma: float = 0.0, q_max: int = 2,
                             d_s: float = 0.0, theta_s: float = 0.0, dark_level: float = 0.0,
                             crosstalk_power: float = 0.0) -> dict:
        """Sensitivity of demultiplexing into HG modes up to order q_max at one separation.

        Args:
            d: Source separation in waist units.
            theta: Orientation of the source pair (radians).
            n_mean: Mean photon number per source.
            gamma: Brightness imbalance in (-1, 1).
            q_max: Highest HG index measured along each axis.
            d_s: Centroid misalignment in waist units.
            theta_s: Direction of the misalignment (radians).
            dark_level: Mean dark counts per mode.
            crosstalk_power: Mean off-diagonal crosstalk power (seed [0, 0]).
        """
        result = point_sensitivity(d, theta, n_mean, gamma, q_max=q_max, d_s=d_s, theta_s=theta_s,
                                   dark_level=dark_level, crosstalk_power=crosstalk_power)
        labels = ModeBasis.full(q_max).labels
        return {
            "M": result.m_value,
            "coefficients": dict(zip(labels, (float(c) for c in result.coeffs))),
            "eta": result.eta,
            "condition": None if math.isnan(result.condition) else result.condition,
        }
