# commands/resolution.py
"""Minimal resolvable distance as a function of the detected photon number."""

import logging
from typing import List

import numpy as np
from mcp.server.fastmcp import FastMCP

from superres_moments.asymptotics import dmin_closed_form, dmin_ensemble, dmin_solve
from superres_moments.config import CROSSTALK_POLICY, RunConfig, parse_config
from superres_moments.errors import ConfigError
from superres_moments.output import ResultTable, run_metadata
from superres_moments.workers import parallel_map

logger = logging.getLogger(__name__)


def _ensemble_dmin(config: RunConfig, scene, noise, query) -> List[float]:
    spec = config.crosstalk
    if not spec.seeds:
        _, _, values = dmin_ensemble(scene, config.misalignment, noise, config.basis, query,
                                     spec.power, spec.base_seed, spec.count)
        return values
    return [dmin_solve(scene, config.misalignment, noise.with_crosstalk(ct), config.basis, query).d_min
            for ct in config.crosstalk_members()]


def cmd_dmin(config: RunConfig) -> ResultTable:
    """One row per photon number (or repetition count) with d_min mean, std and member count.

    Crosstalk ensembles apply to the demux-exact method only; the other
    methods are noiseless references. Closed-form laws listed under
    dmin.closed_forms are added as extra columns.
    """
    spec = config.dmin
    if not spec.values:
        raise ConfigError("Empty sweep", field="dmin.values")
    ensemble = config.crosstalk is not None and spec.method == "demux-exact"
    columns = ["N_det", "n_mean", "mu", "d_min_mean", "d_min_std", "count"]
    units = {"N_det": "photons", "n_mean": "photons per source", "mu": "repetitions",
             "d_min_mean": "waist units", "d_min_std": "waist units", "count": "members"}
    for regime in spec.closed_forms:
        columns.append(f"d_min_{regime}")
        units[f"d_min_{regime}"] = "waist units"
    ct_power = config.crosstalk.power if config.crosstalk is not None else None

    def point(value: float) -> List:
        if spec.sweep == "n_mean":
            scene, mu = config.scene.with_brightness(value), spec.mu
        else:
            scene, mu = config.scene, value
        query = spec.query(mu)
        noise = config.noise_for(scene)
        if ensemble:
            values = _ensemble_dmin(config, scene, noise, query)
        else:
            values = [dmin_solve(scene, config.misalignment, noise, config.basis, query,
                                 spec.method, config.pixels).d_min]
        row = [query.n_det(scene), scene.n_mean, mu, float(np.mean(values)), float(np.std(values)), len(values)]
        for regime in spec.closed_forms:
            row.append(dmin_closed_form(regime, scene, config.misalignment, noise, mu, spec.variant, ct_power))
        logger.debug(f"N_det={row[0]:.6g}: d_min={row[3]:.6g} +- {row[4]:.3g}")
        return row

    logger.info(f"d_min over {len(spec.values)} values of {spec.sweep} ({spec.method})")
    table = ResultTable(columns, units, metadata=run_metadata(
        "dmin", config.document, config.seed_list() if ensemble else [], CROSSTALK_POLICY,
        covariance_form=config.covariance_form))
    for row in parallel_map(point, spec.values, config.threads):
        table.add_row(row)
    return table


def register_resolution_commands(mcp: FastMCP):
    """Register MCP commands for the minimal resolvable distance."""

    @mcp.tool()
    def minimal_resolvable_distance(config: dict) -> dict:
        """d_min against the detected photon number N_det = mu * 2 N kappa.

        Args:
            config: Run configuration document with a 'dmin' section.
        """
        return cmd_dmin(parse_config(config)).as_dict()
