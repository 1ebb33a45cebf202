# commands/validation.py
"""Oracle checks: Monte Carlo moments, closed forms against the engine, and
the low-rank direct-imaging solve against the dense covariance."""

import logging
from dataclasses import replace
from typing import Dict, List, Tuple

import numpy as np
from mcp.server.fastmcp import FastMCP

from superres_moments.config import CROSSTALK_POLICY, InjectSpec, RunConfig, parse_config
from superres_moments.demux_model import MomentData, demux_moments, prepared_moments
from superres_moments.direct_imaging import PixelGrid, di_sensitivity, pixel_overlaps
from superres_moments.errors import ValidationFailure
from superres_moments.ideal_closed_form import ideal_result
from superres_moments.mc_oracle import McConfig, McEstimate, sample_counts
from superres_moments.moments_engine import sensitivity
from superres_moments.noise import DarkCounts, sample_crosstalk
from superres_moments.output import ResultTable, run_metadata
from superres_moments.scene import ALIGNED, ModeBasis, Scene

logger = logging.getLogger(__name__)

COLUMNS = ["check", "case", "entry", "statistic", "threshold", "outcome"]
UNITS = {"statistic": "|z| for Monte Carlo checks, relative error otherwise",
         "threshold": "same as statistic"}


def _entropy(seed) -> List[int]:
    return [int(s) for s in np.atleast_1d(seed)]


def _entry_label(block: str, index: Tuple[int, ...], labels: List[str]) -> str:
    return f"{block}[{','.join(labels[i] for i in index)}]"


def _worst(scores: Dict[str, np.ndarray], labels: List[str]) -> Tuple[float, str]:
    worst, where = 0.0, ""
    for block, z in scores.items():
        magnitude = np.abs(z)
        index = np.unravel_index(int(np.argmax(magnitude)), magnitude.shape)
        if magnitude[index] > worst or not where:
            worst, where = float(magnitude[index]), _entry_label(block, index, labels)
    return worst, where


def _inject(md: MomentData, estimate: McEstimate, spec: InjectSpec) -> MomentData:
    """Shift one analytic covariance entry (and its mirror) so the check must fail."""
    cov = md.cov.copy()
    se = estimate.cov_se[spec.row, spec.col]
    shift = spec.sigmas * (se if se > 0 else 1.0)
    cov[spec.row, spec.col] += shift
    if spec.row != spec.col:
        cov[spec.col, spec.row] += shift
    return replace(md, cov=cov)


def _noise_case(case: str, config: RunConfig, basis: ModeBasis):
    spec = config.validation
    if case == "misalignment":
        return spec.misalignment, None, None
    if case == "crosstalk":
        ct = sample_crosstalk(basis.full_size, spec.crosstalk.power, spec.crosstalk.seed_list()[0])
        return ALIGNED, ct, None
    if case == "dark-counts":
        return ALIGNED, None, DarkCounts.uniform(spec.dark_level, basis.full_size)
    return ALIGNED, None, None


def _scenes(config: RunConfig) -> List[Tuple[float, float, Scene]]:
    spec = config.validation
    return [(x, g, Scene(2.0 * config.scene.waist * x, config.scene.theta, config.scene.n_mean,
                         g, config.scene.kappa, config.scene.waist))
            for x in spec.x_values for g in spec.gamma_values]


def _path_agreement(first: McEstimate, second: McEstimate) -> Dict[str, np.ndarray]:
    def z(a, b, sa, sb):
        scale = np.sqrt(sa ** 2 + sb ** 2)
        diff = a - b
        return np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), np.where(diff == 0, 0.0, np.inf))
    return {"means": z(first.means, second.means, first.mean_se, second.mean_se),
            "cov": z(first.cov, second.cov, first.cov_se, second.cov_se)}


def _monte_carlo_rows(config: RunConfig, seeds: List[List[int]]) -> List[List]:
    spec = config.validation
    rows = []
    case_index = 0
    for q in spec.q_values:
        basis = ModeBasis.full(q)
        for x, g, scene in _scenes(config):
            for case in spec.cases:
                misalignment, ct, dark = _noise_case(case, config, basis)
                label = f"Q={q} x={x!r} gamma={g!r} {case}"
                analytic = demux_moments(scene, misalignment, ct, dark, basis)
                estimates = {}
                for path_index, path in enumerate(spec.paths):
                    seed = _entropy(config.mc.seed) + [case_index, path_index]
                    seeds.append(seed)
                    mc = McConfig(config.mc.samples, seed, path)
                    estimate = sample_counts(scene, misalignment, ct, dark, basis, mc, config.threads)
                    estimates[path] = estimate
                    target = _inject(analytic, estimate, spec.inject) if spec.inject else analytic
                    worst, where = _worst(estimate.z_scores(target), basis.labels)
                    rows.append([f"mc-{path}", label, where, worst, spec.z_max,
                                 "pass" if worst <= spec.z_max else "fail"])
                if len(estimates) == 2:
                    worst, where = _worst(_path_agreement(*estimates.values()), basis.labels)
                    rows.append(["mc-paths", label, where, worst, spec.z_max,
                                 "pass" if worst <= spec.z_max else "fail"])
                case_index += 1
    return rows


def _relative(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b))


def _closed_form_rows(config: RunConfig) -> List[List]:
    spec = config.validation
    rows = []
    for q in spec.q_values:
        for x, g, scene in _scenes(config):
            label = f"Q={q} x={x!r} gamma={g!r}"
            closed = ideal_result(scene, q)
            engine = sensitivity(prepared_moments(scene, basis=ModeBasis.full(q)))
            m_error = _relative(closed.m_value, engine.m_value)
            c_error = float(np.max(np.abs(closed.coeffs - engine.coeffs)))
            rows.append(["closed-vs-engine", label, "M", m_error, spec.rel_tol,
                         "pass" if m_error <= spec.rel_tol else "fail"])
            rows.append(["closed-vs-engine", label, "coefficients", c_error, spec.rel_tol,
                         "pass" if c_error <= spec.rel_tol else "fail"])
    return rows


def _woodbury_rows(config: RunConfig) -> List[List]:
    spec = config.validation
    grid = PixelGrid(spec.dense_n_p, config.pixels.half_side)
    rows = []
    for x, g, scene in _scenes(config):
        label = f"N_p={spec.dense_n_p} x={x!r} gamma={g!r}"
        lowrank = di_sensitivity(scene, grid, config.covariance_form).m_value
        dense = sensitivity(pixel_overlaps(scene, grid, config.covariance_form).dense_moments()).m_value
        error = _relative(lowrank, dense)
        rows.append(["woodbury-vs-dense", label, "M", error, spec.woodbury_tol,
                     "pass" if error <= spec.woodbury_tol else "fail"])
    return rows


def cmd_validate(config: RunConfig) -> ResultTable:
    """Run every oracle check; the table's metadata records the verdict.

    Use raise_for_failures on the returned table to turn failed checks into
    a ValidationFailure.
    """
    seeds: List[List[int]] = []
    logger.info(f"Validating with {config.mc.samples} Monte Carlo samples per case")
    rows = _monte_carlo_rows(config, seeds) + _closed_form_rows(config) + _woodbury_rows(config)
    failures = [dict(zip(COLUMNS, row)) for row in rows if row[-1] == "fail"]
    for failure in failures:
        logger.warning(f"Check {failure['check']} failed for {failure['case']} at {failure['entry']}: "
                       f"{failure['statistic']:.6g} > {failure['threshold']:.6g}")
    table = ResultTable(list(COLUMNS), dict(UNITS), metadata=run_metadata(
        "validate", config.document, seeds, CROSSTALK_POLICY,
        covariance_form=config.covariance_form, passed=not failures, failures=len(failures)))
    for row in rows:
        table.add_row(row)
    logger.info(f"Validation {'passed' if not failures else 'failed'}: {len(rows) - len(failures)}/{len(rows)} checks")
    return table


def raise_for_failures(table: ResultTable) -> None:
    failures = [dict(zip(table.columns, row)) for row in table.rows if row[-1] == "fail"]
    if failures:
        first = failures[0]
        raise ValidationFailure(
            f"{len(failures)} check(s) failed; first: {first['check']} {first['case']} at {first['entry']}",
            failures,
        )


def register_validation_commands(mcp: FastMCP):
    """Register MCP commands for the oracle checks."""

    @mcp.tool()
    def validate_models(config: dict) -> dict:
        """Run Monte Carlo, closed-form and low-rank checks and return the report table.

        Args:
            config: Run configuration document; the 'validate' and 'mc' sections set the grid.
        """
        return cmd_validate(parse_config(config)).as_dict()
