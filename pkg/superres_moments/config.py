# config.py
"""Run configuration: one YAML (or JSON) document per run plus environment overrides.

Precedence is command-line flag > environment variable > document. The
environment variables are read here and nowhere else:

    SUPERRES_OUT        output path
    SUPERRES_THREADS    worker threads
    SUPERRES_LOG_LEVEL  logging level name (DEBUG, INFO, ...)
"""

import logging
import math
import os
import re
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from superres_moments.asymptotics import CLOSED_FORM_REGIMES, CLOSED_FORM_VARIANTS, DMIN_METHODS, REGIMES, DminQuery
from superres_moments.demux_model import COVARIANCE_FORMS
from superres_moments.direct_imaging import PixelGrid
from superres_moments.errors import ConfigError, SuperresError
from superres_moments.mc_oracle import SAMPLER_PATHS, McConfig
from superres_moments.noise import (CrosstalkMatrix, DarkCounts, NoiseModel, crosstalk_ensemble,
                                    member_seed, sample_crosstalk)
from superres_moments.scene import Misalignment, ModeBasis, Scene

logger = logging.getLogger(__name__)

# Environment variables consulted when no flag is given
OUT_PATH = os.getenv("SUPERRES_OUT")
THREADS = os.getenv("SUPERRES_THREADS")
LOG_LEVEL = os.getenv("SUPERRES_LOG_LEVEL")

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
COMMANDS = ("sweep-sensitivity", "coefficients", "dmin", "validate")
OUTPUT_FORMATS = ("csv", "json")
SWEEP_METHODS = DMIN_METHODS + tuple(f"approx-{regime}" for regime in REGIMES)
VALIDATION_CASES = ("ideal", "misalignment", "crosstalk", "dark-counts")
CROSSTALK_POLICY = "one matrix per ensemble member across the full sweep"

_REQUIRED = object()


def setup_logging(level: Optional[str] = None) -> None:
    """Configure the root logger once per process."""
    name = (level or LOG_LEVEL or "INFO").upper()
    numeric = getattr(logging, name, None)
    if not isinstance(numeric, int):
        raise ConfigError(f"Unknown log level '{name}'", field="SUPERRES_LOG_LEVEL")
    logging.basicConfig(level=numeric, format=LOG_FORMAT)
    logging.getLogger().setLevel(numeric)


class _ConfigLoader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a dot (1e-06), as JSON writes them."""


_ConfigLoader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?[0-9][0-9_]*(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


def _compose(text: str) -> Optional[yaml.Node]:
    if not text:
        return None
    try:
        return yaml.compose(text, Loader=_ConfigLoader)
    except yaml.YAMLError:
        return None


class _Reader:
    """Typed access to the configuration document with line-aware error messages."""

    def __init__(self, text: str):
        self.root = _compose(text)

    def line_of(self, path: str) -> Optional[int]:
        """Line of the deepest key of a dotted field found in the YAML node tree."""
        node, found = self.root, None
        for key in path.split(".") if path else []:
            if isinstance(node, yaml.SequenceNode) and key.isdigit() and int(key) < len(node.value):
                node = node.value[int(key)]
                found = node.start_mark.line + 1
                continue
            if not isinstance(node, yaml.MappingNode):
                return found
            for key_node, value_node in node.value:
                if key_node.value == key:
                    found, node = key_node.start_mark.line + 1, value_node
                    break
            else:
                return found
        return found

    def fail(self, message: str, path: str):
        raise ConfigError(message, field=path, line=self.line_of(path))

    def section(self, doc: Dict[str, Any], key: str, path: str) -> Dict[str, Any]:
        value = doc.get(key, {})
        if value is None:
            return {}
        if not isinstance(value, dict):
            self.fail(f"Expected an object, got {type(value).__name__}", path)
        return value

    def number(self, doc: Dict[str, Any], key: str, path: str, default=_REQUIRED) -> float:
        if key not in doc:
            if default is _REQUIRED:
                self.fail("Missing required number", path)
            return default
        value = doc[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            self.fail(f"Expected a finite number, got {value!r}", path)
        return float(value)

    def integer(self, doc: Dict[str, Any], key: str, path: str, default=_REQUIRED) -> int:
        value = self.number(doc, key, path, default)
        if value is None:
            return None
        if int(value) != value:
            self.fail(f"Expected an integer, got {value!r}", path)
        return int(value)

    def numbers(self, doc: Dict[str, Any], key: str, path: str, default=_REQUIRED) -> Tuple[float, ...]:
        if key not in doc:
            if default is _REQUIRED:
                self.fail("Missing required list of numbers", path)
            return tuple(default)
        value = doc[key]
        if not isinstance(value, list):
            self.fail(f"Expected a list of numbers, got {value!r}", path)
        for i, item in enumerate(value):
            if isinstance(item, bool) or not isinstance(item, (int, float)) or not math.isfinite(item):
                self.fail(f"Expected a finite number, got {item!r}", f"{path}.{i}")
        return tuple(float(item) for item in value)

    def choice(self, doc: Dict[str, Any], key: str, path: str, options: Sequence[str], default=_REQUIRED) -> str:
        if key not in doc:
            if default is _REQUIRED:
                self.fail(f"Missing required value, expected one of {list(options)}", path)
            return default
        value = doc[key]
        if value not in options:
            self.fail(f"Unknown value {value!r}, expected one of {list(options)}", path)
        return value

    def choices(self, doc: Dict[str, Any], key: str, path: str, options: Sequence[str],
                default: Sequence[str]) -> Tuple[str, ...]:
        value = doc.get(key, list(default))
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, list) or not value:
            self.fail(f"Expected a non-empty list drawn from {list(options)}", path)
        for i, item in enumerate(value):
            if item not in options:
                self.fail(f"Unknown value {item!r}, expected one of {list(options)}", f"{path}.{i}")
        return tuple(value)


@dataclass(frozen=True)
class DarkSpec:
    """Dark counts as a fixed level N^dc, a ratio sigma = N^dc / 2 N kappa, or per mode."""

    kind: str
    level: float = 0.0
    per_mode: Tuple[float, ...] = ()

    def build(self, scene: Scene, basis: ModeBasis) -> DarkCounts:
        if self.kind == "sigma":
            return DarkCounts.from_sigma(self.level, scene, basis.full_size)
        if self.kind == "per_mode":
            return DarkCounts(np.array(self.per_mode))
        return DarkCounts.uniform(self.level, basis.full_size)


@dataclass(frozen=True)
class CrosstalkSpec:
    """Target off-diagonal power and the seeds of the ensemble members."""

    power: float
    base_seed: int = 0
    count: int = 1
    seeds: Tuple[int, ...] = ()

    def seed_list(self) -> List[List[int]]:
        if self.seeds:
            return [[int(s)] for s in self.seeds]
        return [member_seed(self.base_seed, i) for i in range(self.count)]

    def members(self, dim: int) -> List[CrosstalkMatrix]:
        if self.seeds:
            return [sample_crosstalk(dim, self.power, [int(s)]) for s in self.seeds]
        return crosstalk_ensemble(dim, self.power, self.base_seed, self.count)


@dataclass(frozen=True)
class DminSpec:
    sweep: str = "n_mean"
    values: Tuple[float, ...] = ()
    mu: float = 1.0
    method: str = "demux-exact"
    x_min: float = 1e-6
    x_max: float = 5.0
    points: int = 400
    closed_forms: Tuple[str, ...] = ()
    variant: str = "printed"

    def query(self, mu: float) -> DminQuery:
        return DminQuery(mu, self.x_min, self.x_max, self.points)


@dataclass(frozen=True)
class InjectSpec:
    """Shift one analytic covariance entry by `sigmas` standard errors."""

    row: int
    col: int
    sigmas: float = 50.0


@dataclass(frozen=True)
class ValidationSpec:
    q_values: Tuple[int, ...] = (1, 2)
    x_values: Tuple[float, ...] = (0.2, 0.6, 1.2)
    gamma_values: Tuple[float, ...] = (0.0, 0.5)
    cases: Tuple[str, ...] = VALIDATION_CASES
    paths: Tuple[str, ...] = SAMPLER_PATHS
    z_max: float = 5.0
    rel_tol: float = 1e-9
    woodbury_tol: float = 1e-8
    dense_n_p: int = 8
    misalignment: Misalignment = Misalignment(0.2, math.pi / 3)
    crosstalk: CrosstalkSpec = CrosstalkSpec(0.01)
    dark_level: float = 0.3
    inject: Optional[InjectSpec] = None


@dataclass(frozen=True)
class OutputSpec:
    path: Optional[str] = None
    format: str = "csv"


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; `document` is echoed verbatim into outputs."""

    document: Dict[str, Any]
    command: Optional[str] = None
    scene: Scene = Scene(0.0, math.pi / 4, 1.5)
    misalignment: Misalignment = Misalignment()
    basis: ModeBasis = ModeBasis(2)
    dark: Optional[DarkSpec] = None
    crosstalk: Optional[CrosstalkSpec] = None
    x_values: Tuple[float, ...] = ()
    methods: Tuple[str, ...] = ("demux-exact",)
    covariance_form: str = "complete"
    pixels: PixelGrid = PixelGrid()
    dmin: DminSpec = DminSpec()
    mc: McConfig = McConfig()
    validation: ValidationSpec = ValidationSpec()
    output: OutputSpec = OutputSpec()
    threads: int = 1
    log_level: Optional[str] = None

    def noise_for(self, scene: Scene, crosstalk: Optional[CrosstalkMatrix] = None) -> NoiseModel:
        dark = self.dark.build(scene, self.basis) if self.dark is not None else None
        return NoiseModel(crosstalk, dark)

    def crosstalk_members(self) -> List[CrosstalkMatrix]:
        if self.crosstalk is None:
            return []
        return self.crosstalk.members(self.basis.full_size)

    def separations(self) -> np.ndarray:
        return 2.0 * self.scene.waist * np.array(self.x_values)

    def seed_list(self) -> List[List[int]]:
        return self.crosstalk.seed_list() if self.crosstalk is not None else []


def _parse_scene(reader: _Reader, doc: Dict[str, Any]) -> Scene:
    section = reader.section(doc, "scene", "scene")
    values = {
        "d": reader.number(section, "d", "scene.d", 0.0),
        "theta": reader.number(section, "theta", "scene.theta", math.pi / 4),
        "n_mean": reader.number(section, "n_mean", "scene.n_mean"),
        "gamma": reader.number(section, "gamma", "scene.gamma", 0.0),
        "kappa": reader.number(section, "kappa", "scene.kappa", 1.0),
        "waist": reader.number(section, "waist", "scene.waist", 1.0),
    }
    try:
        return Scene(**values)
    except SuperresError as exc:
        reader.fail(str(exc), "scene")


def _parse_misalignment(reader: _Reader, section: Dict[str, Any], path: str,
                        default: Misalignment = Misalignment()) -> Misalignment:
    if not section:
        return default
    try:
        return Misalignment(reader.number(section, "d_s", f"{path}.d_s", 0.0),
                            reader.number(section, "theta_s", f"{path}.theta_s", 0.0))
    except SuperresError as exc:
        reader.fail(str(exc), path)


def _parse_basis(reader: _Reader, doc: Dict[str, Any]) -> ModeBasis:
    section = reader.section(doc, "basis", "basis")
    q_max = reader.integer(section, "q_max", "basis.q_max", 2)
    active = section.get("active", [])
    if not isinstance(active, list) or any(not isinstance(p, list) or len(p) != 2 for p in active):
        reader.fail("Expected a list of [n, m] pairs", "basis.active")
    try:
        return ModeBasis(q_max, tuple(tuple(p) for p in active))
    except SuperresError as exc:
        reader.fail(str(exc), "basis")


def _parse_dark(reader: _Reader, section: Dict[str, Any], path: str, basis: ModeBasis) -> Optional[DarkSpec]:
    if not section:
        return None
    given = [key for key in ("level", "sigma", "per_mode") if key in section]
    if len(given) != 1:
        reader.fail("Give exactly one of 'level', 'sigma' or 'per_mode'", path)
    kind = given[0]
    if kind == "per_mode":
        values = reader.numbers(section, "per_mode", f"{path}.per_mode")
        if len(values) not in (basis.full_size, basis.size):
            reader.fail(f"Expected {basis.full_size} (or {basis.size}) values, got {len(values)}",
                        f"{path}.per_mode")
        if any(v < 0 for v in values):
            reader.fail("Dark-count means must be non-negative", f"{path}.per_mode")
        return DarkSpec("per_mode", per_mode=values)
    level = reader.number(section, kind, f"{path}.{kind}")
    if level < 0:
        reader.fail(f"Dark-count {kind} must be non-negative, got {level}", f"{path}.{kind}")
    return DarkSpec(kind, level)


def _parse_crosstalk(reader: _Reader, section: Dict[str, Any], path: str) -> Optional[CrosstalkSpec]:
    if not section:
        return None
    power = reader.number(section, "power", f"{path}.power")
    if not 0.0 <= power < 1.0:
        reader.fail(f"Crosstalk power must lie in [0, 1), got {power}", f"{path}.power")
    if "seeds" in section:
        seeds = reader.numbers(section, "seeds", f"{path}.seeds")
        if not seeds or any(int(s) != s or s < 0 for s in seeds):
            reader.fail("Expected a non-empty list of non-negative integer seeds", f"{path}.seeds")
        return CrosstalkSpec(power, seeds=tuple(int(s) for s in seeds), count=len(seeds))
    base_seed = reader.integer(section, "base_seed", f"{path}.base_seed", 0)
    count = reader.integer(section, "count", f"{path}.count", 1)
    if base_seed < 0:
        reader.fail("Seeds must be non-negative", f"{path}.base_seed")
    if count < 1:
        reader.fail(f"Ensemble needs at least one member, got {count}", f"{path}.count")
    return CrosstalkSpec(power, base_seed, count)


def _parse_sweep(reader: _Reader, doc: Dict[str, Any], waist: float) -> Tuple[float, ...]:
    section = reader.section(doc, "sweep", "sweep")
    if not section:
        return ()
    if "x" in section:
        values = reader.numbers(section, "x", "sweep.x")
    elif "d" in section:
        values = tuple(d / (2.0 * waist) for d in reader.numbers(section, "d", "sweep.d"))
    else:
        x_min = reader.number(section, "x_min", "sweep.x_min")
        x_max = reader.number(section, "x_max", "sweep.x_max")
        points = reader.integer(section, "points", "sweep.points")
        spacing = reader.choice(section, "spacing", "sweep.spacing", ("log", "linear"), "log")
        if points < 1:
            reader.fail("Empty d-grid", "sweep.points")
        if not 0 <= x_min <= x_max or (spacing == "log" and x_min == 0):
            reader.fail(f"Invalid range [{x_min}, {x_max}] for {spacing} spacing", "sweep")
        if spacing == "log":
            values = tuple(np.logspace(math.log10(x_min), math.log10(x_max), points))
        else:
            values = tuple(np.linspace(x_min, x_max, points))
    if not values:
        reader.fail("Empty d-grid", "sweep")
    if any(v < 0 for v in values):
        reader.fail("Separations must be non-negative", "sweep")
    return tuple(float(v) for v in values)


def _parse_pixels(reader: _Reader, doc: Dict[str, Any]) -> PixelGrid:
    section = reader.section(doc, "pixels", "pixels")
    try:
        return PixelGrid(reader.integer(section, "n_p", "pixels.n_p", 50),
                         reader.number(section, "half_side", "pixels.half_side", 3.0))
    except SuperresError as exc:
        reader.fail(str(exc), "pixels")


def _parse_dmin(reader: _Reader, doc: Dict[str, Any]) -> DminSpec:
    section = reader.section(doc, "dmin", "dmin")
    if not section:
        return DminSpec()
    sweep = reader.choice(section, "sweep", "dmin.sweep", ("n_mean", "mu"), "n_mean")
    values = reader.numbers(section, "values", "dmin.values")
    if not values:
        reader.fail("Empty sweep", "dmin.values")
    if sweep == "mu" and any(v < 1 for v in values):
        reader.fail("Repetitions mu must be at least 1", "dmin.values")
    if sweep == "n_mean" and any(v <= 0 for v in values):
        reader.fail("Photon numbers must be positive", "dmin.values")
    spec = DminSpec(
        sweep=sweep,
        values=values,
        mu=reader.number(section, "mu", "dmin.mu", 1.0),
        method=reader.choice(section, "method", "dmin.method", DMIN_METHODS, "demux-exact"),
        x_min=reader.number(section, "x_min", "dmin.x_min", 1e-6),
        x_max=reader.number(section, "x_max", "dmin.x_max", 5.0),
        points=reader.integer(section, "points", "dmin.points", 400),
        closed_forms=reader.choices(section, "closed_forms", "dmin.closed_forms", CLOSED_FORM_REGIMES, ())
        if "closed_forms" in section else (),
        variant=reader.choice(section, "variant", "dmin.variant", CLOSED_FORM_VARIANTS, "printed"),
    )
    try:
        spec.query(spec.mu)
    except SuperresError as exc:
        reader.fail(str(exc), "dmin")
    return spec


def _parse_mc(reader: _Reader, doc: Dict[str, Any]) -> McConfig:
    section = reader.section(doc, "mc", "mc")
    try:
        return McConfig(reader.integer(section, "samples", "mc.samples", 1_000_000),
                        reader.integer(section, "seed", "mc.seed", 0))
    except SuperresError as exc:
        reader.fail(str(exc), "mc")


def _parse_validation(reader: _Reader, doc: Dict[str, Any], basis: ModeBasis) -> ValidationSpec:
    section = reader.section(doc, "validate", "validate")
    defaults = ValidationSpec()
    raw_q = reader.numbers(section, "q_max", "validate.q_max", defaults.q_values)
    q_values = tuple(int(q) for q in raw_q)
    if not q_values or any(q < 0 or q != r for q, r in zip(q_values, raw_q)):
        reader.fail("Expected a non-empty list of non-negative mode orders", "validate.q_max")
    inject = None
    inject_section = reader.section(section, "inject", "validate.inject")
    if inject_section:
        inject = InjectSpec(reader.integer(inject_section, "row", "validate.inject.row"),
                            reader.integer(inject_section, "col", "validate.inject.col"),
                            reader.number(inject_section, "sigmas", "validate.inject.sigmas", 50.0))
        smallest = min((q + 1) ** 2 for q in q_values)
        if not (0 <= inject.row < smallest and 0 <= inject.col < smallest):
            reader.fail(f"Entry ({inject.row}, {inject.col}) lies outside the {smallest}-mode basis",
                        "validate.inject")
    noise = reader.section(section, "noise", "validate.noise")
    dark = _parse_dark(reader, reader.section(noise, "dark", "validate.noise.dark"), "validate.noise.dark", basis)
    if dark is not None and dark.kind != "level":
        reader.fail("Validation dark counts take a fixed 'level'", "validate.noise.dark")
    return ValidationSpec(
        q_values=q_values,
        x_values=reader.numbers(section, "x", "validate.x", defaults.x_values),
        gamma_values=reader.numbers(section, "gamma", "validate.gamma", defaults.gamma_values),
        cases=reader.choices(section, "cases", "validate.cases", VALIDATION_CASES, defaults.cases),
        paths=reader.choices(section, "paths", "validate.paths", SAMPLER_PATHS, defaults.paths),
        z_max=reader.number(section, "z_max", "validate.z_max", defaults.z_max),
        rel_tol=reader.number(section, "rel_tol", "validate.rel_tol", defaults.rel_tol),
        woodbury_tol=reader.number(section, "woodbury_tol", "validate.woodbury_tol", defaults.woodbury_tol),
        dense_n_p=reader.integer(section, "dense_n_p", "validate.dense_n_p", defaults.dense_n_p),
        misalignment=_parse_misalignment(reader, reader.section(noise, "misalignment", "validate.noise.misalignment"),
                                         "validate.noise.misalignment", defaults.misalignment),
        crosstalk=_parse_crosstalk(reader, reader.section(noise, "crosstalk", "validate.noise.crosstalk"),
                                   "validate.noise.crosstalk") or defaults.crosstalk,
        dark_level=dark.level if dark is not None else defaults.dark_level,
        inject=inject,
    )


def parse_config(doc: Dict[str, Any], text: str = "") -> RunConfig:
    """Validate a decoded document; `text` is the raw YAML or JSON text used for line numbers."""
    reader = _Reader(text)
    if not isinstance(doc, dict):
        reader.fail(f"The configuration must be a mapping, got {type(doc).__name__}", "")
    command = reader.choice(doc, "command", "command", COMMANDS, None)
    scene = _parse_scene(reader, doc)
    basis = _parse_basis(reader, doc)
    noise = reader.section(doc, "noise", "noise")
    output = reader.section(doc, "output", "output")
    methods = reader.choices(doc, "methods", "methods", SWEEP_METHODS, ("demux-exact",))
    threads = reader.integer(doc, "threads", "threads", 1)
    if threads < 1:
        reader.fail(f"threads must be at least 1, got {threads}", "threads")
    path = output.get("path")
    if path is not None and not isinstance(path, str):
        reader.fail(f"Expected a path string, got {path!r}", "output.path")
    log_level = doc.get("log_level")
    if log_level is not None and not isinstance(log_level, str):
        reader.fail(f"Expected a level name, got {log_level!r}", "log_level")
    return RunConfig(
        document=doc,
        command=command,
        scene=scene,
        misalignment=_parse_misalignment(reader, reader.section(doc, "misalignment", "misalignment"),
                                         "misalignment"),
        basis=basis,
        dark=_parse_dark(reader, reader.section(noise, "dark", "noise.dark"), "noise.dark", basis),
        crosstalk=_parse_crosstalk(reader, reader.section(noise, "crosstalk", "noise.crosstalk"), "noise.crosstalk"),
        x_values=_parse_sweep(reader, doc, scene.waist),
        methods=methods,
        covariance_form=reader.choice(doc, "covariance_form", "covariance_form", COVARIANCE_FORMS, "complete"),
        pixels=_parse_pixels(reader, doc),
        dmin=_parse_dmin(reader, doc),
        mc=_parse_mc(reader, doc),
        validation=_parse_validation(reader, doc, basis),
        output=OutputSpec(path, reader.choice(output, "format", "output.format", OUTPUT_FORMATS, "csv")),
        threads=threads,
        log_level=log_level,
    )


def load_config(path: str) -> RunConfig:
    """Read and validate a YAML or JSON configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"Cannot read configuration {path}: {exc}") from exc
    try:
        doc = yaml.load(text, Loader=_ConfigLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        if mark is None:
            raise ConfigError(f"Invalid configuration: {exc.problem}") from exc
        raise ConfigError(f"Invalid configuration: {exc.problem} (column {mark.column + 1})",
                          line=mark.line + 1) from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"Invalid configuration: {exc}") from exc
    if doc is None:
        raise ConfigError(f"Configuration {path} is empty")
    logger.debug(f"Loaded configuration from {path}")
    return parse_config(doc, text)


def apply_overrides(config: RunConfig, out: Optional[str] = None, fmt: Optional[str] = None,
                    threads: Optional[int] = None) -> RunConfig:
    """Apply flags, then the environment, on top of the document values."""
    path = out or OUT_PATH or config.output.path
    if fmt is not None and fmt not in OUTPUT_FORMATS:
        raise ConfigError(f"Unknown output format '{fmt}', expected one of {list(OUTPUT_FORMATS)}", field="format")
    output = OutputSpec(path, fmt or config.output.format)

    workers = config.threads
    if threads is not None:
        workers = threads
    elif THREADS is not None:
        try:
            workers = int(THREADS)
        except ValueError as exc:
            raise ConfigError(f"Expected an integer, got {THREADS!r}", field="SUPERRES_THREADS") from exc
    if workers < 1:
        raise ConfigError(f"Thread count must be at least 1, got {workers}", field="threads")
    return replace(config, output=output, threads=workers)
