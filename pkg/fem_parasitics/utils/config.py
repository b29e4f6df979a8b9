"""Run configuration: JSON files with ``config_version: 1``.

Example::

    {
        "config_version": 1,
        "mesh_path": "wire.msh",
        "materials": {"copper": {"sigma": 5.8e7}, "air": {}},
        "branches": [{"name": "wire", "terminal_a": "terminal:a", "terminal_b": "terminal:b"}],
        "formulation": "mqs",
        "conductor_model": "lossy",
        "boundary": "dual",
        "frequencies": {"f_min": 10, "f_max": 1e8, "points_per_decade": 5}
    }
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from fem_parasitics.constants import CONFIG_VERSION, MU0, PhysicalNames, RunDefaults, ValidationThresholds, WireDefaults
from fem_parasitics.core.mesh import Mesh
from fem_parasitics.extractor import ExtractionOptions
from fem_parasitics.models.data_models import (
    BoundaryKind,
    Branch,
    ConductorModel,
    Formulation,
    MaterialError,
    MaterialProps,
    MaterialTable,
    ProblemSpec,
    Stabilization,
    WireModel,
)

logger = logging.getLogger(__name__)

KNOWN_KEYS = {
    "config_version",
    "mesh_path",
    "materials",
    "branches",
    "formulation",
    "conductor_model",
    "boundary",
    "frequencies",
    "I0",
    "sigma_tilde",
    "f0_capacitance",
    "crossover_frequency",
    "stabilization",
    "compensation",
    "tree_root",
    "output",
    "wire",
    "thresholds",
    "sweep",
    "threads",
}
SWEEP_PARAMETERS = ("eps_r", "mu_r")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration.

    Attributes:
        key: The offending configuration key, if known.
    """

    def __init__(self, message, key=None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


@dataclass
class BranchConfig:
    name: str
    terminal_a: str
    terminal_b: str


@dataclass
class Thresholds:
    r_rel: float = ValidationThresholds.R_REL
    l_rel: float = ValidationThresholds.L_REL
    f_max_check: float = ValidationThresholds.F_MAX_CHECK


@dataclass
class SweepConfig:
    parameter: str
    material: str
    values: List[float]


@dataclass
class RunConfig:
    """Parsed configuration; names are resolved against a mesh on demand."""

    config_path: Path
    mesh_path: Optional[Path] = None
    materials: Dict[str, MaterialProps] = field(default_factory=dict)
    branches: List[BranchConfig] = field(default_factory=list)
    formulation: Formulation = Formulation.MQS
    conductor_model: ConductorModel = ConductorModel.LOSSY
    boundary: BoundaryKind = BoundaryKind.ELECTRIC
    frequencies: List[float] = field(default_factory=list)
    I0: float = RunDefaults.I0
    sigma_tilde: float = RunDefaults.SIGMA_TILDE
    f0_capacitance: float = RunDefaults.F0_CAPACITANCE
    crossover_frequency: float = RunDefaults.CROSSOVER_FREQUENCY
    stabilization: Stabilization = Stabilization.AUTO
    compensation: bool = True
    tree_root: int = 0
    output: Optional[str] = None
    wire: WireModel = field(default_factory=lambda: WireModel(WireDefaults.LENGTH, WireDefaults.RADIUS, WireDefaults.SIGMA))
    thresholds: Thresholds = field(default_factory=Thresholds)
    sweep: Optional[SweepConfig] = None
    threads: int = 1

    @property
    def is_pec_mqs(self) -> bool:
        return self.formulation is Formulation.MQS and self.conductor_model is ConductorModel.PEC

    def material_table(self, mesh: Mesh) -> MaterialTable:
        """Map material names to the mesh's volume tags."""
        regions: Dict[int, MaterialProps] = {}
        names: Dict[int, str] = {}
        volume_names = {name: tag for (dim, tag), name in mesh.physical_names.items() if dim == 3}
        for name, props in self.materials.items():
            if name not in volume_names:
                raise ConfigError(f"material '{name}' is not a volume physical group of the mesh (have {sorted(volume_names)})", key="materials")
            regions[volume_names[name]] = props
            names[volume_names[name]] = name
        table = MaterialTable(regions=regions, names=names)
        try:
            table.check_mesh(mesh.region_tags)
        except MaterialError as e:
            unnamed = [int(t) for t in mesh.region_tags if int(t) not in regions]
            labels = [mesh.physical_names.get((3, t), str(t)) for t in unnamed]
            raise MaterialError(f"{e} ({', '.join(labels)})") from e
        return table

    def resolve_branches(self, mesh: Mesh) -> List[Branch]:
        surfaces = {name: tag for (dim, tag), name in mesh.physical_names.items() if dim == 2}

        def resolve(name: str) -> int:
            for candidate in (name, PhysicalNames.TERMINAL_PREFIX + name):
                if candidate in surfaces:
                    return surfaces[candidate]
            raise ConfigError(f"terminal '{name}' is not a surface physical group of the mesh", key="branches")

        return [Branch(resolve(b.terminal_a), resolve(b.terminal_b), b.name) for b in self.branches]

    def problem_spec(self, mesh: Mesh) -> ProblemSpec:
        try:
            return ProblemSpec(
                formulation=self.formulation,
                conductor_model=self.conductor_model,
                branches=self.resolve_branches(mesh),
                frequencies=list(self.frequencies),
                boundary=self.boundary,
                I0=self.I0,
                sigma_tilde=self.sigma_tilde,
            )
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def extraction_options(self, threads: Optional[int] = None) -> ExtractionOptions:
        return ExtractionOptions(
            compensation=self.compensation,
            stabilization=self.stabilization,
            crossover_frequency=self.crossover_frequency,
            tree_root=self.tree_root,
            threads=threads if threads is not None else self.threads,
        )


def log_frequencies(f_min: float, f_max: float, points_per_decade: int = RunDefaults.POINTS_PER_DECADE) -> List[float]:
    """Log-spaced frequencies from f_min to f_max inclusive."""
    if not (0 < f_min <= f_max) or not math.isfinite(f_max):
        raise ConfigError(f"need 0 < f_min <= f_max, got f_min={f_min}, f_max={f_max}", key="frequencies")
    if points_per_decade < 1:
        raise ConfigError(f"points_per_decade must be >= 1, got {points_per_decade}", key="frequencies")
    decades = math.log10(f_max / f_min)
    count = max(1, int(round(decades * points_per_decade))) + 1 if decades > 0 else 1
    return [float(f) for f in np.logspace(math.log10(f_min), math.log10(f_max), count)]


def _enum(enum_cls, value, key):
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(m.value for m in enum_cls)
        raise ConfigError(f"'{value}' is not one of {choices}", key=key) from None


def _number(raw: Dict[str, Any], key: str, default: float, positive: bool = True) -> float:
    value = raw.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"expected a finite number, got {value!r}", key=key)
    if positive and value <= 0:
        raise ConfigError(f"must be > 0, got {value}", key=key)
    return float(value)


def _parse_frequencies(raw: Any, required: bool) -> List[float]:
    if raw is None:
        if required:
            raise ConfigError("missing frequency specification", key="frequencies")
        return []
    if isinstance(raw, list):
        if not raw:
            raise ConfigError("frequency list is empty", key="frequencies")
        try:
            freqs = [float(f) for f in raw]
        except (TypeError, ValueError):
            raise ConfigError(f"frequencies must be numbers, got {raw!r}", key="frequencies") from None
        if any(not math.isfinite(f) or f <= 0 for f in freqs):
            raise ConfigError(f"frequencies must be finite and > 0, got {freqs}", key="frequencies")
        return sorted(freqs)
    if isinstance(raw, dict):
        missing = {"f_min", "f_max"} - set(raw)
        if missing:
            raise ConfigError(f"log sweep needs {sorted(missing)}", key="frequencies")
        return log_frequencies(float(raw["f_min"]), float(raw["f_max"]), int(raw.get("points_per_decade", RunDefaults.POINTS_PER_DECADE)))
    raise ConfigError(f"expected a list or an object with f_min/f_max, got {type(raw).__name__}", key="frequencies")


def _parse_materials(raw: Any) -> Dict[str, MaterialProps]:
    if not isinstance(raw, dict):
        raise ConfigError("expected an object keyed by physical-group name", key="materials")
    materials = {}
    for name, entry in raw.items():
        entry = entry or {}
        unknown = set(entry) - {"sigma", "eps_r", "mu_r", "pec"}
        if unknown:
            raise ConfigError(f"material '{name}' has unknown keys {sorted(unknown)}", key="materials")
        try:
            materials[name] = MaterialProps(
                sigma=float(entry.get("sigma", 0.0)), eps_r=float(entry.get("eps_r", 1.0)), mu_r=float(entry.get("mu_r", 1.0)), pec=bool(entry.get("pec", False))
            )
        except MaterialError as e:
            raise ConfigError(f"material '{name}': {e}", key="materials") from e
    return materials


def _parse_branches(raw: Any) -> List[BranchConfig]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("expected a non-empty list", key="branches")
    branches = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict) or "terminal_a" not in entry or "terminal_b" not in entry:
            raise ConfigError(f"branch {i} needs terminal_a and terminal_b", key="branches")
        if entry["terminal_a"] == entry["terminal_b"]:
            raise ConfigError(f"branch {i} uses '{entry['terminal_a']}' for both terminals", key="branches")
        branches.append(BranchConfig(name=str(entry.get("name", i)), terminal_a=str(entry["terminal_a"]), terminal_b=str(entry["terminal_b"])))
    return branches


def _parse_wire(raw: Optional[Dict[str, Any]]) -> WireModel:
    raw = raw or {}
    try:
        return WireModel(
            length=_number(raw, "length", WireDefaults.LENGTH),
            radius=_number(raw, "radius", WireDefaults.RADIUS),
            sigma=_number(raw, "sigma", WireDefaults.SIGMA),
            mu=MU0 * _number(raw, "mu_r", 1.0),
        )
    except ValueError as e:
        raise ConfigError(str(e), key="wire") from e


def _parse_sweep(raw: Optional[Dict[str, Any]]) -> Optional[SweepConfig]:
    if raw is None:
        return None
    parameter = raw.get("parameter")
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"parameter must be one of {SWEEP_PARAMETERS}, got {parameter!r}", key="sweep")
    if "material" not in raw:
        raise ConfigError("missing 'material'", key="sweep")
    values = raw.get("values")
    if not isinstance(values, list) or not values or any(not isinstance(v, (int, float)) or v <= 0 for v in values):
        raise ConfigError(f"values must be a non-empty list of positive numbers, got {values!r}", key="sweep")
    return SweepConfig(parameter=parameter, material=str(raw["material"]), values=[float(v) for v in values])


def parse_run_config(raw: Dict[str, Any], config_path: Union[str, Path] = "config.json") -> RunConfig:
    """Validate a decoded configuration object."""
    config_path = Path(config_path)
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    if raw.get("config_version") != CONFIG_VERSION:
        raise ConfigError(f"expected {CONFIG_VERSION}, got {raw.get('config_version')!r}", key="config_version")
    for key in sorted(set(raw) - KNOWN_KEYS):
        logger.warning(f"{config_path}: ignoring unknown key '{key}'")

    mesh_path = None
    if raw.get("mesh_path"):
        mesh_path = Path(raw["mesh_path"])
        if not mesh_path.is_absolute():
            mesh_path = config_path.parent / mesh_path

    formulation = _enum(Formulation, raw.get("formulation", Formulation.MQS.value), "formulation")
    conductor_model = _enum(ConductorModel, raw.get("conductor_model", ConductorModel.LOSSY.value), "conductor_model")
    pec_mqs = formulation is Formulation.MQS and conductor_model is ConductorModel.PEC
    needs_mesh_inputs = mesh_path is not None

    thresholds_raw = raw.get("thresholds") or {}
    config = RunConfig(
        config_path=config_path,
        mesh_path=mesh_path,
        materials=_parse_materials(raw.get("materials", {})) if needs_mesh_inputs or "materials" in raw else {},
        branches=_parse_branches(raw.get("branches")) if needs_mesh_inputs or "branches" in raw else [],
        formulation=formulation,
        conductor_model=conductor_model,
        boundary=_enum(BoundaryKind, raw.get("boundary", BoundaryKind.ELECTRIC.value), "boundary"),
        frequencies=_parse_frequencies(raw.get("frequencies"), required=not pec_mqs and "sweep" not in raw),
        I0=_number(raw, "I0", RunDefaults.I0, positive=False),
        sigma_tilde=_number(raw, "sigma_tilde", RunDefaults.SIGMA_TILDE),
        f0_capacitance=_number(raw, "f0_capacitance", RunDefaults.F0_CAPACITANCE),
        crossover_frequency=_number(raw, "crossover_frequency", RunDefaults.CROSSOVER_FREQUENCY),
        stabilization=_enum(Stabilization, raw.get("stabilization", Stabilization.AUTO.value), "stabilization"),
        compensation=bool(raw.get("compensation", True)),
        tree_root=int(raw.get("tree_root", 0)),
        output=raw.get("output"),
        wire=_parse_wire(raw.get("wire")),
        thresholds=Thresholds(
            r_rel=_number(thresholds_raw, "r_rel", ValidationThresholds.R_REL),
            l_rel=_number(thresholds_raw, "l_rel", ValidationThresholds.L_REL),
            f_max_check=_number(thresholds_raw, "f_max_check", ValidationThresholds.F_MAX_CHECK),
        ),
        sweep=_parse_sweep(raw.get("sweep")),
        threads=int(raw.get("threads", 1)),
    )
    if config.I0 == 0:
        raise ConfigError("source amplitude must be nonzero", key="I0")
    if config.threads < 1:
        raise ConfigError(f"must be >= 1, got {config.threads}", key="threads")
    if config.tree_root < 0:
        raise ConfigError(f"must be >= 0, got {config.tree_root}", key="tree_root")
    return config


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """Read and validate a JSON run configuration.

    Raises:
        ConfigError: If the file is not valid JSON or violates the schema.
        OSError: If the file cannot be read.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path} is not valid JSON: {e}") from e
    return parse_run_config(raw, path)
