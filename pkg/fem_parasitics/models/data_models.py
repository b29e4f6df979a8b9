import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from fem_parasitics.constants import MU0, RunDefaults

logger = logging.getLogger(__name__)


class Formulation(Enum):
    """Maxwell approximation used for the E-field solve."""

    FULL_WAVE = "fullwave"
    DARWIN = "darwin"
    MQS = "mqs"


class ConductorModel(Enum):
    LOSSY = "lossy"
    PEC = "pec"


class BoundaryKind(Enum):
    """Outer boundary condition.

    ELECTRIC puts all of the outer boundary on Gamma_el, MAGNETIC leaves it natural,
    MIXED uses the surface named ``gamma_el`` and DUAL_IMAGE averages the electric
    and magnetic runs.
    """

    ELECTRIC = "electric"
    MAGNETIC = "magnetic"
    DUAL_IMAGE = "dual"
    MIXED = "mixed"


class Stabilization(Enum):
    AUTO = "auto"
    ALWAYS = "always"
    NEVER = "never"


class GaugeKind(Enum):
    NONE = "none"
    TREE_COTREE = "tree_cotree_nonconducting"
    LF_SCALED = "lf_scaled"


class MaterialError(ValueError):
    """Raised when a region has no material or a material is not physical."""


@dataclass(frozen=True)
class MaterialProps:
    """Electromagnetic properties of one mesh region."""

    sigma: float = 0.0  # S/m
    eps_r: float = 1.0
    mu_r: float = 1.0
    pec: bool = False

    def __post_init__(self):
        if self.sigma < 0:
            raise MaterialError(f"sigma must be >= 0, got {self.sigma}")
        if self.eps_r <= 0:
            raise MaterialError(f"eps_r must be > 0, got {self.eps_r}")
        if self.mu_r <= 0 or not math.isfinite(1.0 / self.mu_r):
            raise MaterialError(f"mu_r must be > 0, got {self.mu_r}")

    @property
    def nu_r(self) -> float:
        return 1.0 / self.mu_r


@dataclass
class MaterialTable:
    """Materials keyed by region tag."""

    regions: Dict[int, MaterialProps]
    names: Dict[int, str] = field(default_factory=dict)

    def check_mesh(self, region_tags) -> None:
        missing = sorted(set(int(t) for t in region_tags) - set(self.regions))
        if missing:
            raise MaterialError(f"No material assigned to region tag(s) {missing}")

    def per_tet(self, tet_regions: np.ndarray, attribute: str) -> np.ndarray:
        """Return ``attribute`` of every tet's material as a float array."""
        self.check_mesh(np.unique(tet_regions))
        lookup = {tag: float(getattr(props, attribute)) for tag, props in self.regions.items()}
        return np.array([lookup[int(tag)] for tag in tet_regions], dtype=float)

    def pec_mask(self, tet_regions: np.ndarray) -> np.ndarray:
        self.check_mesh(np.unique(tet_regions))
        pec_tags = [tag for tag, props in self.regions.items() if props.pec]
        return np.isin(tet_regions, pec_tags)

    def conducting_mask(self, tet_regions: np.ndarray, model: "ConductorModel") -> np.ndarray:
        """Tets belonging to Omega_c under the given conductor model."""
        sigma = self.per_tet(tet_regions, "sigma")
        if model is ConductorModel.PEC:
            return self.pec_mask(tet_regions) | (sigma > 0)
        return sigma > 0

    def with_override(self, tag: int, **changes) -> "MaterialTable":
        """Return a copy with the material of ``tag`` changed."""
        if tag not in self.regions:
            raise MaterialError(f"Region tag {tag} has no material to override")
        regions = dict(self.regions)
        regions[tag] = replace(regions[tag], **changes)
        return MaterialTable(regions=regions, names=dict(self.names))


@dataclass(frozen=True)
class Branch:
    """Ordered terminal pair; current enters at terminal_b and leaves at terminal_a."""

    terminal_a: int
    terminal_b: int
    name: str = ""

    def __post_init__(self):
        if self.terminal_a == self.terminal_b:
            raise ValueError(f"Branch '{self.name}' uses surface {self.terminal_a} for both terminals")


@dataclass
class ProblemSpec:
    formulation: Formulation
    conductor_model: ConductorModel
    branches: List[Branch]
    frequencies: List[float]
    boundary: BoundaryKind = BoundaryKind.ELECTRIC
    I0: float = RunDefaults.I0
    sigma_tilde: float = RunDefaults.SIGMA_TILDE

    def __post_init__(self):
        if not self.branches:
            raise ValueError("At least one branch is required")
        if self.I0 == 0:
            raise ValueError("Source amplitude I0 must be nonzero")
        if self.sigma_tilde <= 0:
            raise ValueError(f"sigma_tilde must be > 0, got {self.sigma_tilde}")
        freqs = [float(f) for f in self.frequencies]
        if any(f <= 0 or not math.isfinite(f) for f in freqs):
            raise ValueError(f"Frequencies must be finite and > 0, got {freqs}")
        self.frequencies = sorted(freqs)

    @property
    def branch_names(self) -> List[str]:
        return [b.name or str(i) for i, b in enumerate(self.branches)]

    @property
    def is_pec_mqs(self) -> bool:
        return self.formulation is Formulation.MQS and self.conductor_model is ConductorModel.PEC


@dataclass
class SurfaceSelection:
    """A tagged surface with outward normals pointing out of the adjacent conductor."""

    tag: int
    tris: np.ndarray  # indices into Mesh.boundary_tris
    area: float  # m^2
    normals: np.ndarray  # (n_tris, 3) unit vectors
    tri_areas: np.ndarray


@dataclass
class SourceAssembly:
    """Source quantities of one branch at one frequency."""

    xi: Optional[np.ndarray]  # full-wave only
    g: np.ndarray
    div_load: np.ndarray
    rhs_edge: Optional[np.ndarray] = None


@dataclass
class FieldSolution:
    E: np.ndarray
    phi_c: np.ndarray
    frequency: float
    formulation: Formulation
    compensation_applied: bool = True
    scaled: bool = False  # True when E and phi_c are divided by i*omega


@dataclass
class SweepResult:
    """Impedance matrices over frequency.

    ``impedance`` has shape (n_frequencies, N, N). The frequency-independent MQS-PEC
    path leaves ``frequencies`` empty and fills ``band_inductance`` instead.
    """

    frequencies: np.ndarray
    impedance: np.ndarray
    branch_names: List[str]
    formulation: Formulation
    conductor_model: ConductorModel
    boundary: BoundaryKind
    failed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    band_inductance: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.failed.size != self.frequencies.size:
            self.failed = np.zeros(self.frequencies.size, dtype=bool)

    @property
    def n_branches(self) -> int:
        return len(self.branch_names)

    @property
    def inf_band(self) -> bool:
        return self.band_inductance is not None

    @property
    def omega(self) -> np.ndarray:
        return 2.0 * np.pi * self.frequencies[:, None, None]

    def resistance(self) -> np.ndarray:
        return self.impedance.real

    def reactance(self) -> np.ndarray:
        return self.impedance.imag

    def inductance(self) -> np.ndarray:
        if self.inf_band and self.frequencies.size == 0:
            return self.band_inductance[None, :, :]
        return self.reactance() / self.omega

    def capacitance(self) -> np.ndarray:
        """Entrywise -1/(omega X); NaN where the reactance is not capacitive."""
        x = self.reactance()
        with np.errstate(divide="ignore", invalid="ignore"):
            c = -1.0 / (self.omega * x)
        return np.where(x < 0, c, np.nan)

    @property
    def any_failed(self) -> bool:
        return bool(self.failed.any())


@dataclass
class CapacitanceResult:
    capacitance: float  # F
    f0: float
    reactance: float  # X_FE(f0)
    e_x: Dict[float, float] = field(default_factory=dict)  # frequency -> relative error


@dataclass
class WireModel:
    """Straight round wire used by the analytic oracle."""

    length: float  # m
    radius: float  # m
    sigma: float  # S/m
    mu: float = MU0  # H/m

    def __post_init__(self):
        for name in ("length", "radius", "sigma", "mu"):
            if getattr(self, name) <= 0:
                raise ValueError(f"WireModel.{name} must be positive, got {getattr(self, name)}")
        if self.length / self.radius < 10:
            logger.warning(f"Wire l/r = {self.length / self.radius:.3g} < 10; external inductance formula loses accuracy")

    @property
    def cross_section(self) -> float:
        return math.pi * self.radius**2


def split_dual(boundary: BoundaryKind) -> Tuple[BoundaryKind, ...]:
    """Boundary kinds that have to be solved for ``boundary``."""
    if boundary is BoundaryKind.DUAL_IMAGE:
        return (BoundaryKind.ELECTRIC, BoundaryKind.MAGNETIC)
    return (boundary,)


@dataclass
class WireComparison:
    """Finite-element and analytic wire impedance at one frequency."""

    frequency: float
    z_ana: complex
    z_fe: Optional[complex] = None

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.frequency

    @property
    def r_rel_err(self) -> Optional[float]:
        if self.z_fe is None:
            return None
        return abs(self.z_fe.real - self.z_ana.real) / abs(self.z_ana.real)

    @property
    def l_rel_err(self) -> Optional[float]:
        if self.z_fe is None:
            return None
        return abs(self.z_fe.imag - self.z_ana.imag) / abs(self.z_ana.imag)


@dataclass
class SweepPoint:
    """Extracted C or L at one material parameter value."""

    parameter: str  # eps_r | mu_r
    value: float
    quantity: str  # capacitance_farad | inductance_henry
    extracted: float

    @property
    def normalized(self) -> float:
        return self.extracted / self.value


def saturation(points: List[SweepPoint]) -> Optional[float]:
    """Relative change of the normalized quantity between the last two values."""
    if len(points) < 2:
        return None
    prev, last = points[-2].normalized, points[-1].normalized
    return abs(last - prev) / abs(prev)
