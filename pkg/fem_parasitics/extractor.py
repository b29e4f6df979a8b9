# fem_parasitics/extractor.py

"""Impedance extraction: source potential, compensation field, E-field, compensated potential, terminal voltages."""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from fem_parasitics.constants import GAUGE_COMPATIBILITY_TOL, MU0, RunDefaults
from fem_parasitics.core import elements
from fem_parasitics.core.assembly import AssembledOperator, DofSystem, GlobalMatrices, assemble, build_dof_system, operator_family, surface_load
from fem_parasitics.core.linsolve import Factorization, GaugedSystem, SolverError, gauge_tree_cotree, lf_stabilize, relative_residual, select_gauge
from fem_parasitics.core.mesh import Mesh, MeshError, select_surface
from fem_parasitics.models.data_models import (
    BoundaryKind,
    Branch,
    CapacitanceResult,
    ConductorModel,
    FieldSolution,
    Formulation,
    GaugeKind,
    MaterialTable,
    ProblemSpec,
    SourceAssembly,
    Stabilization,
    SurfaceSelection,
    SweepResult,
    split_dual,
)

logger = logging.getLogger(__name__)

CAPACITANCE_CONSISTENCY_TOL = 1e-6

EdgeSolver = Callable[[np.ndarray], np.ndarray]


class ExtractionError(ValueError):
    """The problem setup cannot be extracted as requested."""


@dataclass
class ExtractionOptions:
    """Numerical knobs of an extraction run."""

    compensation: bool = True
    stabilization: Stabilization = Stabilization.AUTO
    crossover_frequency: float = RunDefaults.CROSSOVER_FREQUENCY
    tree_root: int = 0
    threads: int = 1


# Per-boundary state; frequency-independent factorizations and fields are shared between threads.
@dataclass
class _BoundaryState:
    dofsys: DofSystem
    operators: Dict[str, Tuple[AssembledOperator, Factorization]] = field(default_factory=dict)
    xi: Dict[int, np.ndarray] = field(default_factory=dict)
    g: Dict[int, np.ndarray] = field(default_factory=dict)
    gauged: Dict[str, GaugedSystem] = field(default_factory=dict)
    lock: threading.RLock = field(default_factory=threading.RLock)


def surface_average(phi: np.ndarray, mesh: Mesh, surface: SurfaceSelection) -> complex:
    """Exact area average of a nodal P1 field over a tagged surface."""
    tri_nodes = mesh.boundary_tris[surface.tris]
    return complex(np.sum(surface.tri_areas * phi[tri_nodes].sum(axis=1)) / 3.0 / surface.area)


def terminal_voltage(phi_c: np.ndarray, mesh: Mesh, surface_a: SurfaceSelection, surface_b: SurfaceSelection) -> complex:
    """V = avg over T_b minus avg over T_a."""
    return surface_average(phi_c, mesh, surface_b) - surface_average(phi_c, mesh, surface_a)


def impedance_matrix(spec: ProblemSpec, voltages: np.ndarray, boundary: BoundaryKind, failed: Optional[np.ndarray] = None) -> SweepResult:
    """Z_ij = V_ij / I0 from voltages of shape (F, N, N), measured branch i, excited branch j."""
    voltages = np.asarray(voltages, dtype=complex)
    n = len(spec.branches)
    if voltages.shape[1:] != (n, n):
        raise ValueError(f"Voltages must have shape (F, {n}, {n}), got {voltages.shape}")
    return SweepResult(
        frequencies=np.asarray(spec.frequencies, dtype=float),
        impedance=voltages / spec.I0,
        branch_names=spec.branch_names,
        formulation=spec.formulation,
        conductor_model=spec.conductor_model,
        boundary=boundary,
        failed=np.zeros(len(spec.frequencies), dtype=bool) if failed is None else np.asarray(failed, dtype=bool),
    )


def dual_image(electric: SweepResult, magnetic: SweepResult) -> SweepResult:
    """Entrywise mean of an electric-boundary and a magnetic-boundary run."""
    if electric.impedance.shape != magnetic.impedance.shape or not np.array_equal(electric.frequencies, magnetic.frequencies):
        raise ValueError("Dual-image runs must share frequencies and branches")
    band = None
    if electric.band_inductance is not None and magnetic.band_inductance is not None:
        band = 0.5 * (electric.band_inductance + magnetic.band_inductance)
    return SweepResult(
        frequencies=electric.frequencies.copy(),
        impedance=0.5 * (electric.impedance + magnetic.impedance),
        branch_names=list(electric.branch_names),
        formulation=electric.formulation,
        conductor_model=electric.conductor_model,
        boundary=BoundaryKind.DUAL_IMAGE,
        failed=electric.failed | magnetic.failed,
        band_inductance=band,
    )


def edge_field_centroids(mesh: Mesh, edge_field: np.ndarray) -> np.ndarray:
    """Value of an edge field at every tet centroid, (T, 3)."""
    return elements.edge_field_at_centroid(mesh.nodes[mesh.sorted_tets], edge_field[mesh.tet_edges])


def edge_field_curls(mesh: Mesh, edge_field: np.ndarray) -> np.ndarray:
    """Per-tet curl of an edge field, (T, 3)."""
    return elements.curl_of_edge_field(mesh.nodes[mesh.sorted_tets], edge_field[mesh.tet_edges])


def mean_axial_current(mesh: Mesh, edge_field: np.ndarray, sigma_per_tet: np.ndarray, axis: int, lo: float, hi: float) -> complex:
    """Current along ``axis`` averaged over the slab lo < x_axis < hi.

    Tets are assigned to the slab by centroid; the slab should follow element layers.
    """
    centroids = mesh.nodes[mesh.tets].mean(axis=1)[:, axis]
    inside = (centroids > lo) & (centroids < hi)
    values = edge_field_centroids(mesh, edge_field)[:, axis]
    return complex(np.sum(sigma_per_tet[inside] * values[inside] * mesh.volumes[inside]) / (hi - lo))


class ImpedanceExtractor:
    """Extract the N x N impedance matrix of a tagged mesh over frequency.

    Each branch is excited in turn with I0 entering at terminal_b and leaving at
    terminal_a; the voltage of every branch is read from the compensated potential.
    """

    def __init__(self, mesh: Mesh, materials: MaterialTable, spec: ProblemSpec, options: Optional[ExtractionOptions] = None):
        """Initialize the extractor.

        Args:
            mesh: Mesh with the terminal surfaces tagged.
            materials: Material per region tag.
            spec: Formulation, conductor model, branches and frequencies.
            options: Numerical options; defaults when omitted.
        """
        materials.check_mesh(mesh.region_tags)
        self.mesh = mesh
        self.materials = materials
        self.spec = spec
        self.options = options or ExtractionOptions()
        self.matrices = GlobalMatrices(mesh, materials)
        self._states: Dict[BoundaryKind, _BoundaryState] = {}
        self._surfaces: Dict[int, SurfaceSelection] = {}
        self._lock = threading.RLock()
        self._conducting = materials.conducting_mask(mesh.tet_regions, spec.conductor_model)
        for branch in spec.branches:
            self.surface(branch.terminal_a)
            self.surface(branch.terminal_b)

    # -- setup ------------------------------------------------------------------

    def surface(self, tag: int) -> SurfaceSelection:
        with self._lock:
            if tag not in self._surfaces:
                try:
                    self._surfaces[tag] = select_surface(self.mesh, tag, self._conducting)
                except MeshError as e:
                    raise ExtractionError(f"Terminal surface {tag}: {e}") from e
            return self._surfaces[tag]

    def _default_boundary(self) -> BoundaryKind:
        return split_dual(self.spec.boundary)[0]

    def _state(self, boundary: Optional[BoundaryKind] = None) -> _BoundaryState:
        boundary = boundary or self._default_boundary()
        with self._lock:
            if boundary not in self._states:
                dofsys = build_dof_system(self.mesh, self.materials, boundary, self.spec.conductor_model, self.options.tree_root)
                self._states[boundary] = _BoundaryState(dofsys=dofsys)
            return self._states[boundary]

    def dof_system(self, boundary: Optional[BoundaryKind] = None) -> DofSystem:
        return self._state(boundary).dofsys

    def _static_operator(self, state: _BoundaryState, form: str) -> Tuple[AssembledOperator, Factorization]:
        with state.lock:
            if form not in state.operators:
                op = assemble(self.mesh, self.materials, state.dofsys, form, 0.0, self.spec.sigma_tilde, self.matrices)
                state.operators[form] = (op, Factorization(op, form))
            return state.operators[form]

    def _nodal_solve(self, op: AssembledOperator, factor: Factorization, rhs: np.ndarray) -> np.ndarray:
        return op.expand(factor.solve(op.restrict(rhs)))

    # -- sources ------------------------------------------------------------------

    def branch_load(self, branch: Branch) -> np.ndarray:
        """Nodal load of div J_s: +I0/A_a on T_a and -I0/A_b on T_b."""
        surface_a, surface_b = self.surface(branch.terminal_a), self.surface(branch.terminal_b)
        n = self.mesh.n_nodes
        return surface_load(n, self.mesh, surface_a, self.spec.I0 / surface_a.area) - surface_load(n, self.mesh, surface_b, self.spec.I0 / surface_b.area)

    def solve_xi(self, branch: Branch, boundary: Optional[BoundaryKind] = None) -> np.ndarray:
        """Source potential of the stationary current problem with conductivity sigma_tilde."""
        state = self._state(boundary)
        key = self.spec.branches.index(branch) if branch in self.spec.branches else None
        with state.lock:
            if key is not None and key in state.xi:
                return state.xi[key]
        op, factor = self._static_operator(state, "scalar_xi")
        xi = self._nodal_solve(op, factor, self.branch_load(branch))
        if key is not None:
            with state.lock:
                state.xi[key] = xi
        return xi

    def _zero_mean(self, state: _BoundaryState, g: np.ndarray) -> np.ndarray:
        # Without Gamma_el, g is fixed up to a constant; zero mean keeps the potential rhs compatible.
        if state.dofsys.has_gamma_el:
            return g
        mass = self.matrices.mass_nodal
        ones = np.ones(self.mesh.n_nodes)
        return g - (ones @ (mass @ g)) / (ones @ (mass @ ones))

    def solve_g(self, branch: Branch, frequency: float, boundary: Optional[BoundaryKind] = None, factor: Optional[Tuple[AssembledOperator, Factorization]] = None) -> np.ndarray:
        """Compensation field; frequency-independent except for the full-wave formulation."""
        state = self._state(boundary)
        load = -self.branch_load(branch)
        if self.spec.formulation is Formulation.FULL_WAVE:
            if factor is None:
                op = assemble(self.mesh, self.materials, state.dofsys, "scalar_g_fullwave", frequency, matrices=self.matrices)
                factor = (op, Factorization(op, "scalar_g_fullwave"))
            return self._zero_mean(state, self._nodal_solve(factor[0], factor[1], load))

        key = self.spec.branches.index(branch) if branch in self.spec.branches else None
        with state.lock:
            if key is not None and key in state.g:
                return state.g[key]
        op, fact = self._static_operator(state, "scalar_g_darwin")
        g = self._zero_mean(state, self._nodal_solve(op, fact, load))
        if key is not None:
            with state.lock:
                state.g[key] = g
        return g

    def assemble_source(self, branch: Branch, frequency: float, boundary: Optional[BoundaryKind] = None, g_factor=None) -> SourceAssembly:
        xi = self.solve_xi(branch, boundary) if self.spec.formulation is Formulation.FULL_WAVE else None
        g = self.solve_g(branch, frequency, boundary, g_factor)
        source = SourceAssembly(xi=xi, g=g, div_load=self.branch_load(branch))
        source.rhs_edge = self.build_E_rhs(source, frequency)
        return source

    def build_E_rhs(self, source: SourceAssembly, frequency: float, formulation: Optional[Formulation] = None) -> np.ndarray:
        """Edge right-hand side of the E-field problem (full length, Dirichlet entries included)."""
        formulation = formulation or self.spec.formulation
        iwmu = 1j * 2.0 * np.pi * frequency * MU0
        if formulation is Formulation.FULL_WAVE:
            if source.xi is None:
                raise ExtractionError("The full-wave right-hand side needs the source potential xi")
            return iwmu * self.spec.sigma_tilde * (self.matrices.mixed_grad_unit @ source.xi)
        return -iwmu * (self.matrices.mixed_grad_eps @ source.g)

    # -- field solves ------------------------------------------------------------------

    def _check_frequency(self, frequency: float) -> None:
        if frequency <= 0:
            raise ExtractionError(
                f"{self.spec.formulation.value} at {frequency} Hz is undefined; use extract_L_pec_mqs or extract_C_darwin_pec for the static limits"
            )

    def _edge_form(self) -> str:
        return {Formulation.FULL_WAVE: "efield_fullwave", Formulation.MQS: "efield_mqs", Formulation.DARWIN: "darwin_block"}[self.spec.formulation]

    def gauge_for(self, frequency: float) -> GaugeKind:
        return select_gauge(self.spec.formulation, frequency, self.mesh.h_max, self.options.stabilization, self.options.crossover_frequency)

    def _edge_solver(self, state: _BoundaryState, frequency: float) -> EdgeSolver:
        """Factorized E (or Darwin block) operator at ``frequency`` as a rhs -> solution map on free dofs."""
        family = operator_family(self.mesh, self.materials, state.dofsys, self._edge_form(), frequency, matrices=self.matrices)
        gauge = self.gauge_for(frequency)
        logger.debug(f"{family.form} at {frequency:g} Hz: gauge {gauge.value}")
        if gauge is GaugeKind.LF_SCALED:
            system = lf_stabilize(family, state.dofsys)
            system.factorize(family.form)
            return system.solve
        operator = family.assemble()
        if gauge is GaugeKind.TREE_COTREE:
            system = gauge_tree_cotree(operator, state.dofsys)
            system.factorize(family.form)
            return system.solve
        return Factorization(operator, family.form).solve

    def solve_E(self, source: SourceAssembly, frequency: float, boundary: Optional[BoundaryKind] = None, solver: Optional[EdgeSolver] = None) -> np.ndarray:
        """E-field on all edges; zero on Dirichlet edges (Gamma_el and PEC regions)."""
        if self.spec.formulation is Formulation.DARWIN:
            raise ExtractionError("Darwin couples E and phi_c; use solve_darwin")
        self._check_frequency(frequency)
        state = self._state(boundary)
        solver = solver or self._edge_solver(state, frequency)
        free = state.dofsys.free_edges
        rhs = source.rhs_edge if source.rhs_edge is not None else self.build_E_rhs(source, frequency)
        e_field = np.zeros(self.mesh.n_edges, dtype=complex)
        e_field[free] = solver(rhs[free])
        return e_field

    def phi_c_rhs(self, e_field: np.ndarray, g: np.ndarray, frequency: float, scaled: bool = False) -> np.ndarray:
        """-(eps_r E, grad v) + i w mu0 (g, v); with ``scaled`` the i w factor is divided out."""
        rhs = -(self.matrices.mixed_grad_eps.T @ e_field)
        if self.options.compensation:
            factor = MU0 if scaled else 1j * 2.0 * np.pi * frequency * MU0
            rhs = rhs + factor * (self.matrices.mass_nodal @ g)
        return rhs

    def solve_phi_c(
        self, e_field: np.ndarray, g: np.ndarray, frequency: float, boundary: Optional[BoundaryKind] = None, factor: Optional[Tuple[AssembledOperator, Factorization]] = None
    ) -> np.ndarray:
        """Compensated scalar potential for a given E and g."""
        state = self._state(boundary)
        if factor is None:
            if self.spec.formulation is Formulation.FULL_WAVE:
                op = assemble(self.mesh, self.materials, state.dofsys, "scalar_phic_fullwave", frequency, matrices=self.matrices)
                factor = (op, Factorization(op, "scalar_phic_fullwave"))
            else:
                factor = self._static_operator(state, "scalar_phic_mqs")
        return self._nodal_solve(factor[0], factor[1], self.phi_c_rhs(e_field, g, frequency))

    def solve_darwin(self, source: SourceAssembly, frequency: float, boundary: Optional[BoundaryKind] = None, solver: Optional[EdgeSolver] = None) -> FieldSolution:
        """Monolithic Darwin solve for (E, phi_c)."""
        if self.spec.formulation is not Formulation.DARWIN:
            raise ExtractionError(f"solve_darwin needs the Darwin formulation, got {self.spec.formulation.value}")
        self._check_frequency(frequency)
        state = self._state(boundary)
        solver = solver or self._edge_solver(state, frequency)
        fe, fn = state.dofsys.free_edges, state.dofsys.free_nodes
        rhs_edge = source.rhs_edge if source.rhs_edge is not None else self.build_E_rhs(source, frequency)
        rhs_nodal = np.zeros(self.mesh.n_nodes, dtype=complex)
        if self.options.compensation:
            rhs_nodal = 1j * 2.0 * np.pi * frequency * MU0 * (self.matrices.mass_nodal @ source.g)
        x = solver(np.concatenate([rhs_edge[fe], rhs_nodal[fn]]))
        e_field = np.zeros(self.mesh.n_edges, dtype=complex)
        phi_c = np.zeros(self.mesh.n_nodes, dtype=complex)
        e_field[fe] = x[: len(fe)]
        phi_c[fn] = x[len(fe):]
        return FieldSolution(E=e_field, phi_c=phi_c, frequency=frequency, formulation=Formulation.DARWIN, compensation_applied=self.options.compensation)

    def solve_fields(self, branch: Branch, frequency: float, boundary: Optional[BoundaryKind] = None) -> FieldSolution:
        """E and phi_c for one branch excitation at one frequency."""
        if self.spec.is_pec_mqs:
            return self._scaled_pec_fields(self._state(boundary), branch)
        self._check_frequency(frequency)
        source = self.assemble_source(branch, frequency, boundary)
        if self.spec.formulation is Formulation.DARWIN:
            return self.solve_darwin(source, frequency, boundary)
        e_field = self.solve_E(source, frequency, boundary)
        phi_c = self.solve_phi_c(e_field, source.g, frequency, boundary)
        return FieldSolution(E=e_field, phi_c=phi_c, frequency=frequency, formulation=self.spec.formulation, compensation_applied=self.options.compensation)

    def branch_voltage(self, phi_c: np.ndarray, branch: Branch) -> complex:
        return terminal_voltage(phi_c, self.mesh, self.surface(branch.terminal_a), self.surface(branch.terminal_b))

    # -- sweeps --------------------------------------------------------------------------

    def prepare(self, boundary: Optional[BoundaryKind] = None) -> None:
        """Build the frequency-independent matrices, factorizations and fields of a boundary kind."""
        self.matrices.prepare()
        state = self._state(boundary)
        for branch in self.spec.branches:
            if self.spec.formulation is Formulation.FULL_WAVE:
                self.solve_xi(branch, boundary)
            else:
                self.solve_g(branch, 0.0, boundary)
        if self.spec.formulation is Formulation.MQS:
            self._static_operator(state, "scalar_phic_mqs")

    def _frequency_voltages(self, state: _BoundaryState, boundary: BoundaryKind, frequency: float) -> np.ndarray:
        """N x N voltages at one frequency: column j is the excitation of branch j."""
        self._check_frequency(frequency)
        solver = self._edge_solver(state, frequency)
        scalar_factor = None
        if self.spec.formulation is Formulation.FULL_WAVE:
            op = assemble(self.mesh, self.materials, state.dofsys, "scalar_g_fullwave", frequency, matrices=self.matrices)
            scalar_factor = (op, Factorization(op, "scalar_g_fullwave"))
        elif self.spec.formulation is Formulation.MQS:
            scalar_factor = self._static_operator(state, "scalar_phic_mqs")

        branches = self.spec.branches
        voltages = np.zeros((len(branches), len(branches)), dtype=complex)
        for j, branch in enumerate(branches):
            g_factor = scalar_factor if self.spec.formulation is Formulation.FULL_WAVE else None
            source = self.assemble_source(branch, frequency, boundary, g_factor)
            if self.spec.formulation is Formulation.DARWIN:
                phi_c = self.solve_darwin(source, frequency, boundary, solver).phi_c
            else:
                e_field = self.solve_E(source, frequency, boundary, solver)
                phi_c = self.solve_phi_c(e_field, source.g, frequency, boundary, scalar_factor)
            for i, measured in enumerate(branches):
                voltages[i, j] = self.branch_voltage(phi_c, measured)
        return voltages

    def _sweep(self, boundary: BoundaryKind) -> SweepResult:
        if not self.spec.frequencies:
            raise ExtractionError(f"No frequencies to sweep for {self.spec.formulation.value}-{self.spec.conductor_model.value}")
        state = self._state(boundary)
        self.prepare(boundary)
        n = len(self.spec.branches)

        def run_one(frequency: float) -> Tuple[np.ndarray, bool]:
            try:
                return self._frequency_voltages(state, boundary, frequency), False
            except SolverError as e:
                logger.error(f"{boundary.value} boundary, {frequency:g} Hz failed: {e}")
                return np.full((n, n), np.nan + 1j * np.nan), True

        threads = max(1, int(self.options.threads))
        if threads == 1:
            outcomes = [run_one(f) for f in self.spec.frequencies]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outcomes = list(pool.map(run_one, self.spec.frequencies))
        voltages = np.array([v for v, _ in outcomes]).reshape(len(outcomes), n, n)
        failed = np.array([bad for _, bad in outcomes], dtype=bool)
        return impedance_matrix(self.spec, voltages, boundary, failed)

    def run(self) -> SweepResult:
        """Extract the impedance matrix for every frequency, averaging boundaries for dual image."""
        logger.info(
            f"Extracting {len(self.spec.branches)} branch(es), {len(self.spec.frequencies)} frequency point(s), "
            f"{self.spec.formulation.value}-{self.spec.conductor_model.value}, {self.spec.boundary.value} boundary"
        )
        results = []
        for boundary in split_dual(self.spec.boundary):
            if self.spec.is_pec_mqs:
                results.append(self._pec_mqs_result(boundary))
            else:
                results.append(self._sweep(boundary))
        if len(results) == 2:
            return dual_image(*results)
        return results[0]

    # -- static limits ----------------------------------------------------------------------

    def _check_pec_only(self) -> None:
        sigma = self.materials.per_tet(self.mesh.tet_regions, "sigma")
        lossy = (sigma > 0) & ~self.materials.pec_mask(self.mesh.tet_regions)
        if lossy.any():
            tags = sorted(set(self.mesh.tet_regions[lossy].tolist()))
            raise ExtractionError(f"The MQS-PEC scaled system is frequency-independent only without lossy regions; regions {tags} have sigma > 0 and no pec flag")

    def _scaled_pec_fields(self, state: _BoundaryState, branch: Branch) -> FieldSolution:
        """E' = E/(i w) and phi_c' = phi_c/(i w) from the real MQS-PEC system."""
        self._check_pec_only()
        with state.lock:
            if "scaled_pec" not in state.gauged:
                operator = operator_family(self.mesh, self.materials, state.dofsys, "efield_mqs", 0.0, matrices=self.matrices).assemble()
                system = gauge_tree_cotree(operator, state.dofsys)
                system.factorize("scaled MQS-PEC curl-curl")
                state.gauged["scaled_pec"] = system
            system = state.gauged["scaled_pec"]
        g = self.solve_g(branch, 0.0, state.dofsys.boundary)
        free = state.dofsys.free_edges
        rhs = -MU0 * (self.matrices.mixed_grad_eps @ g)
        e_scaled = np.zeros(self.mesh.n_edges)
        e_scaled[free] = np.real(system.solve(rhs[free]))
        dropped = relative_residual(system.base, e_scaled[free], rhs[free])
        if dropped > GAUGE_COMPATIBILITY_TOL:
            logger.warning(
                f"Branch {branch.name or branch.terminal_a}: MQS-PEC source is not compatible with the gauged system "
                f"(residual {dropped:.2e}); terminals on separate conductors have no inductive path"
            )
        op, factor = self._static_operator(state, "scalar_phic_mqs")
        phi_scaled = self._nodal_solve(op, factor, self.phi_c_rhs(e_scaled, g, 0.0, scaled=True)).real
        return FieldSolution(E=e_scaled, phi_c=phi_scaled, frequency=0.0, formulation=Formulation.MQS, compensation_applied=self.options.compensation, scaled=True)

    def _band_inductance(self, boundary: BoundaryKind) -> np.ndarray:
        state = self._state(boundary)
        branches = self.spec.branches
        inductance = np.zeros((len(branches), len(branches)))
        for j, branch in enumerate(branches):
            phi_scaled = self._scaled_pec_fields(state, branch).phi_c
            for i, measured in enumerate(branches):
                inductance[i, j] = self.branch_voltage(phi_scaled, measured).real / self.spec.I0
        return inductance

    def _pec_mqs_result(self, boundary: BoundaryKind) -> SweepResult:
        inductance = self._band_inductance(boundary)
        freqs = np.asarray(self.spec.frequencies, dtype=float)
        impedance = 1j * 2.0 * np.pi * freqs[:, None, None] * inductance[None, :, :]
        return SweepResult(
            frequencies=freqs,
            impedance=impedance,
            branch_names=self.spec.branch_names,
            formulation=self.spec.formulation,
            conductor_model=self.spec.conductor_model,
            boundary=boundary,
            band_inductance=inductance,
        )

    def extract_L_pec_mqs(self) -> np.ndarray:
        """High-frequency inductance matrix in H from the real, frequency-independent MQS-PEC system."""
        boundaries = split_dual(self.spec.boundary)
        return sum(self._band_inductance(b) for b in boundaries) / len(boundaries)

    def extract_C_darwin_pec(self, f0: float = RunDefaults.F0_CAPACITANCE, branch_index: int = 0) -> CapacitanceResult:
        """Capacitance C = -1/(2 pi f0 X(f0)) of a branch from a Darwin-PEC run.

        The run also evaluates f0/2; e_X compares the reactance there with the
        pure-capacitance model fitted at f0.
        """
        if f0 <= 0:
            raise ExtractionError(f"Test frequency must be > 0, got {f0}")
        spec = replace(self.spec, formulation=Formulation.DARWIN, conductor_model=ConductorModel.PEC, frequencies=[0.5 * f0, f0])
        result = ImpedanceExtractor(self.mesh, self.materials, spec, self.options).run()
        if result.any_failed:
            raise SolverError(f"Darwin-PEC solve failed at {result.frequencies[result.failed].tolist()} Hz")
        reactance = result.reactance()[:, branch_index, branch_index]
        x0 = float(reactance[1])
        if x0 >= 0:
            raise ExtractionError(f"Reactance at {f0:g} Hz is {x0:.4g} ohm; the branch is not capacitive")
        capacitance = -1.0 / (2.0 * np.pi * f0 * x0)
        e_x = {}
        for f, x in zip(result.frequencies, reactance):
            x_c = -1.0 / (2.0 * np.pi * f * capacitance)
            e_x[float(f)] = float(abs((x - x_c) / x))
        worst = max(e_x.values())
        if worst > CAPACITANCE_CONSISTENCY_TOL:
            logger.warning(f"Capacitance self-consistency e_X = {worst:.2e} above {CAPACITANCE_CONSISTENCY_TOL:g}; lower f0 (now {f0:g} Hz)")
        logger.info(f"C = {capacitance:.6g} F at f0 = {f0:g} Hz (e_X max {worst:.2e})")
        return CapacitanceResult(capacitance=capacitance, f0=f0, reactance=x0, e_x=e_x)
