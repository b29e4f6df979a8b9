"""Global sparse assembly, degree-of-freedom bookkeeping and boundary conditions."""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional

import numpy as np
from scipy import sparse

from fem_parasitics.constants import C0, MU0, PhysicalNames
from fem_parasitics.core import elements
from fem_parasitics.core.mesh import EdgePartition, Mesh, MeshError, build_spanning_tree
from fem_parasitics.models.data_models import BoundaryKind, ConductorModel, MaterialTable, SurfaceSelection

logger = logging.getLogger(__name__)

FORMS = (
    "scalar_xi",
    "scalar_g_fullwave",
    "scalar_g_darwin",
    "efield_fullwave",
    "efield_mqs",
    "scalar_phic_fullwave",
    "scalar_phic_mqs",
    "darwin_block",
)


def wavenumber_sq(frequency: float) -> float:
    """(omega / c)^2 in 1/m^2."""
    return (2.0 * np.pi * frequency / C0) ** 2


@dataclass(frozen=True, eq=False)
class DofSystem:
    """Nodal and edge unknowns of a mesh with their Dirichlet masks.

    Nodes and edges are numbered as in the mesh. ``dirichlet_edge`` holds the
    tangential-E constraints on Gamma_el and, in PEC mode, on every edge of a PEC
    region, so that E is solved in the non-conducting part only.
    """

    mesh: Mesh
    boundary: BoundaryKind
    conductor_model: ConductorModel
    gamma_el_nodes: np.ndarray
    gamma_el_edges: np.ndarray
    pec_edges: np.ndarray
    conducting_tets: np.ndarray
    conducting_edges: np.ndarray
    pinned_node: Optional[int] = None
    tree_root: int = 0

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_nodes

    @property
    def n_edges(self) -> int:
        return self.mesh.n_edges

    @cached_property
    def dirichlet_nodal(self) -> np.ndarray:
        mask = self.gamma_el_nodes.copy()
        if self.pinned_node is not None:
            mask[self.pinned_node] = True
        return mask

    @cached_property
    def dirichlet_edge(self) -> np.ndarray:
        return self.gamma_el_edges | self.pec_edges

    @cached_property
    def free_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.dirichlet_nodal)

    @cached_property
    def free_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.dirichlet_edge)

    @property
    def has_gamma_el(self) -> bool:
        return bool(self.gamma_el_nodes.any())

    @cached_property
    def tree_cotree(self) -> EdgePartition:
        return build_spanning_tree(self.mesh, root=self.tree_root)


def build_dof_system(
    mesh: Mesh,
    materials: MaterialTable,
    boundary: BoundaryKind = BoundaryKind.ELECTRIC,
    conductor_model: ConductorModel = ConductorModel.LOSSY,
    tree_root: int = 0,
) -> DofSystem:
    """Build the dof masks for one boundary kind and conductor model.

    ``BoundaryKind.DUAL_IMAGE`` is not a single boundary condition; callers split
    it into an electric and a magnetic run first.
    """
    materials.check_mesh(mesh.region_tags)
    if boundary is BoundaryKind.ELECTRIC:
        faces = mesh.outer_faces
    elif boundary is BoundaryKind.MAGNETIC:
        faces = np.zeros((0, 3), dtype=np.int64)
    elif boundary is BoundaryKind.MIXED:
        if not mesh.has_surface(PhysicalNames.GAMMA_EL):
            raise MeshError(f"The mixed boundary needs an outer surface named '{PhysicalNames.GAMMA_EL}'")
        tag = mesh.tag_of(PhysicalNames.GAMMA_EL, 2)
        faces = mesh.boundary_tris[mesh.surface_tris(tag)]
    else:
        raise ValueError(f"Boundary {boundary.value!r} must be split into electric and magnetic runs")

    gamma_el_nodes = np.zeros(mesh.n_nodes, dtype=bool)
    gamma_el_nodes[faces.ravel()] = True
    gamma_el_edges = np.zeros(mesh.n_edges, dtype=bool)
    if len(faces):
        gamma_el_edges[mesh.tri_edges(faces).ravel()] = True

    conducting_tets = materials.conducting_mask(mesh.tet_regions, conductor_model)
    conducting_edges = np.zeros(mesh.n_edges, dtype=bool)
    conducting_edges[mesh.tet_edges[conducting_tets].ravel()] = True
    pec_edges = np.zeros(mesh.n_edges, dtype=bool)
    if conductor_model is ConductorModel.PEC:
        pec_tets = materials.pec_mask(mesh.tet_regions)
        pec_edges[mesh.tet_edges[pec_tets].ravel()] = True

    if not 0 <= tree_root < mesh.n_nodes:
        raise MeshError(f"Tree root {tree_root} is not a node of the mesh")
    pinned = None if gamma_el_nodes.any() else 0
    dofsys = DofSystem(
        mesh=mesh,
        boundary=boundary,
        conductor_model=conductor_model,
        gamma_el_nodes=gamma_el_nodes,
        gamma_el_edges=gamma_el_edges,
        pec_edges=pec_edges,
        conducting_tets=conducting_tets,
        conducting_edges=conducting_edges,
        pinned_node=pinned,
        tree_root=tree_root,
    )
    logger.debug(
        f"Dofs ({boundary.value}, {conductor_model.value}): {len(dofsys.free_nodes)}/{mesh.n_nodes} free nodes, "
        f"{len(dofsys.free_edges)}/{mesh.n_edges} free edges, pinned node {pinned}"
    )
    return dofsys


# -- global matrices --------------------------------------------------------------


def _scatter(row_idx: np.ndarray, col_idx: np.ndarray, local: np.ndarray, shape) -> sparse.csr_matrix:
    rows = np.broadcast_to(row_idx[:, :, None], local.shape).ravel()
    cols = np.broadcast_to(col_idx[:, None, :], local.shape).ravel()
    mat = sparse.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()
    mat.eliminate_zeros()
    return mat


class GlobalMatrices:
    """Real global matrices of one mesh and material table, built on first use."""

    def __init__(self, mesh: Mesh, materials: MaterialTable):
        materials.check_mesh(mesh.region_tags)
        self.mesh = mesh
        self.materials = materials
        self._coords = mesh.nodes[mesh.sorted_tets]

    def _coefficient(self, attribute: str) -> np.ndarray:
        return self.materials.per_tet(self.mesh.tet_regions, attribute)

    def _nodal(self, local: np.ndarray) -> sparse.csr_matrix:
        t = self.mesh.sorted_tets
        return _scatter(t, t, local, (self.mesh.n_nodes, self.mesh.n_nodes))

    def _edge(self, local: np.ndarray) -> sparse.csr_matrix:
        e = self.mesh.tet_edges
        return _scatter(e, e, local, (self.mesh.n_edges, self.mesh.n_edges))

    @cached_property
    def stiffness_unit(self) -> sparse.csr_matrix:
        return self._nodal(elements.elem_scalar_stiffness(self._coords))

    @cached_property
    def stiffness_eps(self) -> sparse.csr_matrix:
        return self._nodal(elements.elem_scalar_stiffness(self._coords, self._coefficient("eps_r")))

    @cached_property
    def mass_nodal(self) -> sparse.csr_matrix:
        return self._nodal(elements.elem_scalar_mass(self._coords))

    @cached_property
    def edge_mass_eps(self) -> sparse.csr_matrix:
        return self._edge(elements.elem_edge_mass(self._coords, self._coefficient("eps_r")))

    @cached_property
    def edge_mass_sigma(self) -> sparse.csr_matrix:
        return self._edge(elements.elem_edge_mass(self._coords, self._coefficient("sigma")))

    @cached_property
    def curl_curl(self) -> sparse.csr_matrix:
        return self._edge(elements.elem_curl_curl(self._coords, 1.0 / self._coefficient("mu_r")))

    @cached_property
    def mixed_grad_eps(self) -> sparse.csr_matrix:
        return _scatter(self.mesh.tet_edges, self.mesh.sorted_tets, elements.elem_mixed_grad(self._coords, self._coefficient("eps_r")), (self.mesh.n_edges, self.mesh.n_nodes))

    @cached_property
    def mixed_grad_unit(self) -> sparse.csr_matrix:
        return _scatter(self.mesh.tet_edges, self.mesh.sorted_tets, elements.elem_mixed_grad(self._coords), (self.mesh.n_edges, self.mesh.n_nodes))

    @cached_property
    def gradient(self) -> sparse.csr_matrix:
        return discrete_gradient(self.mesh)

    def prepare(self) -> None:
        """Build every matrix now, before the instance is shared between threads."""
        for name in ("stiffness_unit", "stiffness_eps", "mass_nodal", "edge_mass_eps", "edge_mass_sigma", "curl_curl", "mixed_grad_eps", "mixed_grad_unit", "gradient"):
            getattr(self, name)


def discrete_gradient(mesh: Mesh) -> sparse.csr_matrix:
    """Edge-node incidence T: (T u)_e = u[head] - u[tail] for edges oriented low to high."""
    n_e = mesh.n_edges
    rows = np.repeat(np.arange(n_e), 2)
    cols = mesh.edges.ravel()
    vals = np.tile([-1.0, 1.0], n_e)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n_e, mesh.n_nodes))


def surface_load(n_nodes: int, mesh: Mesh, surface: SurfaceSelection, magnitude: float) -> np.ndarray:
    """Integrate ``magnitude`` times each linear shape function over the surface."""
    if len(surface.tris) == 0:
        raise ValueError(f"Surface {surface.tag} has no triangles")
    load = np.zeros(n_nodes)
    tri_nodes = mesh.boundary_tris[surface.tris]
    np.add.at(load, tri_nodes, np.repeat(magnitude * surface.tri_areas / 3.0, 3).reshape(-1, 3))
    return load


# -- operators ------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AssembledOperator:
    """Complex system matrix on the free dofs of a full space of length ``n_full``.

    For block operators the full space is the edge space followed by the nodal space.
    """

    matrix: sparse.csr_matrix
    kind: str
    symmetric: bool
    free: np.ndarray
    n_full: int

    @property
    def shape(self):
        return self.matrix.shape

    def restrict(self, vector: np.ndarray) -> np.ndarray:
        return np.asarray(vector)[self.free]

    def expand(self, reduced: np.ndarray) -> np.ndarray:
        """Full-length vector with zeros in the constrained dofs."""
        full = np.zeros(self.n_full, dtype=np.result_type(reduced, float))
        full[self.free] = reduced
        return full


@dataclass(frozen=True, eq=False)
class OperatorTerm:
    """``coefficient * matrix`` with ``matrix`` real and restricted to free dofs."""

    coefficient: complex
    matrix: sparse.csr_matrix
    curl_only: bool = False


@dataclass(eq=False)
class OperatorFamily:
    """An operator kept as a sum of frequency coefficients times real matrices.

    ``edge_terms`` (or the nodal terms for scalar forms) make the primary block; the
    Darwin block operator additionally has the two couplings and the nodal block.
    """

    form: str
    frequency: float
    kind: str
    terms: List[OperatorTerm]
    free: np.ndarray
    n_full: int
    nodal_terms: List[OperatorTerm] = field(default_factory=list)
    coupling_en: List[OperatorTerm] = field(default_factory=list)
    coupling_ne: List[OperatorTerm] = field(default_factory=list)
    free_nodal: Optional[np.ndarray] = None
    n_nodal: int = 0

    @property
    def is_block(self) -> bool:
        return self.kind == "block"

    @staticmethod
    def _sum(terms: List[OperatorTerm], shape) -> sparse.csr_matrix:
        total = sparse.csr_matrix(shape, dtype=complex)
        for term in terms:
            if term.coefficient != 0:
                total = total + complex(term.coefficient) * term.matrix
        return total.tocsr()

    def assemble(self) -> AssembledOperator:
        n = len(self.free)
        primary = self._sum(self.terms, (n, n))
        if not self.is_block:
            return AssembledOperator(matrix=primary, kind=self.kind, symmetric=True, free=self.free, n_full=self.n_full)
        m = len(self.free_nodal)
        matrix = sparse.bmat(
            [
                [primary, self._sum(self.coupling_en, (n, m))],
                [self._sum(self.coupling_ne, (m, n)), self._sum(self.nodal_terms, (m, m))],
            ],
            format="csr",
        )
        free = np.concatenate([self.free, self.n_full + self.free_nodal])
        return AssembledOperator(matrix=matrix, kind="block", symmetric=False, free=free, n_full=self.n_full + self.n_nodal)


def _restrict(mat: sparse.spmatrix, rows: np.ndarray, cols: np.ndarray) -> sparse.csr_matrix:
    return mat[rows][:, cols].tocsr()


def operator_family(
    mesh: Mesh,
    materials: MaterialTable,
    dofsys: DofSystem,
    form: str,
    frequency: float,
    sigma_tilde: float = 1.0,
    matrices: Optional[GlobalMatrices] = None,
) -> OperatorFamily:
    """Frequency coefficients and restricted real matrices of one bilinear form."""
    if form not in FORMS:
        raise ValueError(f"Unknown form {form!r}; expected one of {', '.join(FORMS)}")
    if frequency < 0 or not np.isfinite(frequency):
        raise ValueError(f"Frequency must be finite and >= 0, got {frequency}")
    mats = matrices if matrices is not None else GlobalMatrices(mesh, materials)
    omega = 2.0 * np.pi * frequency
    k2 = wavenumber_sq(frequency)
    fn, fe = dofsys.free_nodes, dofsys.free_edges

    def nodal(mat):
        return _restrict(mat, fn, fn)

    def edge(mat):
        return _restrict(mat, fe, fe)

    if form == "scalar_xi":
        return OperatorFamily(form, frequency, "nodal", [OperatorTerm(sigma_tilde, nodal(mats.stiffness_unit))], fn, mesh.n_nodes)
    if form in ("scalar_g_darwin", "scalar_phic_mqs"):
        return OperatorFamily(form, frequency, "nodal", [OperatorTerm(1.0, nodal(mats.stiffness_eps))], fn, mesh.n_nodes)
    if form in ("scalar_g_fullwave", "scalar_phic_fullwave"):
        terms = [OperatorTerm(1.0, nodal(mats.stiffness_eps)), OperatorTerm(-k2, nodal(mats.mass_nodal))]
        return OperatorFamily(form, frequency, "nodal", terms, fn, mesh.n_nodes)

    curl = OperatorTerm(1.0, edge(mats.curl_curl), curl_only=True)
    eddy = OperatorTerm(1j * omega * MU0, edge(mats.edge_mass_sigma))
    if form == "efield_mqs":
        return OperatorFamily(form, frequency, "edge", [curl, eddy], fe, mesh.n_edges)
    if form == "efield_fullwave":
        wave = OperatorTerm(-k2, edge(mats.edge_mass_eps))
        return OperatorFamily(form, frequency, "edge", [curl, eddy, wave], fe, mesh.n_edges)

    g = mats.mixed_grad_eps
    return OperatorFamily(
        form,
        frequency,
        "block",
        [curl, eddy],
        fe,
        mesh.n_edges,
        nodal_terms=[OperatorTerm(1.0, nodal(mats.stiffness_eps)), OperatorTerm(-k2, nodal(mats.mass_nodal))],
        coupling_en=[OperatorTerm(k2, _restrict(g, fe, fn))],
        coupling_ne=[OperatorTerm(1.0, _restrict(g.T.tocsr(), fn, fe))],
        free_nodal=fn,
        n_nodal=mesh.n_nodes,
    )


def assemble(
    mesh: Mesh,
    materials: MaterialTable,
    dofsys: DofSystem,
    form: str,
    frequency: float,
    sigma_tilde: float = 1.0,
    matrices: Optional[GlobalMatrices] = None,
) -> AssembledOperator:
    """Assemble ``form`` at ``frequency`` with homogeneous Dirichlet dofs eliminated.

    Args:
        mesh: The mesh.
        materials: Material per region tag.
        dofsys: Dirichlet masks.
        form: One of ``FORMS``.
        frequency: Frequency in Hz, >= 0.
        sigma_tilde: Fictitious conductivity of the source problem (``scalar_xi`` only).
        matrices: Shared global matrices; built here when omitted.

    Returns:
        The assembled operator on the free dofs.
    """
    operator = operator_family(mesh, materials, dofsys, form, frequency, sigma_tilde, matrices).assemble()
    logger.debug(f"Assembled {form} at {frequency:g} Hz: {operator.shape[0]} dofs, {operator.matrix.nnz} nonzeros")
    return operator
