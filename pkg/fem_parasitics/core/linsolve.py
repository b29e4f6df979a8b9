"""Direct sparse solves, tree-cotree gauging and low-frequency stabilization."""

import logging
import threading
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from fem_parasitics.constants import C0, MAX_REFINEMENT_STEPS, PIVOT_WARN_RATIO, RESIDUAL_TOL, SINGULAR_PIVOT_RATIO, WAVE_VISIBILITY_THRESHOLD
from fem_parasitics.core.assembly import AssembledOperator, DofSystem, OperatorFamily, wavenumber_sq
from fem_parasitics.core.mesh import build_spanning_tree, contract_nodes
from fem_parasitics.models.data_models import Formulation, GaugeKind, Stabilization

logger = logging.getLogger(__name__)

MatrixLike = Union[AssembledOperator, sparse.spmatrix]


class SolverError(RuntimeError):
    """A linear solve failed or produced a non-finite result."""


class SingularOperatorError(SolverError):
    """The factorization hit a (numerically) zero pivot.

    Attributes:
        pivot: Magnitude of the smallest pivot of U.
        column: Column of the original matrix that pivot belongs to, -1 if unknown.
    """

    def __init__(self, message, pivot, column):
        super().__init__(message)
        self.pivot = pivot
        self.column = column


def _as_matrix(operator: MatrixLike) -> sparse.csc_matrix:
    mat = operator.matrix if isinstance(operator, AssembledOperator) else operator
    return sparse.csc_matrix(mat)


class Factorization:
    """Sparse LU factors of a square matrix, reusable for any number of right-hand sides.

    The underlying SuperLU object is not re-entrant, so solves on one instance are
    serialized; independent instances may be used concurrently.
    """

    def __init__(self, operator: MatrixLike, label: str = "operator"):
        self.matrix = _as_matrix(operator)
        self.label = label
        n, m = self.matrix.shape
        if n != m:
            raise ValueError(f"{label}: matrix must be square, got {self.matrix.shape}")
        self._lock = threading.Lock()
        if n == 0:
            self._lu = None
            return
        try:
            self._lu = splu(self.matrix)
        except RuntimeError as e:
            raise SingularOperatorError(f"{label}: factorization failed ({e})", pivot=0.0, column=-1) from e
        self._check_pivots()
        logger.debug(f"Factorized {label}: n={n}, nnz(L+U)={self._lu.L.nnz + self._lu.U.nnz}")

    def _check_pivots(self) -> None:
        pivots = np.abs(self._lu.U.diagonal())
        largest = pivots.max()
        position = int(np.argmin(pivots))
        column = int(np.argsort(self._lu.perm_c)[position])
        ratio = pivots[position] / largest if largest > 0 else 0.0
        if ratio < SINGULAR_PIVOT_RATIO:
            raise SingularOperatorError(
                f"{self.label} is numerically singular: smallest pivot {pivots[position]:.3e} (ratio {ratio:.1e}) at column {column}",
                pivot=float(pivots[position]),
                column=column,
            )
        if ratio < PIVOT_WARN_RATIO:
            logger.warning(f"{self.label}: small pivot {pivots[position]:.3e} (ratio {ratio:.1e}) at column {column}")

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def _apply(self, rhs: np.ndarray) -> np.ndarray:
        if np.iscomplexobj(rhs) and not np.iscomplexobj(self.matrix.data):
            return self._lu.solve(np.ascontiguousarray(rhs.real)) + 1j * self._lu.solve(np.ascontiguousarray(rhs.imag))
        return self._lu.solve(np.ascontiguousarray(rhs, dtype=np.result_type(rhs, self.matrix.dtype)))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve with residual check and up to two refinement steps."""
        rhs = np.asarray(rhs)
        if rhs.shape[0] != self.size:
            raise ValueError(f"{self.label}: rhs has length {rhs.shape[0]}, expected {self.size}")
        if self.size == 0:
            return np.zeros(0, dtype=np.result_type(rhs, self.matrix.dtype))
        if not np.any(rhs):
            return np.zeros(self.size, dtype=np.result_type(rhs, self.matrix.dtype))
        with self._lock:
            x = self._apply(rhs)
            residual = relative_residual(self.matrix, x, rhs)
            steps = 0
            while residual > RESIDUAL_TOL and steps < MAX_REFINEMENT_STEPS and np.isfinite(residual):
                x = x + self._apply(rhs - self.matrix @ x)
                residual = relative_residual(self.matrix, x, rhs)
                steps += 1
        if not np.all(np.isfinite(x)):
            raise SolverError(f"{self.label}: solution contains non-finite values")
        if residual > RESIDUAL_TOL:
            logger.warning(f"{self.label}: relative residual {residual:.2e} above {RESIDUAL_TOL:g} after {steps} refinement step(s)")
        else:
            logger.debug(f"{self.label}: relative residual {residual:.2e} ({steps} refinement step(s))")
        return x


def solve(operator: MatrixLike, rhs: np.ndarray, label: str = "operator") -> np.ndarray:
    """Factorize and solve once. Raises SingularOperatorError on a zero pivot."""
    return Factorization(operator, label).solve(rhs)


def relative_residual(operator: MatrixLike, x: np.ndarray, rhs: np.ndarray) -> float:
    mat = _as_matrix(operator)
    norm_b = np.linalg.norm(rhs)
    return float(np.linalg.norm(rhs - mat @ x) / norm_b) if norm_b else float(np.linalg.norm(mat @ x))


@dataclass(eq=False)
class GaugedSystem:
    """A reduced system ``matrix y = row_map @ b`` whose solution maps back as ``x = col_map @ y``.

    ``b`` and ``x`` live on the free dofs of ``base``; dofs removed by a gauge get 0.
    """

    matrix: sparse.csr_matrix
    col_map: sparse.csr_matrix
    row_map: sparse.csr_matrix
    kind: GaugeKind
    base: AssembledOperator
    block_sizes: Tuple[int, ...] = ()
    _factorization: Optional[Factorization] = None

    def factorize(self, label: str = "gauged operator") -> Factorization:
        if self._factorization is None:
            self._factorization = Factorization(self.matrix, f"{label} ({self.kind.value})")
        return self._factorization

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        y = self.factorize().solve(self.row_map @ rhs)
        return self.col_map @ y


def _selection(n: int, keep: np.ndarray) -> sparse.csr_matrix:
    return sparse.csr_matrix((np.ones(len(keep)), (keep, np.arange(len(keep)))), shape=(n, len(keep)))


def gauge_tree_cotree(operator: AssembledOperator, dofsys: DofSystem, conducting_edges: Optional[np.ndarray] = None) -> GaugedSystem:
    """Fix the tree edges of the non-conducting graph to zero.

    The tree spans the node graph with Gamma_el merged into one node and conductors
    and Dirichlet edges contracted, so it removes exactly the gradients that vanish
    in the conductors and on Gamma_el.
    """
    if operator.kind != "edge":
        raise ValueError(f"Tree-cotree gauging needs an edge operator, got {operator.kind!r}")
    conducting = dofsys.conducting_edges if conducting_edges is None else np.asarray(conducting_edges, dtype=bool)
    partition = build_spanning_tree(
        dofsys.mesh, root=dofsys.tree_root, contracted_edges=dofsys.dirichlet_edge | conducting, merged_nodes=dofsys.gamma_el_nodes
    )
    keep = np.flatnonzero(~np.isin(operator.free, partition.tree))
    col_map = _selection(len(operator.free), keep)
    matrix = (col_map.T @ operator.matrix @ col_map).tocsr()
    logger.debug(f"Tree-cotree gauge: {len(operator.free) - len(keep)} of {len(operator.free)} edge dofs fixed")
    return GaugedSystem(matrix=matrix, col_map=col_map, row_map=col_map.T.tocsr(), kind=GaugeKind.TREE_COTREE, base=operator, block_sizes=(len(keep),))


def stabilization_basis(dofsys: DofSystem, include_gradients_outside: bool = True) -> Tuple[sparse.csr_matrix, Tuple[int, int, int]]:
    """Columns spanning the free edge space as cotree unit vectors, conductor gradients and outside gradients.

    Args:
        dofsys: Dof masks; Dirichlet edges are excluded from every block.
        include_gradients_outside: Keep the gradients of functions that vanish in the
            conductors. Without them the basis spans the space with those gradients gauged out.

    Returns:
        The basis (free edges x columns) and the block sizes (n_V, n_W, n_U).
    """
    mesh = dofsys.mesh
    free = dofsys.free_edges
    gamma = dofsys.gamma_el_nodes
    root = int(np.flatnonzero(gamma)[0]) if gamma.any() else 0

    n_d, d_label = contract_nodes(mesh, dofsys.dirichlet_edge, gamma)
    tree = build_spanning_tree(mesh, root=root, contracted_edges=dofsys.dirichlet_edge, merged_nodes=gamma).tree
    cotree = np.flatnonzero(~np.isin(free, tree))
    basis_v = _selection(len(free), cotree)

    edges = mesh.edges[free]
    rows = np.repeat(np.arange(len(free)), 2)
    cols = d_label[edges].ravel()
    t_d = sparse.csr_matrix((np.tile([-1.0, 1.0], len(free)), (rows, cols)), shape=(len(free), n_d))

    n_s, s_label = contract_nodes(mesh, dofsys.dirichlet_edge | dofsys.conducting_edges, gamma)
    d_to_s = np.zeros(n_d, dtype=np.int64)
    d_to_s[d_label] = s_label
    # Anchor of every super node: its lowest node, or Gamma_el where present.
    lowest = np.full(n_s, mesh.n_nodes, dtype=np.int64)
    np.minimum.at(lowest, s_label, np.arange(mesh.n_nodes))
    anchor = d_label[lowest]
    if gamma.any():
        anchor[s_label[root]] = d_label[root]
    root_super = s_label[root]

    w_nodes = np.setdiff1d(np.arange(n_d), anchor)
    basis_w = t_d[:, w_nodes]
    blocks = [basis_v, basis_w]
    n_u = 0
    if include_gradients_outside:
        supers = np.setdiff1d(np.arange(n_s), [root_super])
        position = np.full(n_s, -1, dtype=np.int64)
        position[supers] = np.arange(len(supers))
        member = np.flatnonzero(position[d_to_s] >= 0)
        indicator = sparse.csr_matrix((np.ones(len(member)), (member, position[d_to_s[member]])), shape=(n_d, len(supers)))
        blocks.append(t_d @ indicator)
        n_u = len(supers)
    basis = sparse.hstack(blocks, format="csr")
    basis.eliminate_zeros()
    sizes = (len(cotree), len(w_nodes), n_u)
    logger.debug(f"Stabilization basis: V={sizes[0]}, W={sizes[1]}, U={sizes[2]} for {len(free)} free edges")
    return basis, sizes


def _project_terms(terms, basis: sparse.csr_matrix, sizes: Tuple[int, int, int], s_row: np.ndarray, s_col: np.ndarray) -> sparse.csr_matrix:
    n = basis.shape[1]
    n_v = sizes[0]
    basis_v = basis[:, :n_v]
    total = sparse.csr_matrix((n, n), dtype=complex)
    for term in terms:
        if term.coefficient == 0:
            continue
        if term.curl_only:
            # Curls of gradients vanish; keep only the exact cotree block.
            vv = (basis_v.T @ term.matrix @ basis_v).tocsr()
            projected = sparse.block_diag([vv, sparse.csr_matrix((n - n_v, n - n_v))], format="csr")
        else:
            projected = (basis.T @ term.matrix @ basis).tocsr()
        total = total + complex(term.coefficient) * projected
    return (sparse.diags(s_row) @ total @ sparse.diags(s_col)).tocsr()


def lf_stabilize(family: OperatorFamily, dofsys: DofSystem) -> GaugedSystem:
    """Change of basis E = i w E_V + (i w)^(1/2) E_W + E_U with matching row scaling.

    For the MQS operator the outside gradients are left out, which gauges them to zero.
    Darwin block operators keep the scalar potential unscaled.
    """
    if family.kind == "nodal":
        raise ValueError("Low-frequency stabilization applies to edge and block operators")
    omega = 2.0 * np.pi * family.frequency
    if omega == 0:
        raise ValueError("Stabilized solve at 0 Hz is undefined; use the MQS-PEC scaled path or the Darwin-PEC capacitance path")
    k2 = wavenumber_sq(family.frequency)
    has_wave = family.form != "efield_mqs"
    basis, sizes = stabilization_basis(dofsys, include_gradients_outside=has_wave)
    n_v, n_w, n_u = sizes

    iw = 1j * omega
    s_col = np.concatenate([np.full(n_v, iw), np.full(n_w, np.sqrt(iw)), np.ones(n_u)])
    s_row = np.concatenate([np.full(n_v, 1.0 / iw), np.full(n_w, iw ** (-1.5)), np.full(n_u, 1.0 / k2)])
    matrix = _project_terms(family.terms, basis, sizes, s_row, s_col)
    col_map = (basis @ sparse.diags(s_col)).tocsr()
    row_map = (sparse.diags(s_row) @ basis.T).tocsr()

    base = family.assemble()
    if family.is_block:
        n_e, n_phi = len(family.free), len(family.free_nodal)
        coupling_en = OperatorFamily._sum(family.coupling_en, (n_e, n_phi))
        coupling_ne = OperatorFamily._sum(family.coupling_ne, (n_phi, n_e))
        nodal = OperatorFamily._sum(family.nodal_terms, (n_phi, n_phi))
        matrix = sparse.bmat(
            [
                [matrix, sparse.diags(s_row) @ (basis.T @ coupling_en)],
                [coupling_ne @ basis @ sparse.diags(s_col), nodal],
            ],
            format="csr",
        )
        eye = sparse.identity(n_phi, format="csr")
        col_map = sparse.block_diag([col_map, eye], format="csr")
        row_map = sparse.block_diag([row_map, eye], format="csr")
    return GaugedSystem(matrix=matrix, col_map=col_map, row_map=row_map, kind=GaugeKind.LF_SCALED, base=base, block_sizes=sizes)


def solve_block2(operator: Union[AssembledOperator, OperatorFamily], rhs_edge: np.ndarray, rhs_nodal: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Monolithic solve of a 2x2 edge/nodal block system on its free dofs."""
    if isinstance(operator, OperatorFamily):
        operator = operator.assemble()
    if operator.kind != "block":
        raise ValueError(f"solve_block2 needs a block operator, got {operator.kind!r}")
    n_e = len(rhs_edge)
    if n_e + len(rhs_nodal) != operator.shape[0]:
        raise ValueError(f"Block rhs lengths {n_e} + {len(rhs_nodal)} do not match operator size {operator.shape[0]}")
    x = solve(operator, np.concatenate([rhs_edge, rhs_nodal]).astype(complex), label="block operator")
    return x[:n_e], x[n_e:]


def wave_term_visible(frequency: float, h_max: float) -> bool:
    """False when (omega h / c)^2 is too small for the wave term to survive a direct solve."""
    return (2.0 * np.pi * frequency * h_max / C0) ** 2 >= WAVE_VISIBILITY_THRESHOLD


def select_gauge(formulation: Formulation, frequency: float, h_max: float, policy: Stabilization, crossover_frequency: float) -> GaugeKind:
    """Pick the gauge or stabilization for a lossy E solve at ``frequency``."""
    if policy is Stabilization.ALWAYS:
        return GaugeKind.LF_SCALED
    if policy is Stabilization.AUTO:
        if frequency < crossover_frequency:
            return GaugeKind.LF_SCALED
        if formulation is not Formulation.MQS and not wave_term_visible(frequency, h_max):
            return GaugeKind.LF_SCALED
    return GaugeKind.TREE_COTREE if formulation is Formulation.MQS else GaugeKind.NONE
