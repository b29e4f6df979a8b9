"""Tagged tetrahedral meshes: Gmsh MSH 2.2 ingestion, topology and geometry queries."""

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from fem_parasitics.constants import DEGENERATE_VOLUME_TOL, PhysicalNames
from fem_parasitics.models.data_models import SurfaceSelection

logger = logging.getLogger(__name__)

# Local edge (i, j) and face numbering of a tetrahedron; face k is opposite vertex k.
LOCAL_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
LOCAL_FACES = np.array([(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)])
TRI_EDGES = np.array([(0, 1), (0, 2), (1, 2)])

MSH_TRIANGLE = 2
MSH_TETRAHEDRON = 4
MSH_NODES_PER_TYPE = {MSH_TRIANGLE: 3, MSH_TETRAHEDRON: 4}
MSH_SKIPPED_TYPES = {1: "line", 15: "point"}
REQUIRED_SECTIONS = ("MeshFormat", "Nodes", "Elements")


class MeshError(ValueError):
    """Raised for meshes that cannot be used for extraction."""


class MeshParseError(MeshError):
    """Malformed MSH input; ``line_number`` is 1-based."""

    def __init__(self, message, line_number):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class DegenerateElementError(MeshError):
    def __init__(self, message, element_index, volume):
        super().__init__(message)
        self.element_index = element_index
        self.volume = volume


@dataclass(frozen=True)
class EdgePartition:
    """Spanning tree of the (possibly contracted) node graph and the remaining edges."""

    tree: np.ndarray
    cotree: np.ndarray
    root: int
    n_graph_nodes: int


def signed_volumes(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    p = nodes[tets]
    return np.linalg.det(p[:, 1:] - p[:, :1]) / 6.0


@dataclass(eq=False)
class Mesh:
    """Immutable tetrahedral mesh with region-tagged tets and surface-tagged triangles.

    Tets are stored with positive orientation. Edges are deduplicated node pairs
    oriented from the lower to the higher node index.
    """

    nodes: np.ndarray
    tets: np.ndarray
    tet_regions: np.ndarray
    boundary_tris: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    tri_tags: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    physical_names: Dict[Tuple[int, int], str] = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 3)
        self.tets = np.asarray(self.tets, dtype=np.int64).reshape(-1, 4)
        self.tet_regions = np.asarray(self.tet_regions, dtype=np.int64).reshape(-1)
        self.boundary_tris = np.asarray(self.boundary_tris, dtype=np.int64).reshape(-1, 3)
        self.tri_tags = np.asarray(self.tri_tags, dtype=np.int64).reshape(-1)
        if len(self.tets) == 0:
            raise MeshError("Mesh contains no tetrahedra")
        if len(self.tet_regions) != len(self.tets) or len(self.tri_tags) != len(self.boundary_tris):
            raise MeshError("Every element needs exactly one physical tag")
        for name, conn in (("tetrahedron", self.tets), ("triangle", self.boundary_tris)):
            if conn.size and (conn.min() < 0 or conn.max() >= len(self.nodes)):
                raise MeshError(f"A {name} references a node index outside [0, {len(self.nodes)})")
        if len(self.nodes) ** 3 >= np.iinfo(np.int64).max:
            raise MeshError(f"Meshes with {len(self.nodes)} nodes exceed the face-key range")

        volumes = signed_volumes(self.nodes, self.tets)
        bad = np.flatnonzero(np.abs(volumes) < DEGENERATE_VOLUME_TOL)
        if bad.size:
            raise DegenerateElementError(
                f"Tetrahedron {bad[0]} has volume {volumes[bad[0]]:.3e} m^3 below {DEGENERATE_VOLUME_TOL:g}", int(bad[0]), float(volumes[bad[0]])
            )
        flip = volumes < 0
        if flip.any():
            self.tets[flip] = self.tets[flip][:, [0, 1, 3, 2]]

        self._check_faces()
        for arr in (self.nodes, self.tets, self.tet_regions, self.boundary_tris, self.tri_tags):
            arr.flags.writeable = False

    # -- topology -------------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def sorted_tets(self) -> np.ndarray:
        """Tet connectivity with ascending node indices; local edges then follow global orientation."""
        return np.sort(self.tets, axis=1)

    @cached_property
    def _edge_index(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        pairs = self.sorted_tets[:, LOCAL_EDGES]
        keys = pairs[..., 0] * self.n_nodes + pairs[..., 1]
        uniq, inverse = np.unique(keys.ravel(), return_inverse=True)
        edges = np.stack([uniq // self.n_nodes, uniq % self.n_nodes], axis=1)
        return uniq, edges, inverse.reshape(-1, 6)

    @property
    def edges(self) -> np.ndarray:
        return self._edge_index[1]

    @property
    def tet_edges(self) -> np.ndarray:
        """Global edge index of the six local edges of every (sorted) tet."""
        return self._edge_index[2]

    def find_edges(self, a, b) -> np.ndarray:
        a, b = np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)
        keys = np.minimum(a, b) * self.n_nodes + np.maximum(a, b)
        edge_keys = self._edge_index[0]
        idx = np.searchsorted(edge_keys, keys)
        idx_clipped = np.minimum(idx, len(edge_keys) - 1)
        if np.any(edge_keys[idx_clipped] != keys):
            raise MeshError("Node pair is not an edge of the mesh")
        return idx_clipped

    def tri_edges(self, tri_nodes: np.ndarray) -> np.ndarray:
        tri_nodes = np.asarray(tri_nodes).reshape(-1, 3)
        return self.find_edges(tri_nodes[:, TRI_EDGES[:, 0]], tri_nodes[:, TRI_EDGES[:, 1]])

    def _face_keys(self, faces: np.ndarray) -> np.ndarray:
        faces = np.sort(faces, axis=1)
        n = self.n_nodes
        return (faces[:, 0] * n + faces[:, 1]) * n + faces[:, 2]

    @cached_property
    def _face_index(self) -> Tuple[np.ndarray, np.ndarray]:
        keys = self._face_keys(self.tets[:, LOCAL_FACES].reshape(-1, 3))
        order = np.argsort(keys, kind="stable")
        return keys[order], order // 4

    def _check_faces(self) -> None:
        sorted_keys, _ = self._face_index
        _, counts = np.unique(sorted_keys, return_counts=True)
        if np.any(counts > 2):
            raise MeshError(f"Non-conforming mesh: {int(np.sum(counts > 2))} face(s) shared by more than two tetrahedra")
        if len(self.boundary_tris):
            adjacent = self.face_tets(self.boundary_tris)
            orphan = np.flatnonzero(adjacent[:, 0] < 0)
            if orphan.size:
                raise MeshError(f"Boundary triangle {orphan[0]} is not a face of any tetrahedron")

    def face_tets(self, faces: np.ndarray) -> np.ndarray:
        """Up to two tets adjacent to each face, -1 where absent."""
        sorted_keys, tet_of = self._face_index
        keys = self._face_keys(np.asarray(faces).reshape(-1, 3))
        left = np.searchsorted(sorted_keys, keys, side="left")
        right = np.searchsorted(sorted_keys, keys, side="right")
        out = np.full((len(keys), 2), -1, dtype=np.int64)
        found = right > left
        out[found, 0] = tet_of[left[found]]
        two = right - left == 2
        out[two, 1] = tet_of[left[two] + 1]
        return out

    @cached_property
    def outer_faces(self) -> np.ndarray:
        """Sorted node triples of faces that belong to exactly one tet."""
        sorted_keys, _ = self._face_index
        uniq, counts = np.unique(sorted_keys, return_counts=True)
        keys = uniq[counts == 1]
        n = self.n_nodes
        return np.stack([keys // (n * n), (keys // n) % n, keys % n], axis=1)

    # -- tags -----------------------------------------------------------------

    @property
    def region_tags(self) -> np.ndarray:
        return np.unique(self.tet_regions)

    @property
    def surface_tags(self) -> np.ndarray:
        return np.unique(self.tri_tags)

    def tag_of(self, name: str, dim: int) -> int:
        for (d, tag), n in self.physical_names.items():
            if d == dim and n == name:
                return tag
        raise MeshError(f"No physical group of dimension {dim} named '{name}'")

    def has_surface(self, name: str) -> bool:
        return (2, name) in {(d, n) for (d, _), n in self.physical_names.items()}

    def terminal_names(self) -> Dict[str, int]:
        prefix = PhysicalNames.TERMINAL_PREFIX
        return {n[len(prefix):]: tag for (d, tag), n in self.physical_names.items() if d == 2 and n.startswith(prefix)}

    def surface_tris(self, tag: int) -> np.ndarray:
        tris = np.flatnonzero(self.tri_tags == tag)
        if tris.size == 0:
            raise MeshError(f"Surface tag {tag} does not exist in the mesh")
        return tris

    def tets_in_regions(self, tags: Iterable[int]) -> np.ndarray:
        return np.flatnonzero(np.isin(self.tet_regions, list(tags)))

    # -- geometry -------------------------------------------------------------

    @cached_property
    def volumes(self) -> np.ndarray:
        return signed_volumes(self.nodes, self.tets)

    def tri_areas(self, tri_nodes: np.ndarray) -> np.ndarray:
        p = self.nodes[np.asarray(tri_nodes).reshape(-1, 3)]
        return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)

    @cached_property
    def h_max(self) -> float:
        d = self.nodes[self.edges[:, 1]] - self.nodes[self.edges[:, 0]]
        return float(np.linalg.norm(d, axis=1).max())

    def node_graph(self) -> sparse.csr_matrix:
        a, b = self.edges[:, 0], self.edges[:, 1]
        graph = sparse.coo_matrix((np.ones(len(a)), (a, b)), shape=(self.n_nodes, self.n_nodes)).tocsr()
        graph.sort_indices()
        return graph


# -- MSH 2.2 reader -----------------------------------------------------------


def _read_sections(path: Path) -> "OrderedDict[str, Tuple[int, List[Tuple[int, str]]]]":
    """Group non-empty lines by ``$Section`` with their line numbers."""
    sections: "OrderedDict[str, Tuple[int, List[Tuple[int, str]]]]" = OrderedDict()
    current = None
    line_number = 0
    with open(path, "r", encoding="utf-8") as fid:
        for line_number, raw in enumerate(fid, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("$End"):
                if current != line[4:]:
                    raise MeshParseError(f"unexpected {line}", line_number)
                current = None
            elif line.startswith("$"):
                if current is not None:
                    raise MeshParseError(f"section ${current} is not closed before {line}", line_number)
                current = line[1:]
                if current in sections:
                    raise MeshParseError(f"duplicate section ${current}", line_number)
                sections[current] = (line_number, [])
            elif current is None:
                raise MeshParseError("data outside of any section", line_number)
            else:
                sections[current][1].append((line_number, line))
    if current is not None:
        raise MeshParseError(f"section ${current} is not closed", line_number)
    for name in REQUIRED_SECTIONS:
        if name not in sections:
            raise MeshParseError(f"missing ${name} section", line_number)
    return sections


def _counted(sections, name) -> List[Tuple[int, str]]:
    header_line, lines = sections[name]
    if not lines:
        raise MeshParseError(f"${name} has no count line", header_line)
    count_line, count_text = lines[0]
    try:
        count = int(count_text)
    except ValueError:
        raise MeshParseError(f"${name} count '{count_text}' is not an integer", count_line) from None
    body = lines[1:]
    if len(body) != count:
        raise MeshParseError(f"${name} announces {count} entries but has {len(body)}", count_line)
    return body


def _ints(line_number: int, text: str) -> List[int]:
    try:
        return [int(t) for t in text.split()]
    except ValueError:
        raise MeshParseError(f"expected integers in '{text}'", line_number) from None


def load_mesh(path: Union[str, Path]) -> Mesh:
    """Read a Gmsh ASCII MSH 2.2 file containing tetrahedra and tagged triangles.

    Args:
        path: Path to the ``.msh`` file.

    Returns:
        Mesh with dense 0-based node ids, positively oriented tets and deduplicated edges.
    """
    path = Path(path)
    sections = _read_sections(path)

    fmt_line, fmt_lines = sections["MeshFormat"]
    if not fmt_lines:
        raise MeshParseError("empty $MeshFormat", fmt_line)
    fmt_line, fmt_text = fmt_lines[0]
    fmt = fmt_text.split()
    if len(fmt) != 3 or not fmt[0].startswith("2."):
        raise MeshParseError(f"unsupported mesh format '{fmt_text}', expected MSH 2.2", fmt_line)
    if fmt[1] != "0":
        raise MeshParseError("binary MSH files are not supported", fmt_line)

    physical_names: Dict[Tuple[int, int], str] = {}
    if "PhysicalNames" in sections:
        for line_number, text in _counted(sections, "PhysicalNames"):
            parts = text.split(maxsplit=2)
            if len(parts) != 3:
                raise MeshParseError(f"malformed physical name '{text}'", line_number)
            dim, tag = _ints(line_number, " ".join(parts[:2]))
            physical_names[(dim, tag)] = parts[2].strip().strip('"')
    else:
        logger.warning(f"{path} has no $PhysicalNames section; groups are unnamed")

    node_index: Dict[int, int] = {}
    coords = []
    for line_number, text in _counted(sections, "Nodes"):
        parts = text.split()
        if len(parts) != 4:
            raise MeshParseError(f"node line needs 'id x y z', got '{text}'", line_number)
        try:
            node_id = int(parts[0])
            coords.append([float(v) for v in parts[1:]])
        except ValueError:
            raise MeshParseError(f"malformed node line '{text}'", line_number) from None
        if node_id in node_index:
            raise MeshParseError(f"duplicate node id {node_id}", line_number)
        node_index[node_id] = len(node_index)

    tets, tet_tags, tris, tri_tags = [], [], [], []
    skipped = 0
    for line_number, text in _counted(sections, "Elements"):
        values = _ints(line_number, text)
        if len(values) < 3:
            raise MeshParseError(f"malformed element line '{text}'", line_number)
        el_type, n_tags = values[1], values[2]
        if el_type in MSH_SKIPPED_TYPES:
            skipped += 1
            continue
        if el_type not in MSH_NODES_PER_TYPE:
            raise MeshParseError(f"unsupported element type {el_type}", line_number)
        conn = values[3 + n_tags:]
        if len(conn) != MSH_NODES_PER_TYPE[el_type]:
            raise MeshParseError(f"element type {el_type} needs {MSH_NODES_PER_TYPE[el_type]} nodes, got {len(conn)}", line_number)
        try:
            conn = [node_index[n] for n in conn]
        except KeyError as e:
            raise MeshParseError(f"element references unknown node {e.args[0]}", line_number) from None
        tag = values[3] if n_tags >= 1 else 0
        if el_type == MSH_TETRAHEDRON:
            tets.append(conn)
            tet_tags.append(tag)
        else:
            tris.append(conn)
            tri_tags.append(tag)
    if skipped:
        logger.debug(f"Skipped {skipped} line/point elements in {path}")

    if not tets:
        raise MeshParseError("no tetrahedra in $Elements", sections["Elements"][0])

    nodes, tets_arr, tris_arr = _compact(np.array(coords), np.array(tets), np.array(tris, dtype=np.int64).reshape(-1, 3))
    _warn_unreferenced(path, physical_names, set(tet_tags), set(tri_tags))

    mesh = Mesh(nodes=nodes, tets=tets_arr, tet_regions=np.array(tet_tags), boundary_tris=tris_arr, tri_tags=np.array(tri_tags, dtype=np.int64), physical_names=physical_names)
    logger.debug(f"Loaded {path}: {mesh.n_nodes} nodes, {mesh.n_tets} tets, {mesh.n_edges} edges, {len(mesh.boundary_tris)} tagged triangles")
    return mesh


def _compact(coords: np.ndarray, tets: np.ndarray, tris: np.ndarray):
    """Drop nodes not used by any tet and renumber densely."""
    used = np.unique(tets)
    if len(used) == len(coords):
        return coords, tets, tris
    remap = np.full(len(coords), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    new_tris = remap[tris]
    if np.any(new_tris < 0):
        raise MeshError("A surface triangle uses a node that belongs to no tetrahedron")
    return coords[used], remap[tets], new_tris


def _warn_unreferenced(path, physical_names, tet_tags, tri_tags) -> None:
    used = {(3, t) for t in tet_tags} | {(2, t) for t in tri_tags}
    for key in sorted(set(physical_names) - used):
        if key[0] in (2, 3):
            logger.warning(f"{path}: physical group {physical_names[key]!r} (dim {key[0]}, tag {key[1]}) has no elements")
    for dim, tag in sorted(used - set(physical_names)):
        logger.warning(f"{path}: physical tag {tag} (dim {dim}) has no name")


# -- graph queries --------------------------------------------------------------


def contract_nodes(mesh: Mesh, fixed_edges: Optional[np.ndarray] = None, merged_nodes: Optional[np.ndarray] = None) -> Tuple[int, np.ndarray]:
    """Label nodes by the connected components of the ``fixed_edges`` subgraph.

    All nodes in the boolean mask ``merged_nodes`` additionally share one label.
    """
    has_edges = fixed_edges is not None and np.any(fixed_edges)
    merged = np.flatnonzero(merged_nodes) if merged_nodes is not None else np.zeros(0, dtype=np.int64)
    if not has_edges and len(merged) < 2:
        return mesh.n_nodes, np.arange(mesh.n_nodes)
    e = mesh.edges[np.asarray(fixed_edges, dtype=bool)] if has_edges else np.zeros((0, 2), dtype=np.int64)
    rows = np.concatenate([e[:, 0], np.full(max(len(merged) - 1, 0), merged[0] if len(merged) else 0)])
    cols = np.concatenate([e[:, 1], merged[1:]])
    graph = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))
    n_comp, labels = csgraph.connected_components(graph, directed=False)
    return int(n_comp), labels


def build_spanning_tree(
    mesh: Mesh,
    root_regions: Optional[Iterable[int]] = None,
    root: Optional[int] = None,
    contracted_edges: Optional[np.ndarray] = None,
    merged_nodes: Optional[np.ndarray] = None,
) -> EdgePartition:
    """Breadth-first spanning tree of the node graph.

    With ``contracted_edges`` the tree spans the graph in which the endpoints of
    those edges are merged; one representative (lowest-index) edge is used for each
    pair of merged nodes.

    Args:
        mesh: The mesh.
        root_regions: Start from the lowest node of these regions.
        root: Explicit start node; overrides ``root_regions``. Defaults to node 0.
        contracted_edges: Boolean mask of edges whose endpoints are merged.
        merged_nodes: Boolean mask of nodes merged into a single graph node.

    Returns:
        EdgePartition with the tree edges and every other edge as cotree.
    """
    n_comp, labels = contract_nodes(mesh, contracted_edges, merged_nodes)
    if root is None:
        if root_regions is not None:
            region_tets = mesh.tets_in_regions(root_regions)
            if region_tets.size == 0:
                raise MeshError(f"No tetrahedra in root regions {list(root_regions)}")
            root = int(mesh.tets[region_tets].min())
        else:
            root = 0
    if not 0 <= root < mesh.n_nodes:
        raise MeshError(f"Tree root {root} is not a node of the mesh")

    la, lb = labels[mesh.edges[:, 0]], labels[mesh.edges[:, 1]]
    ids = np.flatnonzero(la != lb)
    lo, hi = np.minimum(la[ids], lb[ids]), np.maximum(la[ids], lb[ids])
    keys = lo * n_comp + hi
    uniq, first = np.unique(keys, return_index=True)
    representative = ids[first]

    graph = sparse.coo_matrix((np.ones(len(uniq)), (uniq // n_comp, uniq % n_comp)), shape=(n_comp, n_comp)).tocsr()
    graph.sort_indices()
    n_cc, cc = csgraph.connected_components(graph, directed=False)
    if n_cc > 1:
        sizes = sorted(np.bincount(cc[labels]).tolist(), reverse=True)
        raise MeshError(f"Mesh is not connected: {n_cc} components with node counts {sizes}")

    order, pred = csgraph.breadth_first_order(graph, labels[root], directed=False, return_predecessors=True)
    child = order[1:]
    parent = pred[child]
    tree_keys = np.minimum(child, parent) * n_comp + np.maximum(child, parent)
    tree = np.sort(representative[np.searchsorted(uniq, tree_keys)])
    cotree = np.setdiff1d(np.arange(mesh.n_edges), tree)
    return EdgePartition(tree=tree, cotree=cotree, root=int(root), n_graph_nodes=n_comp)


def surface_area(mesh: Mesh, tag: int) -> float:
    """Total area of the triangles carrying ``tag``."""
    tris = mesh.surface_tris(tag)
    return float(mesh.tri_areas(mesh.boundary_tris[tris]).sum())


def select_surface(mesh: Mesh, tag: int, conducting_tets: Optional[np.ndarray] = None) -> SurfaceSelection:
    """Triangles of ``tag`` with unit normals pointing out of the adjacent conductor.

    When a triangle touches two tets the conducting one (per ``conducting_tets``,
    a boolean mask over tets) defines the normal; otherwise the first adjacent tet.
    """
    tris = mesh.surface_tris(tag)
    tri_nodes = mesh.boundary_tris[tris]
    areas = mesh.tri_areas(tri_nodes)
    if areas.sum() <= 0:
        raise MeshError(f"Surface {tag} has zero area")

    adjacent = mesh.face_tets(tri_nodes)
    owner = adjacent[:, 0].copy()
    if conducting_tets is not None:
        second = adjacent[:, 1]
        use_second = (second >= 0) & ~conducting_tets[owner] & conducting_tets[np.maximum(second, 0)]
        owner[use_second] = second[use_second]

    p = mesh.nodes[tri_nodes]
    normals = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    centroid_tet = mesh.nodes[mesh.tets[owner]].mean(axis=1)
    inward = np.einsum("ij,ij->i", normals, centroid_tet - p[:, 0]) > 0
    normals[inward] *= -1.0
    return SurfaceSelection(tag=tag, tris=tris, area=float(areas.sum()), normals=normals, tri_areas=areas)
