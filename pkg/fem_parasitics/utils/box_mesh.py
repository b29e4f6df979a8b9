"""Structured tetrahedral box meshes with tagged regions and surfaces.

Each hexahedral cell of a tensor grid is split into six tetrahedra along its main
diagonal (Kuhn split). All cells use the same split, so the result is conforming.
Conductors, dielectrics and cores are axis-aligned blocks; terminals are
axis-aligned rectangles on grid planes.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from fem_parasitics.constants import PhysicalNames
from fem_parasitics.core.mesh import LOCAL_FACES, Mesh, MeshError

logger = logging.getLogger(__name__)

Point = Tuple[float, float, float]

VOLUME_TAG_BASE = 1
SURFACE_TAG_BASE = 101
MSH_TRIANGLE = 2
MSH_TETRAHEDRON = 4


@dataclass(frozen=True)
class Block:
    """Axis-aligned region; a cell belongs to it when its center is inside."""

    name: str
    lo: Point
    hi: Point

    def contains(self, centers: np.ndarray) -> np.ndarray:
        return np.all((centers > np.asarray(self.lo)) & (centers < np.asarray(self.hi)), axis=1)


@dataclass(frozen=True)
class Patch:
    """Rectangle on the grid plane ``x[axis] == position``.

    ``lo``/``hi`` bound the two remaining coordinates in increasing axis order.
    """

    name: str
    axis: int
    position: float
    lo: Tuple[float, float]
    hi: Tuple[float, float]


def _kuhn_paths() -> np.ndarray:
    paths = []
    for perm in itertools.permutations(range(3)):
        bits = [0]
        for axis in perm:
            bits.append(bits[-1] | (1 << axis))
        paths.append(bits)
    return np.array(paths)


KUHN_PATHS = _kuhn_paths()


def graded(start: float, stop: float, h0: float, growth: float = 1.5) -> np.ndarray:
    """Points after ``start`` up to and including ``stop`` with spacing h0 * growth**k."""
    dist = abs(stop - start)
    if dist <= 0:
        return np.zeros(0)
    if h0 <= 0 or growth < 1:
        raise ValueError(f"Need h0 > 0 and growth >= 1, got {h0}, {growth}")
    steps, total, h = [], 0.0, h0
    while dist - total > 1.5 * h:
        total += h
        steps.append(total)
        h *= growth
    steps.append(dist)
    return start + math.copysign(1.0, stop - start) * np.array(steps)


def axis_coords(breaks: Sequence[float], h: float, bounds: Optional[Tuple[float, float]] = None, growth: float = 1.5) -> np.ndarray:
    """Grid coordinates through every breakpoint, spacing at most ``h`` between them.

    With ``bounds`` the grid is extended outwards with geometrically growing cells.
    """
    breaks = np.unique(np.asarray(breaks, dtype=float))
    pieces = [breaks[:1]]
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(1, math.ceil((b - a) / h - 1e-9))
        pieces.append(np.linspace(a, b, n + 1)[1:])
    core = np.concatenate(pieces)
    if bounds is None:
        return core
    lo, hi = bounds
    if lo > core[0] or hi < core[-1]:
        raise ValueError(f"Bounds {bounds} do not enclose the breakpoints [{core[0]}, {core[-1]}]")
    return np.concatenate([graded(core[0], lo, h, growth)[::-1], core, graded(core[-1], hi, h, growth)])


def box_mesh(
    xs: Sequence[float],
    ys: Sequence[float],
    zs: Sequence[float],
    background: str = "air",
    blocks: Sequence[Block] = (),
    patches: Sequence[Patch] = (),
    outer_surface: Optional[str] = None,
) -> Mesh:
    """Tetrahedral mesh of the tensor grid ``xs x ys x zs``.

    Args:
        xs, ys, zs: Strictly increasing grid coordinates.
        background: Region name of cells outside every block.
        blocks: Regions; later blocks override earlier ones.
        patches: Tagged surfaces; every grid face inside a patch rectangle is tagged.
        outer_surface: Optional name that tags the whole outer boundary.

    Returns:
        Mesh with physical names for all regions and surfaces.
    """
    axes = [np.asarray(a, dtype=float) for a in (xs, ys, zs)]
    for name, a in zip("xyz", axes):
        if len(a) < 2 or np.any(np.diff(a) <= 0):
            raise ValueError(f"{name} coordinates must be strictly increasing with at least two entries")
    nx, ny, nz = (len(a) - 1 for a in axes)

    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([gx.ravel(order="F"), gy.ravel(order="F"), gz.ravel(order="F")], axis=1)

    i, j, k = (c.ravel(order="F") for c in np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"))
    corners = np.stack([(i + (b & 1)) + (nx + 1) * ((j + ((b >> 1) & 1)) + (ny + 1) * (k + ((b >> 2) & 1))) for b in range(8)], axis=1)
    tets = corners[:, KUHN_PATHS].reshape(-1, 4)

    centers = np.stack([0.5 * (axes[0][i] + axes[0][i + 1]), 0.5 * (axes[1][j] + axes[1][j + 1]), 0.5 * (axes[2][k] + axes[2][k + 1])], axis=1)
    region_names = [background] + [b.name for b in blocks if b.name != background]
    region_tags = {name: VOLUME_TAG_BASE + n for n, name in enumerate(dict.fromkeys(region_names))}
    cell_tags = np.full(len(centers), region_tags[background], dtype=np.int64)
    for block in blocks:
        cell_tags[block.contains(centers)] = region_tags[block.name]
    tet_regions = np.repeat(cell_tags, len(KUHN_PATHS))

    physical_names: Dict[Tuple[int, int], str] = {(3, tag): name for name, tag in region_tags.items()}
    tris, tri_tags = _tag_patches(nodes, tets, axes, patches, outer_surface, physical_names)

    mesh = Mesh(nodes=nodes, tets=tets, tet_regions=tet_regions, boundary_tris=tris, tri_tags=tri_tags, physical_names=physical_names)
    empty = [name for name, tag in region_tags.items() if not np.any(tet_regions == tag)]
    if empty:
        raise MeshError(f"Blocks {empty} contain no cell center; refine the grid")
    logger.debug(f"Box mesh {nx}x{ny}x{nz} cells: {mesh.n_tets} tets, {len(tris)} tagged triangles")
    return mesh


def _tag_patches(nodes, tets, axes, patches, outer_surface, physical_names) -> Tuple[np.ndarray, np.ndarray]:
    faces = np.unique(np.sort(tets[:, LOCAL_FACES].reshape(-1, 3), axis=1), axis=0)
    coords = nodes[faces]  # (F, 3, 3)
    tol = 1e-9 * max(float(a[-1] - a[0]) for a in axes)

    selected: List[np.ndarray] = []
    tags: List[np.ndarray] = []
    surface_tag = SURFACE_TAG_BASE

    def add(name: str, mask: np.ndarray) -> None:
        nonlocal surface_tag
        if not mask.any():
            raise MeshError(f"Surface '{name}' selects no grid face")
        physical_names[(2, surface_tag)] = name
        selected.append(faces[mask])
        tags.append(np.full(int(mask.sum()), surface_tag, dtype=np.int64))
        surface_tag += 1

    for patch in patches:
        others = [a for a in range(3) if a != patch.axis]
        on_plane = np.all(np.abs(coords[:, :, patch.axis] - patch.position) < tol, axis=1)
        centroid = coords.mean(axis=1)
        inside = np.ones(len(faces), dtype=bool)
        for n, axis in enumerate(others):
            inside &= (centroid[:, axis] > patch.lo[n] - tol) & (centroid[:, axis] < patch.hi[n] + tol)
        add(patch.name, on_plane & inside)

    if outer_surface:
        on_outer = np.zeros(len(faces), dtype=bool)
        for axis, a in enumerate(axes):
            for position in (a[0], a[-1]):
                on_outer |= np.all(np.abs(coords[:, :, axis] - position) < tol, axis=1)
        add(outer_surface, on_outer)

    if not selected:
        return np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(selected), np.concatenate(tags)


def write_msh(mesh: Mesh, path: Union[str, Path]) -> Path:
    """Write ``mesh`` as Gmsh ASCII MSH 2.2 with 1-based node and element ids."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    sections: Dict[str, List[str]] = {"MeshFormat": ["2.2 0 8"]}
    names = sorted(mesh.physical_names.items())
    sections["PhysicalNames"] = [str(len(names))] + [f'{dim} {tag} "{name}"' for (dim, tag), name in names]
    sections["Nodes"] = [str(mesh.n_nodes)] + [f"{n + 1} {x!r} {y!r} {z!r}" for n, (x, y, z) in enumerate(mesh.nodes.tolist())]

    elements = []
    for tri, tag in zip(mesh.boundary_tris.tolist(), mesh.tri_tags.tolist()):
        elements.append(f"{MSH_TRIANGLE} 2 {tag} {tag} " + " ".join(str(v + 1) for v in tri))
    for tet, tag in zip(mesh.tets.tolist(), mesh.tet_regions.tolist()):
        elements.append(f"{MSH_TETRAHEDRON} 2 {tag} {tag} " + " ".join(str(v + 1) for v in tet))
    sections["Elements"] = [str(len(elements))] + [f"{n + 1} {line}" for n, line in enumerate(elements)]

    with open(path, "w", encoding="utf-8", newline="\n") as fid:
        for name, lines in sections.items():
            fid.write(f"${name}\n")
            fid.write("\n".join(lines) + "\n")
            fid.write(f"$End{name}\n")
    logger.info(f"Wrote {path}: {mesh.n_nodes} nodes, {mesh.n_tets} tets")
    return path


# -- fixture geometries -------------------------------------------------------------


def bar_mesh(length: float = 1.0, width: float = 0.2, cells: Tuple[int, int, int] = (2, 2, 8)) -> Mesh:
    """Conductor bar along z with terminals on both end faces (outer boundary)."""
    xs = np.linspace(0.0, width, cells[0] + 1)
    ys = np.linspace(0.0, width, cells[1] + 1)
    zs = np.linspace(0.0, length, cells[2] + 1)
    patches = [
        Patch(PhysicalNames.TERMINAL_PREFIX + "a", 2, 0.0, (0.0, 0.0), (width, width)),
        Patch(PhysicalNames.TERMINAL_PREFIX + "b", 2, length, (0.0, 0.0), (width, width)),
    ]
    return box_mesh(xs, ys, zs, background="conductor", patches=patches)


def square_wire_side(radius: float) -> float:
    """Side of the square with the cross-section area of a round wire."""
    return radius * math.sqrt(math.pi)


def wire_in_air(
    length: float = 0.05,
    radius: float = 1.0e-3,
    margin: Optional[float] = None,
    cross_cells: int = 2,
    axial_cells: int = 10,
    growth: float = 1.6,
) -> Mesh:
    """Straight wire of square cross-section (area pi r^2) along z inside an air box.

    Terminals ``terminal:a`` (z = 0) and ``terminal:b`` (z = length) are the wire's
    end faces, interior to the domain.
    """
    margin = length if margin is None else margin
    half = 0.5 * square_wire_side(radius)
    h = 2.0 * half / cross_cells
    xs = axis_coords([-half, half], h, (-half - margin, half + margin), growth)
    zs = axis_coords([0.0, length], length / axial_cells, (-margin, length + margin), growth)
    blocks = [Block("wire", (-half, -half, 0.0), (half, half, length))]
    patches = [
        Patch(PhysicalNames.TERMINAL_PREFIX + "a", 2, 0.0, (-half, -half), (half, half)),
        Patch(PhysicalNames.TERMINAL_PREFIX + "b", 2, length, (-half, -half), (half, half)),
    ]
    return box_mesh(xs, xs, zs, blocks=blocks, patches=patches)


def two_wires(
    length: float = 0.02,
    side: float = 1.0e-3,
    spacing: float = 4.0e-3,
    margin: Optional[float] = None,
    axial_cells: int = 6,
    growth: float = 1.8,
) -> Mesh:
    """Two parallel square wires along z, centres ``spacing`` apart in x."""
    margin = length if margin is None else margin
    c = 0.5 * spacing
    half = 0.5 * side
    breaks_x = [-c - half, -c + half, c - half, c + half]
    xs = axis_coords(breaks_x, side, (-c - half - margin, c + half + margin), growth)
    ys = axis_coords([-half, half], side, (-half - margin, half + margin), growth)
    zs = axis_coords([0.0, length], length / axial_cells, (-margin, length + margin), growth)
    blocks, patches = [], []
    for n, x0 in enumerate((-c, c), start=1):
        blocks.append(Block(f"wire{n}", (x0 - half, -half, 0.0), (x0 + half, half, length)))
        for end, z in (("a", 0.0), ("b", length)):
            patches.append(Patch(f"{PhysicalNames.TERMINAL_PREFIX}{n}{end}", 2, z, (x0 - half, -half), (x0 + half, half)))
    return box_mesh(xs, ys, zs, blocks=blocks, patches=patches)


def parallel_plates(
    side: float = 0.01,
    gap: float = 1.0e-3,
    thickness: float = 0.5e-3,
    margin: Optional[float] = None,
    lateral_cells: int = 4,
    growth: float = 1.8,
) -> Mesh:
    """Two square plates normal to z with a dielectric block between them.

    ``terminal:a`` is the gap-facing face of the lower plate and ``terminal:b`` the
    gap-facing face of the upper plate.
    """
    margin = side if margin is None else margin
    half = 0.5 * side
    h = side / lateral_cells
    z_lo, z_hi = -0.5 * gap, 0.5 * gap
    xs = axis_coords([-half, half], h, (-half - margin, half + margin), growth)
    zs = axis_coords([z_lo - thickness, z_lo, z_hi, z_hi + thickness], min(gap, thickness), (z_lo - thickness - margin, z_hi + thickness + margin), growth)
    blocks = [
        Block("dielectric", (-half, -half, z_lo), (half, half, z_hi)),
        Block("plate_a", (-half, -half, z_lo - thickness), (half, half, z_lo)),
        Block("plate_b", (-half, -half, z_hi), (half, half, z_hi + thickness)),
    ]
    patches = [
        Patch(PhysicalNames.TERMINAL_PREFIX + "a", 2, z_lo, (-half, -half), (half, half)),
        Patch(PhysicalNames.TERMINAL_PREFIX + "b", 2, z_hi, (-half, -half), (half, half)),
    ]
    return box_mesh(xs, xs, zs, blocks=blocks, patches=patches)


def closed_core_coil(
    core_outer: float = 0.01,
    core_window: float = 0.005,
    core_height: float = 0.004,
    clearance: float = 0.5e-3,
    conductor: float = 1.0e-3,
    cut: float = 1.0e-3,
    margin: Optional[float] = None,
    h: float = 1.0e-3,
    growth: float = 1.8,
) -> Mesh:
    """Single open turn wound around the right leg of a square closed core.

    The core is a square frame in the xy plane (outer side ``core_outer``, window
    ``core_window``) of height ``core_height`` in z. The turn lies in the plane y = 0
    and encircles the leg x in [core_window/2, core_outer/2]. Its outer vertical
    side is cut at z = +-cut/2; the cut faces are ``terminal:a`` (lower) and
    ``terminal:b`` (upper).
    """
    C, c, hz = 0.5 * core_outer, 0.5 * core_window, 0.5 * core_height
    g, w, t = clearance, conductor, 0.5 * conductor
    margin = core_outer if margin is None else margin
    x_in, x_out = c - g, C + g  # inner faces of the turn
    z_in = hz + g
    if x_in - w <= -c:
        raise ValueError("The turn does not fit into the core window")
    xs = axis_coords([-C, -c, x_in - w, x_in, c, C, x_out, x_out + w], h, (-C - margin, x_out + w + margin), growth)
    ys = axis_coords([-C, -c, -t, t, c, C], h, (-C - margin, C + margin), growth)
    zs = axis_coords([-z_in - w, -z_in, -hz, -0.5 * cut, 0.5 * cut, hz, z_in, z_in + w], h, (-z_in - w - margin, z_in + w + margin), growth)

    blocks = [
        Block("core", (-C, -C, -hz), (C, C, hz)),
        Block("air", (-c, -c, -hz), (c, c, hz)),
    ]
    turn = [
        ((x_in - w, -t, -z_in - w), (x_in, t, z_in + w)),  # inner side
        ((x_out, -t, -z_in - w), (x_out + w, t, -0.5 * cut)),  # outer side, below the cut
        ((x_out, -t, 0.5 * cut), (x_out + w, t, z_in + w)),  # outer side, above the cut
        ((x_in - w, -t, z_in), (x_out + w, t, z_in + w)),  # top
        ((x_in - w, -t, -z_in - w), (x_out + w, t, -z_in)),  # bottom
    ]
    blocks += [Block("coil", lo, hi) for lo, hi in turn]
    patches = [
        Patch(PhysicalNames.TERMINAL_PREFIX + "a", 2, -0.5 * cut, (x_out, -t), (x_out + w, t)),
        Patch(PhysicalNames.TERMINAL_PREFIX + "b", 2, 0.5 * cut, (x_out, -t), (x_out + w, t)),
    ]
    return box_mesh(xs, ys, zs, blocks=blocks, patches=patches)


FIXTURES: Dict[str, Callable[..., Mesh]] = {
    "bar": bar_mesh,
    "wire": wire_in_air,
    "two_wires": two_wires,
    "plates": parallel_plates,
    "coil": closed_core_coil,
}
