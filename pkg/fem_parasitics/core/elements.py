"""Local element matrices for linear nodal and lowest-order Whitney edge elements.

All functions accept the vertex coordinates of one tet, shape (4, 3), or of a
batch of tets, shape (T, 4, 3), and return one matrix or a stacked batch
accordingly. Edge ``(i, j)`` of a tet is oriented from local vertex i to j and
numbered as in ``LOCAL_EDGES``; callers pass vertices in ascending global order
so that the local and global edge orientations agree.
"""

from typing import Tuple

import numpy as np

from fem_parasitics.constants import DEGENERATE_VOLUME_TOL
from fem_parasitics.core.mesh import LOCAL_EDGES, DegenerateElementError

_EI = LOCAL_EDGES[:, 0]
_EJ = LOCAL_EDGES[:, 1]


def _batch(coords) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(coords, dtype=float)
    if arr.shape == (4, 3):
        return arr[None], True
    if arr.ndim != 3 or arr.shape[1:] != (4, 3):
        raise ValueError(f"Expected tet coordinates of shape (4, 3) or (T, 4, 3), got {arr.shape}")
    return arr, False


def _coefficient(coefficient, n: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(coefficient, dtype=float), (n,))


def _out(mats: np.ndarray, single: bool) -> np.ndarray:
    return mats[0] if single else mats


def tet_geometry(coords) -> Tuple[np.ndarray, np.ndarray]:
    """Volumes (T,) and barycentric gradients (T, 4, 3) of a batch of tets."""
    p, _ = _batch(coords)
    mat = np.concatenate([np.ones(p.shape[:2] + (1,)), p], axis=2)
    det = np.linalg.det(mat)
    vol = np.abs(det) / 6.0
    bad = np.flatnonzero(vol < DEGENERATE_VOLUME_TOL)
    if bad.size:
        raise DegenerateElementError(f"Tetrahedron {bad[0]} is degenerate (volume {vol[bad[0]]:.3e} m^3)", int(bad[0]), float(vol[bad[0]]))
    # Column j of inv(mat) holds the affine coefficients of lambda_j.
    grads = np.linalg.inv(mat)[:, 1:, :].transpose(0, 2, 1)
    return vol, grads


def _grad_products(grads: np.ndarray) -> np.ndarray:
    return np.einsum("tik,tjk->tij", grads, grads)


def elem_scalar_stiffness(coords, coefficient=1.0) -> np.ndarray:
    """K_ij = c V grad(lambda_i) . grad(lambda_j)."""
    p, single = _batch(coords)
    vol, grads = tet_geometry(p)
    c = _coefficient(coefficient, len(p))
    return _out((c * vol)[:, None, None] * _grad_products(grads), single)


def elem_scalar_mass(coords, coefficient=1.0) -> np.ndarray:
    """Consistent P1 mass: c V / 20 off the diagonal and c V / 10 on it."""
    p, single = _batch(coords)
    vol, _ = tet_geometry(p)
    c = _coefficient(coefficient, len(p))
    pattern = (np.ones((4, 4)) + np.eye(4)) / 20.0
    return _out((c * vol)[:, None, None] * pattern[None], single)


def edge_curls(grads: np.ndarray) -> np.ndarray:
    """Constant curls 2 grad(lambda_i) x grad(lambda_j) of the six edge functions, (T, 6, 3)."""
    return 2.0 * np.cross(grads[:, _EI], grads[:, _EJ])


def elem_curl_curl(coords, nu_r=1.0) -> np.ndarray:
    p, single = _batch(coords)
    vol, grads = tet_geometry(p)
    curls = edge_curls(grads)
    c = _coefficient(nu_r, len(p))
    return _out((c * vol)[:, None, None] * np.einsum("tek,tfk->tef", curls, curls), single)


def elem_edge_mass(coords, coefficient=1.0) -> np.ndarray:
    """Exact integral of w_e . w_f for w_(ij) = lambda_i grad(lambda_j) - lambda_j grad(lambda_i)."""
    p, single = _batch(coords)
    vol, grads = tet_geometry(p)
    d = _grad_products(grads)
    # Integral of lambda_a lambda_b over the tet is V (1 + delta_ab) / 20.
    lam = np.ones((4, 4)) + np.eye(4)
    i, j = _EI[:, None], _EJ[:, None]
    k, l = _EI[None, :], _EJ[None, :]
    m = lam[i, k] * d[:, j, l] - lam[i, l] * d[:, j, k] - lam[j, k] * d[:, i, l] + lam[j, l] * d[:, i, k]
    c = _coefficient(coefficient, len(p))
    return _out((c * vol / 20.0)[:, None, None] * m, single)


def elem_mixed_grad(coords, eps_r=1.0) -> np.ndarray:
    """G_en = c * integral of w_e . grad(lambda_n), shape (6, 4)."""
    p, single = _batch(coords)
    vol, grads = tet_geometry(p)
    d = _grad_products(grads)
    c = _coefficient(eps_r, len(p))
    g = d[:, _EJ, :] - d[:, _EI, :]
    return _out((c * vol / 4.0)[:, None, None] * g, single)


def local_gradient_incidence() -> np.ndarray:
    """6x4 discrete gradient of a tet: +1 at the head node, -1 at the tail node."""
    t = np.zeros((6, 4))
    t[np.arange(6), _EJ] = 1.0
    t[np.arange(6), _EI] = -1.0
    return t


def curl_of_edge_field(coords, edge_values) -> np.ndarray:
    """Per-tet curl (T, 3) of an edge field given by its six local dof values (T, 6)."""
    p, single = _batch(coords)
    _, grads = tet_geometry(p)
    curls = edge_curls(grads)
    values = np.asarray(edge_values).reshape(len(p), 6)
    return _out(np.einsum("te,tek->tk", values, curls), single)


def edge_field_at_centroid(coords, edge_values) -> np.ndarray:
    """Value (T, 3) of an edge field at each tet centroid, where every lambda is 1/4."""
    p, single = _batch(coords)
    _, grads = tet_geometry(p)
    values = np.asarray(edge_values).reshape(len(p), 6)
    shapes = (grads[:, _EJ] - grads[:, _EI]) / 4.0
    return _out(np.einsum("te,tek->tk", values, shapes), single)
