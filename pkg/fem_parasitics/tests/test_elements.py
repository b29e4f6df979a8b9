import numpy as np
import pytest

from fem_parasitics.core import elements
from fem_parasitics.core.mesh import LOCAL_EDGES, LOCAL_FACES, DegenerateElementError

# Four-point rule, exact for polynomials of degree 2 on a tet
QUAD_A = 0.5854101966249685
QUAD_B = 0.1381966011250105

REFERENCE_TET = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


@pytest.fixture
def skewed_tet():
    return np.array([[0.1, -0.2, 0.05], [1.3, 0.1, -0.1], [0.2, 0.9, 0.3], [-0.1, 0.25, 1.1]])


def _quadrature(coords):
    """Barycentric coordinates (4 points x 4), weights and barycentric gradients by direct inversion."""
    bary = np.full((4, 4), QUAD_B)
    np.fill_diagonal(bary, QUAD_A)
    volume = abs(np.linalg.det(coords[1:] - coords[0])) / 6.0
    grads = np.linalg.inv(np.c_[np.ones(4), coords])[1:].T
    return bary, np.full(4, volume / 4.0), grads


def _whitney(bary_q, grads):
    return np.array([bary_q[i] * grads[j] - bary_q[j] * grads[i] for i, j in LOCAL_EDGES])


def test_reference_stiffness():
    k = elements.elem_scalar_stiffness(REFERENCE_TET)
    assert k[0, 0] == pytest.approx(0.5)
    assert k[0, 1] == pytest.approx(-1.0 / 6.0)
    assert k[1, 1] == pytest.approx(1.0 / 6.0)
    assert k[1, 2] == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(k.sum(axis=1), 0.0, atol=1e-14)


def test_scalar_mass_matches_quadrature(skewed_tet):
    bary, weights, _ = _quadrature(skewed_tet)
    expected = np.einsum("q,qi,qj->ij", weights, bary, bary)
    np.testing.assert_allclose(elements.elem_scalar_mass(skewed_tet), expected, rtol=1e-12)


def test_edge_mass_matches_quadrature(skewed_tet):
    """The closed-form Whitney mass equals the degree-2 quadrature."""
    bary, weights, grads = _quadrature(skewed_tet)
    expected = np.zeros((6, 6))
    for q in range(4):
        w = _whitney(bary[q], grads)
        expected += weights[q] * w @ w.T
    np.testing.assert_allclose(elements.elem_edge_mass(skewed_tet, 2.5), 2.5 * expected, rtol=1e-12)


def test_mixed_grad_matches_quadrature(skewed_tet):
    bary, weights, grads = _quadrature(skewed_tet)
    expected = np.zeros((6, 4))
    for q in range(4):
        expected += weights[q] * _whitney(bary[q], grads) @ grads.T
    np.testing.assert_allclose(elements.elem_mixed_grad(skewed_tet), expected, rtol=1e-12, atol=1e-15)


def test_mixed_grad_is_mass_times_gradient(skewed_tet):
    """Gradients of nodal functions lie in the edge space: G = M T."""
    t = elements.local_gradient_incidence()
    np.testing.assert_allclose(elements.elem_mixed_grad(skewed_tet, 3.0), elements.elem_edge_mass(skewed_tet, 3.0) @ t, rtol=1e-12, atol=1e-15)


def test_curl_curl_annihilates_gradients(skewed_tet):
    c = elements.elem_curl_curl(skewed_tet)
    t = elements.local_gradient_incidence()
    np.testing.assert_allclose(c @ t, 0.0, atol=1e-12)
    np.testing.assert_allclose(c, c.T, rtol=1e-13)


def test_edge_curls_satisfy_stokes_on_faces(skewed_tet):
    """Flux of curl w_e through a face equals the circulation of w_e around it."""
    _, grads = elements.tet_geometry(skewed_tet)
    curls = elements.edge_curls(grads)[0]
    edge_index = {tuple(e): n for n, e in enumerate(LOCAL_EDGES.tolist())}
    for face in LOCAL_FACES:
        i, j, k = sorted(face.tolist())
        p = skewed_tet
        area_vector = 0.5 * np.cross(p[j] - p[i], p[k] - p[i])
        circulation = np.zeros(6)
        circulation[edge_index[(i, j)]] = 1.0
        circulation[edge_index[(j, k)]] = 1.0
        circulation[edge_index[(i, k)]] = -1.0
        np.testing.assert_allclose(curls @ area_vector, circulation, atol=1e-12)


def test_rotation_field_is_reproduced(skewed_tet):
    """A = (b x r) / 2 lies in the lowest-order edge space and has curl b."""
    b = np.array([0.3, -0.7, 1.0])
    dofs = []
    for i, j in LOCAL_EDGES:
        midpoint = 0.5 * (skewed_tet[i] + skewed_tet[j])
        dofs.append(0.5 * np.cross(b, midpoint) @ (skewed_tet[j] - skewed_tet[i]))
    dofs = np.array(dofs)

    np.testing.assert_allclose(elements.curl_of_edge_field(skewed_tet, dofs), b, rtol=1e-12)
    centroid = skewed_tet.mean(axis=0)
    np.testing.assert_allclose(elements.edge_field_at_centroid(skewed_tet, dofs), 0.5 * np.cross(b, centroid), rtol=1e-12, atol=1e-14)


def test_gradient_field_at_centroid(skewed_tet):
    u = np.array([1.0, -2.0, 0.5, 3.0])
    _, grads = elements.tet_geometry(skewed_tet)
    dofs = elements.local_gradient_incidence() @ u
    np.testing.assert_allclose(elements.edge_field_at_centroid(skewed_tet, dofs), u @ grads[0], rtol=1e-12)


def test_batches_match_single_tets(skewed_tet):
    batch = np.stack([REFERENCE_TET, skewed_tet])
    stacked = elements.elem_edge_mass(batch, [1.0, 4.0])
    assert stacked.shape == (2, 6, 6)
    np.testing.assert_allclose(stacked[1], 4.0 * elements.elem_edge_mass(skewed_tet), rtol=1e-14)
    assert elements.elem_scalar_stiffness(REFERENCE_TET).shape == (4, 4)


def test_degenerate_and_malformed_input():
    flat = REFERENCE_TET.copy()
    flat[3] = [0.5, 0.5, 0.0]
    with pytest.raises(DegenerateElementError):
        elements.elem_scalar_mass(flat)
    with pytest.raises(ValueError, match="shape"):
        elements.elem_curl_curl(np.zeros((3, 3)))
