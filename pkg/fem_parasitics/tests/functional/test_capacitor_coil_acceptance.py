"""Static limits on the parallel-plate and closed-core coil fixtures."""

import pytest

from fem_parasitics.cli import sweep_point
from fem_parasitics.extractor import ImpedanceExtractor
from fem_parasitics.models.data_models import BoundaryKind, Branch, ConductorModel, Formulation, MaterialProps, ProblemSpec, saturation
from fem_parasitics.oracle.plates import parallel_plate_c
from fem_parasitics.tests.mesh_fixtures import materials_by_name
from fem_parasitics.utils.box_mesh import closed_core_coil, parallel_plates

pytestmark = pytest.mark.acceptance

SIDE = 0.01
GAP = 1.0e-3
VALUES = [1.0, 10.0, 100.0, 1000.0]


@pytest.fixture(scope="module")
def plates():
    mesh = parallel_plates(side=SIDE, gap=GAP, lateral_cells=8)
    materials = materials_by_name(mesh, {"plate_a": MaterialProps(pec=True), "plate_b": MaterialProps(pec=True)})
    return mesh, materials


@pytest.fixture(scope="module")
def coil():
    mesh = closed_core_coil(h=0.5e-3)
    return mesh, materials_by_name(mesh, {"coil": MaterialProps(pec=True)})


def _extractor(mesh, materials, formulation):
    branch = Branch(mesh.tag_of("terminal:a", 2), mesh.tag_of("terminal:b", 2), "branch")
    spec = ProblemSpec(formulation, ConductorModel.PEC, [branch], [], boundary=BoundaryKind.DUAL_IMAGE)
    return ImpedanceExtractor(mesh, materials, spec)


def test_plate_capacitance_is_bounded_below(plates):
    mesh, materials = plates
    result = _extractor(mesh, materials, Formulation.DARWIN).extract_C_darwin_pec(f0=100.0)

    ideal = parallel_plate_c(SIDE * SIDE, GAP)
    assert result.capacitance >= ideal
    assert result.capacitance < 2.0 * ideal
    assert max(result.e_x.values()) < 1e-6


def test_capacitance_scales_with_permittivity(plates):
    mesh, materials = plates
    dielectric = mesh.tag_of("dielectric", 3)
    points = []
    for value in VALUES:
        swept = materials.with_override(dielectric, eps_r=value)
        points.append(sweep_point(_extractor(mesh, swept, Formulation.DARWIN), "eps_r", value, 100.0))

    normalized = [p.normalized for p in points]
    assert all(b <= a for a, b in zip(normalized, normalized[1:]))
    assert saturation(points) < 0.05


def test_inductance_scales_with_permeability(coil):
    mesh, materials = coil
    core = mesh.tag_of("core", 3)
    points = []
    for value in VALUES:
        swept = materials.with_override(core, mu_r=value)
        points.append(sweep_point(_extractor(mesh, swept, Formulation.MQS), "mu_r", value, 100.0))

    assert points[-1].extracted > points[0].extracted
    assert saturation(points) < 0.05
