import numpy as np
import pytest

from fem_parasitics.core.linsolve import SolverError
from fem_parasitics.core.mesh import select_surface
from fem_parasitics.extractor import (
    ExtractionError,
    ExtractionOptions,
    ImpedanceExtractor,
    dual_image,
    impedance_matrix,
    mean_axial_current,
    terminal_voltage,
)
from fem_parasitics.models.data_models import (
    BoundaryKind,
    Branch,
    ConductorModel,
    Formulation,
    MaterialProps,
    ProblemSpec,
    SweepResult,
)
from fem_parasitics.oracle.plates import parallel_plate_c
from fem_parasitics.tests.mesh_fixtures import copper, materials_by_name, small_bar, small_two_wires, small_wire, wire_materials
from fem_parasitics.utils.box_mesh import parallel_plates


def _branch(mesh, a="terminal:a", b="terminal:b", name=""):
    return Branch(mesh.tag_of(a, 2), mesh.tag_of(b, 2), name)


def _extractor(mesh, materials, formulation, conductor_model, frequencies, boundary=BoundaryKind.MAGNETIC, branches=None, sigma_tilde=1.0, **options):
    spec = ProblemSpec(
        formulation=formulation,
        conductor_model=conductor_model,
        branches=branches or [_branch(mesh)],
        frequencies=frequencies,
        boundary=boundary,
        sigma_tilde=sigma_tilde,
    )
    return ImpedanceExtractor(mesh, materials, spec, ExtractionOptions(**options))


@pytest.fixture
def bar():
    mesh = small_bar()
    return mesh, materials_by_name(mesh, {"conductor": MaterialProps(sigma=1.0e3)})


def test_source_potential_is_linear_along_bar(bar):
    """The stationary source current in a uniform bar gives a potential linear in z."""
    mesh, materials = bar
    extractor = _extractor(mesh, materials, Formulation.FULL_WAVE, ConductorModel.LOSSY, [1.0e3])
    xi = extractor.solve_xi(extractor.spec.branches[0])

    z = mesh.nodes[:, 2]
    slope, offset = np.polyfit(z, xi, 1)
    np.testing.assert_allclose(xi, slope * z + offset, atol=1e-9 * abs(slope))
    # |grad xi| = I0 / (sigma_tilde A)
    assert abs(slope) == pytest.approx(1.0 / 0.04, rel=1e-9)


def test_swapped_terminals_negate_source_potential(bar):
    mesh, materials = bar
    extractor = _extractor(mesh, materials, Formulation.FULL_WAVE, ConductorModel.LOSSY, [1.0e3])
    forward = extractor.solve_xi(_branch(mesh))
    backward = extractor.solve_xi(_branch(mesh, "terminal:b", "terminal:a"))
    np.testing.assert_allclose(backward, -forward, atol=1e-10 * np.abs(forward).max())


def test_branch_load_conserves_charge(bar):
    mesh, materials = bar
    extractor = _extractor(mesh, materials, Formulation.MQS, ConductorModel.LOSSY, [1.0])
    load = extractor.branch_load(extractor.spec.branches[0])
    assert load.sum() == pytest.approx(0.0, abs=1e-12)
    assert load.max() == pytest.approx(-load.min())


def test_terminal_voltage_ignores_constant_offset():
    mesh = small_bar()
    surface_a = select_surface(mesh, mesh.tag_of("terminal:a", 2))
    surface_b = select_surface(mesh, mesh.tag_of("terminal:b", 2))
    phi = mesh.nodes[:, 2] * (2.0 + 1.0j)
    v = terminal_voltage(phi, mesh, surface_a, surface_b)
    assert v == pytest.approx(2.0 + 1.0j)
    assert terminal_voltage(phi + 5.0, mesh, surface_a, surface_b) == pytest.approx(v)


def test_impedance_matrix_is_reciprocal():
    mesh = small_two_wires()
    branches = [_branch(mesh, "terminal:1a", "terminal:1b", "w1"), _branch(mesh, "terminal:2a", "terminal:2b", "w2")]
    extractor = _extractor(mesh, wire_materials(mesh), Formulation.MQS, ConductorModel.LOSSY, [1.0e4], BoundaryKind.ELECTRIC, branches)
    z = extractor.run().impedance[0]

    assert z.shape == (2, 2)
    assert abs(z[0, 1] - z[1, 0]) <= 1e-8 * abs(z[0, 1])
    assert abs(z[0, 1]) < abs(z[0, 0])


def test_fictitious_conductivity_drops_out():
    mesh = small_wire()
    materials = wire_materials(mesh)
    z1 = _extractor(mesh, materials, Formulation.FULL_WAVE, ConductorModel.LOSSY, [1.0e4]).run().impedance
    z100 = _extractor(mesh, materials, Formulation.FULL_WAVE, ConductorModel.LOSSY, [1.0e4], sigma_tilde=100.0).run().impedance
    np.testing.assert_allclose(z100, z1, rtol=1e-8)


def test_pec_mqs_reactance_is_linear_in_frequency(caplog):
    mesh = small_wire()
    extractor = _extractor(mesh, wire_materials(mesh, pec=True), Formulation.MQS, ConductorModel.PEC, [1.0e3, 2.0e3])
    result = extractor.run()

    x = result.reactance()[:, 0, 0]
    assert x[1] == pytest.approx(2.0 * x[0], rel=1e-12)
    np.testing.assert_array_equal(result.resistance(), 0.0)
    assert result.inf_band
    assert result.band_inductance[0, 0] > 0
    np.testing.assert_allclose(extractor.extract_L_pec_mqs(), result.band_inductance, rtol=1e-12)
    assert "not compatible" not in caplog.text


def test_pec_mqs_without_frequencies_gives_band_inductance():
    mesh = small_wire()
    result = _extractor(mesh, wire_materials(mesh, pec=True), Formulation.MQS, ConductorModel.PEC, []).run()
    assert result.frequencies.size == 0
    assert result.inductance().shape == (1, 1, 1)


def test_pec_mqs_rejects_lossy_regions():
    mesh = small_wire()
    extractor = _extractor(mesh, wire_materials(mesh), Formulation.MQS, ConductorModel.PEC, [])
    with pytest.raises(ExtractionError, match="lossy"):
        extractor.extract_L_pec_mqs()


def test_static_limit_of_dynamic_formulations_is_rejected(bar):
    mesh, materials = bar
    extractor = _extractor(mesh, materials, Formulation.FULL_WAVE, ConductorModel.LOSSY, [1.0e3])
    with pytest.raises(ExtractionError, match="undefined"):
        extractor.solve_fields(extractor.spec.branches[0], 0.0)


def test_sweep_without_frequencies(bar):
    mesh, materials = bar
    with pytest.raises(ExtractionError, match="No frequencies"):
        _extractor(mesh, materials, Formulation.MQS, ConductorModel.LOSSY, []).run()


def test_unknown_terminal_surface(bar):
    mesh, materials = bar
    with pytest.raises(ExtractionError, match="Terminal surface 999"):
        _extractor(mesh, materials, Formulation.MQS, ConductorModel.LOSSY, [1.0], branches=[Branch(999, mesh.tag_of("terminal:b", 2))])


def test_failed_frequency_gives_nan_row(bar, mocker):
    """A solver failure marks its frequency and the sweep carries on."""
    mesh, materials = bar
    extractor = _extractor(mesh, materials, Formulation.MQS, ConductorModel.LOSSY, [10.0, 100.0])

    def voltages(state, boundary, frequency):
        if frequency == 10.0:
            raise SolverError("singular at 10 Hz")
        return np.full((1, 1), 2.0 + 3.0j)

    mocker.patch.object(extractor, "_frequency_voltages", side_effect=voltages)
    result = extractor.run()

    np.testing.assert_array_equal(result.failed, [True, False])
    assert np.isnan(result.impedance[0, 0, 0])
    assert result.impedance[1, 0, 0] == 2.0 + 3.0j
    assert result.any_failed


def test_dual_boundary_runs_both_kinds(bar, mocker):
    mesh, materials = bar
    extractor = _extractor(mesh, materials, Formulation.MQS, ConductorModel.LOSSY, [10.0], BoundaryKind.DUAL_IMAGE)
    values = {BoundaryKind.ELECTRIC: 1.0 + 2.0j, BoundaryKind.MAGNETIC: 3.0 + 4.0j}
    mocker.patch.object(extractor, "prepare")
    mocker.patch.object(extractor, "_frequency_voltages", side_effect=lambda state, boundary, f: np.full((1, 1), values[boundary]))

    result = extractor.run()

    assert result.boundary is BoundaryKind.DUAL_IMAGE
    assert result.impedance[0, 0, 0] == 2.0 + 3.0j


def _result(values, boundary, failed=None, frequencies=None):
    values = np.asarray(values, dtype=complex).reshape(-1, 1, 1)
    return SweepResult(
        frequencies=np.arange(1.0, len(values) + 1.0) if frequencies is None else np.asarray(frequencies, dtype=float),
        impedance=values,
        branch_names=["0"],
        formulation=Formulation.MQS,
        conductor_model=ConductorModel.LOSSY,
        boundary=boundary,
        failed=np.zeros(len(values), dtype=bool) if failed is None else np.asarray(failed),
    )


def test_dual_image_is_entrywise_mean():
    electric = _result([1.0, 2.0j], BoundaryKind.ELECTRIC)
    magnetic = _result([3.0, 4.0j], BoundaryKind.MAGNETIC, failed=[False, True])
    mean = dual_image(electric, magnetic)
    np.testing.assert_allclose(mean.impedance[:, 0, 0], [2.0, 3.0j])
    np.testing.assert_array_equal(mean.failed, [False, True])

    with pytest.raises(ValueError, match="share frequencies"):
        dual_image(electric, _result([1.0], BoundaryKind.MAGNETIC))


def test_impedance_matrix_checks_shape(bar):
    mesh, _ = bar
    spec = ProblemSpec(Formulation.MQS, ConductorModel.LOSSY, [_branch(mesh)], [1.0, 2.0], I0=2.0)
    result = impedance_matrix(spec, np.full((2, 1, 1), 4.0), BoundaryKind.MAGNETIC)
    np.testing.assert_allclose(result.impedance, 2.0)
    with pytest.raises(ValueError, match="shape"):
        impedance_matrix(spec, np.zeros((2, 2, 2)), BoundaryKind.MAGNETIC)


def test_capacitance_from_capacitive_reactance(mocker):
    """A purely capacitive reactance -1/(w C) is recovered with zero self-consistency error."""
    mesh = small_bar()
    materials = materials_by_name(mesh, {"conductor": copper(pec=True)})
    extractor = _extractor(mesh, materials, Formulation.DARWIN, ConductorModel.PEC, [])
    c_true = 2.0e-12

    def fake_run(self):
        freqs = np.asarray(self.spec.frequencies)
        z = -1j / (2.0 * np.pi * freqs * c_true)
        return _result(z, BoundaryKind.ELECTRIC, frequencies=freqs)

    mocker.patch.object(ImpedanceExtractor, "run", fake_run)
    result = extractor.extract_C_darwin_pec(f0=100.0)

    assert result.capacitance == pytest.approx(c_true, rel=1e-12)
    assert result.f0 == 100.0
    assert max(result.e_x.values()) < 1e-12
    assert sorted(result.e_x) == [50.0, 100.0]


def test_capacitance_failed_frequency_is_a_solver_error(mocker):
    mesh = small_bar()
    materials = materials_by_name(mesh, {"conductor": copper(pec=True)})
    extractor = _extractor(mesh, materials, Formulation.DARWIN, ConductorModel.PEC, [])
    failed = _result([-2.0j, np.nan], BoundaryKind.ELECTRIC, failed=[False, True], frequencies=[50.0, 100.0])
    mocker.patch.object(ImpedanceExtractor, "run", lambda self: failed)
    with pytest.raises(SolverError, match="100.0"):
        extractor.extract_C_darwin_pec(f0=100.0)


def test_capacitance_rejects_inductive_branch(mocker):
    mesh = small_bar()
    materials = materials_by_name(mesh, {"conductor": copper(pec=True)})
    extractor = _extractor(mesh, materials, Formulation.DARWIN, ConductorModel.PEC, [])
    mocker.patch.object(ImpedanceExtractor, "run", lambda self: _result([1.0j, 2.0j], BoundaryKind.ELECTRIC))
    with pytest.raises(ExtractionError, match="not capacitive"):
        extractor.extract_C_darwin_pec(f0=2.0)
    with pytest.raises(ExtractionError, match="Test frequency"):
        extractor.extract_C_darwin_pec(f0=0.0)


def test_darwin_agrees_with_full_wave_far_below_resonance():
    mesh = small_wire()
    materials = wire_materials(mesh)
    darwin = _extractor(mesh, materials, Formulation.DARWIN, ConductorModel.LOSSY, [1.0e4], BoundaryKind.ELECTRIC).run()
    full_wave = _extractor(mesh, materials, Formulation.FULL_WAVE, ConductorModel.LOSSY, [1.0e4], BoundaryKind.ELECTRIC).run()

    assert not darwin.any_failed
    np.testing.assert_allclose(darwin.impedance, full_wave.impedance, rtol=1e-6)


def test_solve_darwin_needs_darwin_formulation(bar):
    mesh, materials = bar
    extractor = _extractor(mesh, materials, Formulation.MQS, ConductorModel.LOSSY, [10.0])
    source = extractor.assemble_source(extractor.spec.branches[0], 10.0)
    with pytest.raises(ExtractionError, match="Darwin"):
        extractor.solve_darwin(source, 10.0)


def test_conductor_carries_the_source_current():
    mesh = small_wire()
    materials = wire_materials(mesh)
    extractor = _extractor(mesh, materials, Formulation.MQS, ConductorModel.LOSSY, [50.0])
    fields = extractor.solve_fields(extractor.spec.branches[0], 50.0)

    # one element layer in the middle of the wire
    layers = np.unique(mesh.nodes[:, 2])
    layers = layers[(layers >= 0.0) & (layers <= 0.01)]
    lo, hi = layers[1], layers[2]
    sigma = materials.per_tet(mesh.tet_regions, "sigma")
    current = mean_axial_current(mesh, fields.E, sigma, 2, lo, hi)
    assert abs(current) == pytest.approx(extractor.spec.I0, rel=2e-2)


@pytest.mark.parametrize("pec", [False, True])
def test_impedance_is_independent_of_tree_root(pec):
    mesh = small_wire()
    materials = wire_materials(mesh, pec=pec)
    model = ConductorModel.PEC if pec else ConductorModel.LOSSY
    impedances = [_extractor(mesh, materials, Formulation.MQS, model, [1.0e4], tree_root=root).run().impedance for root in (0, mesh.n_nodes // 2)]
    np.testing.assert_allclose(impedances[1], impedances[0], rtol=1e-8)


@pytest.fixture
def plates():
    mesh = parallel_plates(side=0.01, gap=1.0e-3, margin=5.0e-3, lateral_cells=2, growth=2.0)
    return mesh, materials_by_name(mesh, {"plate_a": MaterialProps(pec=True), "plate_b": MaterialProps(pec=True)})


def test_darwin_pec_plates_are_capacitive(plates):
    mesh, materials = plates
    extractor = _extractor(mesh, materials, Formulation.DARWIN, ConductorModel.PEC, [], BoundaryKind.ELECTRIC)
    result = extractor.extract_C_darwin_pec(f0=100.0)

    assert result.reactance < 0
    assert np.isfinite(result.capacitance)
    ideal = parallel_plate_c(0.01 * 0.01, 1.0e-3)
    assert 0.5 * ideal < result.capacitance < 5.0 * ideal


def test_pec_mqs_between_separate_conductors_warns(plates, caplog):
    mesh, materials = plates
    extractor = _extractor(mesh, materials, Formulation.MQS, ConductorModel.PEC, [])
    extractor.extract_L_pec_mqs()
    assert "not compatible" in caplog.text
