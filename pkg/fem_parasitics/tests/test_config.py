import json
from pathlib import Path

import pytest

from fem_parasitics.models.data_models import BoundaryKind, ConductorModel, Formulation, MaterialError, Stabilization
from fem_parasitics.tests.mesh_fixtures import small_bar, small_wire
from fem_parasitics.utils.box_mesh import write_msh
from fem_parasitics.utils.config import ConfigError, RunConfig, load_run_config, log_frequencies, parse_run_config


def _base(**overrides):
    raw = {
        "config_version": 1,
        "mesh_path": "meshes/bar.msh",
        "materials": {"conductor": {"sigma": 1.0e3}},
        "branches": [{"name": "bar", "terminal_a": "terminal:a", "terminal_b": "b"}],
        "formulation": "mqs",
        "conductor_model": "lossy",
        "boundary": "magnetic",
        "frequencies": [100, 10],
    }
    raw.update(overrides)
    return raw


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    """A config next to a meshes/ directory holding the bar mesh."""
    write_msh(small_bar(), tmp_path / "meshes" / "bar.msh")
    path = tmp_path / "run.json"
    with open(path, "w") as f:
        json.dump(_base(), f)
    return path


def test_load_run_config(config_file):
    config = load_run_config(config_file)

    assert config.mesh_path == config_file.parent / "meshes" / "bar.msh"
    assert config.formulation is Formulation.MQS
    assert config.conductor_model is ConductorModel.LOSSY
    assert config.boundary is BoundaryKind.MAGNETIC
    assert config.stabilization is Stabilization.AUTO
    assert config.frequencies == [10.0, 100.0]
    assert config.branches[0].name == "bar"
    assert config.materials["conductor"].sigma == 1.0e3


def test_names_resolve_against_mesh(config_file):
    config = load_run_config(config_file)
    mesh = small_bar()

    table = config.material_table(mesh)
    assert table.regions[mesh.tag_of("conductor", 3)].sigma == 1.0e3

    # "b" is accepted without the terminal prefix
    spec = config.problem_spec(mesh)
    assert spec.branches[0].terminal_a == mesh.tag_of("terminal:a", 2)
    assert spec.branches[0].terminal_b == mesh.tag_of("terminal:b", 2)
    assert spec.branch_names == ["bar"]


def test_unknown_names_are_reported():
    mesh = small_bar()
    config = parse_run_config(_base(materials={"copper": {"sigma": 1.0}}))
    with pytest.raises(ConfigError, match="copper") as excinfo:
        config.material_table(mesh)
    assert excinfo.value.key == "materials"

    config = parse_run_config(_base(branches=[{"terminal_a": "a", "terminal_b": "top"}]))
    with pytest.raises(ConfigError, match="'top'"):
        config.problem_spec(mesh)


def test_uncovered_region_lists_its_name():
    mesh = small_wire()
    config = parse_run_config(_base(materials={"wire": {"sigma": 5.8e7}}))
    with pytest.raises(MaterialError, match="air"):
        config.material_table(mesh)


def test_config_version_is_required():
    raw = _base()
    del raw["config_version"]
    with pytest.raises(ConfigError) as excinfo:
        parse_run_config(raw)
    assert excinfo.value.key == "config_version"


def test_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{ not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_run_config(path)


@pytest.mark.parametrize(
    "key, value, message",
    [
        ("formulation", "quasistatic", "not one of"),
        ("boundary", "periodic", "not one of"),
        ("frequencies", [], "empty"),
        ("frequencies", [10, -1], "> 0"),
        ("frequencies", {"f_min": 10}, "f_max"),
        ("I0", 0, "nonzero"),
        ("sigma_tilde", -1.0, "> 0"),
        ("threads", 0, ">= 1"),
        ("materials", {"conductor": {"sigma": 1.0, "kappa": 2}}, "kappa"),
        ("materials", {"conductor": {"eps_r": 0}}, "eps_r"),
        ("branches", [{"terminal_a": "a", "terminal_b": "a"}], "both terminals"),
        ("sweep", {"parameter": "sigma", "material": "conductor", "values": [1]}, "parameter"),
        ("sweep", {"parameter": "eps_r", "material": "conductor", "values": []}, "values"),
    ],
)
def test_invalid_values(key, value, message):
    with pytest.raises(ConfigError, match=message) as excinfo:
        parse_run_config(_base(**{key: value}))
    assert excinfo.value.key == key


def test_frequencies_optional_for_pec_mqs_and_sweeps():
    raw = _base(conductor_model="pec")
    del raw["frequencies"]
    assert parse_run_config(raw).frequencies == []

    raw = _base(formulation="darwin", sweep={"parameter": "eps_r", "material": "conductor", "values": [1, 10]})
    del raw["frequencies"]
    config = parse_run_config(raw)
    assert config.sweep.values == [1.0, 10.0]

    raw = _base()
    del raw["frequencies"]
    with pytest.raises(ConfigError, match="missing frequency"):
        parse_run_config(raw)


def test_log_frequencies():
    freqs = log_frequencies(10.0, 1.0e8, 5)
    assert len(freqs) == 36
    assert freqs[0] == pytest.approx(10.0)
    assert freqs[-1] == pytest.approx(1.0e8)
    assert log_frequencies(50.0, 50.0) == pytest.approx([50.0])
    with pytest.raises(ConfigError):
        log_frequencies(100.0, 10.0)


def test_log_sweep_in_config():
    config = parse_run_config(_base(frequencies={"f_min": 1, "f_max": 1000, "points_per_decade": 2}))
    assert len(config.frequencies) == 7


def test_oracle_only_config_needs_no_mesh():
    config = parse_run_config({"config_version": 1, "frequencies": [10, 100], "wire": {"length": 0.1, "radius": 2e-3}})
    assert config.mesh_path is None
    assert config.branches == []
    assert config.wire.length == 0.1
    assert config.thresholds.r_rel == 0.02


def test_unknown_keys_warn(caplog):
    parse_run_config(_base(colour="blue"))
    assert "colour" in caplog.text


def test_extraction_options_prefer_explicit_threads():
    config = parse_run_config(_base(threads=4, compensation=False, crossover_frequency=50.0))
    options = config.extraction_options()
    assert options.threads == 4
    assert not options.compensation
    assert options.crossover_frequency == 50.0
    assert config.extraction_options(threads=2).threads == 2
    assert isinstance(config, RunConfig)
