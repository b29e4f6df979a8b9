"""Command-line front end: ``fem-parasitics {extract,validate-wire,sweep} --config run.json``.

Exit codes: 0 success, 1 configuration or input error, 2 numerical failure at
one or more frequencies (or a failed wire validation).
"""

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from fem_parasitics.constants import OUTPUT_ENV_VAR, RunDefaults
from fem_parasitics.core.linsolve import SolverError
from fem_parasitics.core.mesh import Mesh, MeshError, load_mesh
from fem_parasitics.extractor import ExtractionError, ImpedanceExtractor
from fem_parasitics.models.data_models import ConductorModel, Formulation, MaterialError, MaterialTable, ProblemSpec, SweepPoint, WireComparison, saturation
from fem_parasitics.oracle.wire import z_ana
from fem_parasitics.utils.config import ConfigError, RunConfig, load_run_config
from fem_parasitics.utils.csv_output import write_impedance_csv, write_sweep_csv, write_wire_csv
from fem_parasitics.utils.env_loader import load_env_vars

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NUMERICAL_FAILURE = 2

INPUT_ERRORS = (ConfigError, MeshError, MaterialError, ExtractionError, OSError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fem-parasitics", description="Finite-element extraction of impedance, inductance and capacitance matrices.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, required=True, help="Path to the JSON run configuration (config_version 1).")
    common.add_argument("--output", type=Path, default=None, help=f"CSV output path. Overrides ${OUTPUT_ENV_VAR} and the config's 'output'.")
    common.add_argument("--threads", type=int, default=None, help="Worker threads for the frequency sweep (default: config 'threads' or 1).")
    common.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")
    common.add_argument("--env-file", type=Path, default=Path(".env"), help="Optional .env file providing the output path variable.")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("extract", parents=[common], help="Extract the impedance matrix over frequency.")
    sub.add_parser("validate-wire", parents=[common], help="Compare a wire extraction with the analytic wire impedance.")
    sub.add_parser("sweep", parents=[common], help="Sweep eps_r or mu_r of one material and report C/eps_r or L/mu_r.")
    return parser


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s")
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)


def resolve_output(config: RunConfig, cli_output: Optional[Path] = None, env_file: Optional[Path] = None) -> Path:
    """``--output``, then the environment variable, then the config, then results.csv."""
    if cli_output is not None:
        return Path(cli_output)
    if env_file is not None:
        load_env_vars(str(env_file), target_keys=[OUTPUT_ENV_VAR])
    env_output = os.environ.get(OUTPUT_ENV_VAR)
    if env_output:
        return Path(env_output)
    if config.output:
        return Path(config.output)
    return Path(RunDefaults.OUTPUT_PATH)


def load_problem(config: RunConfig) -> Tuple[Mesh, MaterialTable, ProblemSpec]:
    if config.mesh_path is None:
        raise ConfigError("this command needs a mesh", key="mesh_path")
    mesh = load_mesh(config.mesh_path)
    materials = config.material_table(mesh)
    return mesh, materials, config.problem_spec(mesh)


def cmd_extract(config: RunConfig, output: Path, threads: Optional[int] = None) -> int:
    mesh, materials, spec = load_problem(config)
    summary = f"{len(spec.branches)} branch(es), {len(spec.frequencies)} frequency point(s), {spec.formulation.value}-{spec.conductor_model.value}, {spec.boundary.value} boundary"
    print(f"Extracting {summary}")
    result = ImpedanceExtractor(mesh, materials, spec, config.extraction_options(threads)).run()
    write_impedance_csv(result, output)
    if result.any_failed:
        logger.error(f"{int(result.failed.sum())} of {result.frequencies.size} frequencies failed; their rows are nan")
        return EXIT_NUMERICAL_FAILURE
    return EXIT_OK


def cmd_validate_wire(config: RunConfig, output: Path, threads: Optional[int] = None) -> int:
    comparisons = [WireComparison(frequency=f, z_ana=z_ana(config.wire, f)) for f in config.frequencies]
    if config.mesh_path is None:
        logger.info(f"No mesh configured; writing the analytic wire impedance at {len(comparisons)} frequencies")
        write_wire_csv(comparisons, output)
        return EXIT_OK

    mesh, materials, spec = load_problem(config)
    result = ImpedanceExtractor(mesh, materials, spec, config.extraction_options(threads)).run()
    if result.frequencies.size != len(comparisons):
        raise ConfigError("wire validation needs an explicit frequency sweep", key="frequencies")
    for k, comparison in enumerate(comparisons):
        if not result.failed[k]:
            comparison.z_fe = complex(result.impedance[k, 0, 0])
    write_wire_csv(comparisons, output)

    limits = config.thresholds
    failed = [c.frequency for c in comparisons if c.z_fe is None and c.frequency <= limits.f_max_check]
    for c in comparisons:
        if c.z_fe is None or c.frequency > limits.f_max_check:
            continue
        if c.r_rel_err > limits.r_rel or c.l_rel_err > limits.l_rel:
            logger.error(f"{c.frequency:g} Hz: R error {c.r_rel_err:.3%} (limit {limits.r_rel:.1%}), L error {c.l_rel_err:.3%} (limit {limits.l_rel:.1%})")
            failed.append(c.frequency)
    if failed or result.any_failed:
        print(f"Wire validation FAILED at {len(failed)} frequency point(s)")
        return EXIT_NUMERICAL_FAILURE
    print(f"Wire validation passed up to {limits.f_max_check:g} Hz")
    return EXIT_OK


def sweep_point(extractor: ImpedanceExtractor, parameter: str, value: float, f0: float) -> SweepPoint:
    """C (Darwin-PEC) for eps_r sweeps or L (MQS-PEC) for mu_r sweeps at one value."""
    if parameter == "eps_r":
        capacitance = extractor.extract_C_darwin_pec(f0).capacitance
        return SweepPoint(parameter, value, "capacitance_farad", capacitance)
    inductance = float(extractor.extract_L_pec_mqs()[0, 0])
    return SweepPoint(parameter, value, "inductance_henry", inductance)


def cmd_sweep(config: RunConfig, output: Path, threads: Optional[int] = None) -> int:
    if config.sweep is None:
        raise ConfigError("missing sweep section", key="sweep")
    mesh, materials, spec = load_problem(config)
    tags = {name: tag for tag, name in materials.names.items()}
    if config.sweep.material not in tags:
        raise ConfigError(f"material '{config.sweep.material}' is not configured", key="sweep")
    tag = tags[config.sweep.material]
    formulation = Formulation.DARWIN if config.sweep.parameter == "eps_r" else Formulation.MQS
    spec = replace(spec, formulation=formulation, conductor_model=ConductorModel.PEC, frequencies=[])
    options = config.extraction_options(threads)

    points: List[SweepPoint] = []
    numerical_failure = False
    for value in config.sweep.values:
        swept = materials.with_override(tag, **{config.sweep.parameter: value})
        try:
            points.append(sweep_point(ImpedanceExtractor(mesh, swept, spec, options), config.sweep.parameter, value, config.f0_capacitance))
        except SolverError as e:
            logger.error(f"{config.sweep.parameter} = {value:g}: {e}")
            quantity = "capacitance_farad" if config.sweep.parameter == "eps_r" else "inductance_henry"
            points.append(SweepPoint(config.sweep.parameter, value, quantity, float(np.nan)))
            numerical_failure = True
    write_sweep_csv(points, output)
    change = saturation(points)
    if change is not None:
        print(f"Saturation: normalized {points[-1].quantity} changed by {change:.3%} between the last two values")
    return EXIT_NUMERICAL_FAILURE if numerical_failure else EXIT_OK


COMMANDS = {"extract": cmd_extract, "validate-wire": cmd_validate_wire, "sweep": cmd_sweep}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    if args.threads is not None and args.threads < 1:
        logger.error(f"--threads must be >= 1, got {args.threads}")
        return EXIT_INPUT_ERROR
    try:
        config = load_run_config(args.config)
        output = resolve_output(config, args.output, args.env_file)
        return COMMANDS[args.command](config, output, args.threads)
    except INPUT_ERRORS as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_INPUT_ERROR
    except SolverError as e:
        logger.error(f"{args.command}: numerical failure: {e}")
        return EXIT_NUMERICAL_FAILURE


if __name__ == "__main__":
    sys.exit(main())
