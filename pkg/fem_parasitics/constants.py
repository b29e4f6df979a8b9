"""Constants for FEM Parasitics.

This module contains the physical constants, numerical tolerances and default
run parameters used throughout the package.
"""

import math

# Physical constants (SI)
MU0 = 4.0e-7 * math.pi  # H/m
C0 = 299792458.0  # m/s
EPS0 = 1.0 / (MU0 * C0 * C0)  # F/m

SIGMA_COPPER = 5.8e7  # S/m

# Mesh tolerances
DEGENERATE_VOLUME_TOL = 1e-18  # m^3

# Solver contract
RESIDUAL_TOL = 1e-10
SINGULAR_PIVOT_RATIO = 1e-14
PIVOT_WARN_RATIO = 1e-12
MAX_REFINEMENT_STEPS = 2
# Share of a gauged right-hand side the reduced system may drop without a warning
GAUGE_COMPATIBILITY_TOL = 1e-8

# Below this value of (omega * h_max / c)^2 the wave term is invisible to a direct solver
WAVE_VISIBILITY_THRESHOLD = 1e-6

# Environment variable overriding the output path
OUTPUT_ENV_VAR = "FEM_PARASITICS_OUTPUT"
CONFIG_VERSION = 1


class PhysicalNames:
    """Physical-group naming conventions recognised in MSH files."""

    TERMINAL_PREFIX = "terminal:"
    GAMMA_EL = "gamma_el"
    GAMMA_MAG = "gamma_mag"


class RunDefaults:
    """Default extraction parameters."""

    I0 = 1.0  # A
    SIGMA_TILDE = 1.0  # S/m
    F0_CAPACITANCE = 100.0  # Hz
    CROSSOVER_FREQUENCY = 1.0e3  # Hz
    POINTS_PER_DECADE = 5
    OUTPUT_PATH = "results.csv"


class WireDefaults:
    """Reference wire used by the validation command."""

    LENGTH = 0.05  # m
    RADIUS = 1.0e-3  # m
    SIGMA = SIGMA_COPPER


class ValidationThresholds:
    """Relative error limits for the wire validation."""

    R_REL = 0.02
    L_REL = 0.05
    F_MAX_CHECK = 1.0e3  # Hz, frequencies above are reported but not judged
