"""Closed-form impedance of a straight round wire."""

import math
from typing import Iterable

import numpy as np

from fem_parasitics.constants import MU0
from fem_parasitics.models.data_models import WireModel
from fem_parasitics.oracle.kelvin import kelvin_complex_scaled


def _check_frequency(f: float) -> float:
    f = float(f)
    if f < 0 or not math.isfinite(f):
        raise ValueError(f"Frequency must be finite and >= 0, got {f}")
    return f


def skin_depth(f: float, sigma: float, mu: float = MU0) -> float:
    """sqrt(2 / (omega mu sigma)) in m; infinite at 0 Hz."""
    f = _check_frequency(f)
    if f == 0:
        return math.inf
    return math.sqrt(2.0 / (2.0 * math.pi * f * mu * sigma))


def r_dc(model: WireModel) -> float:
    return model.length / (model.sigma * model.cross_section)


def l_internal_dc(model: WireModel) -> float:
    """Low-frequency internal inductance mu l / (8 pi)."""
    return model.mu * model.length / (8.0 * math.pi)


def r_high_frequency(model: WireModel, f: float) -> float:
    """Skin-effect asymptote l / (2 pi r sigma delta)."""
    return model.length / (2.0 * math.pi * model.radius * model.sigma * skin_depth(f, model.sigma, model.mu))


def z_internal(model: WireModel, f: float) -> complex:
    """Internal impedance from the Kelvin-function ratio.

    Args:
        model: Wire geometry and material.
        f: Frequency in Hz; 0 returns the DC resistance.

    Returns:
        Complex internal impedance in ohm.
    """
    f = _check_frequency(f)
    if f == 0:
        return complex(r_dc(model), 0.0)
    omega = 2.0 * math.pi * f
    q = model.radius * math.sqrt(omega * model.mu * model.sigma)
    ber, dber = kelvin_complex_scaled(q)
    return 1j * model.length / (2.0 * math.pi * model.radius) * math.sqrt(omega * model.mu / model.sigma) * ber / dber


def l_external(model: WireModel) -> float:
    """External partial inductance of the straight wire in H."""
    ratio = model.radius / model.length
    return MU0 * model.length / (2.0 * math.pi) * (math.asinh(1.0 / ratio) - math.sqrt(1.0 + ratio**2) + ratio)


def z_ana(model: WireModel, f: float) -> complex:
    """Internal impedance plus the external inductive reactance."""
    f = _check_frequency(f)
    return z_internal(model, f) + 1j * 2.0 * math.pi * f * l_external(model)


def z_ana_sweep(model: WireModel, frequencies: Iterable[float]) -> np.ndarray:
    return np.array([z_ana(model, f) for f in frequencies], dtype=complex)
