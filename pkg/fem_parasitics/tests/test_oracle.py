import cmath
import math
from decimal import Decimal, localcontext

import numpy as np
import pytest
from scipy import special

from fem_parasitics.constants import EPS0, MU0, SIGMA_COPPER
from fem_parasitics.models.data_models import WireModel
from fem_parasitics.oracle import kelvin, l_external, parallel_plate_c, r_dc, skin_depth, z_ana, z_internal
from fem_parasitics.oracle.kelvin import kelvin_complex, kelvin_complex_scaled
from fem_parasitics.oracle.wire import l_internal_dc, r_high_frequency, z_ana_sweep

WIRE = WireModel(length=0.05, radius=1.0e-3, sigma=SIGMA_COPPER)


def _kelvin_reference(q: float):
    """Ber + i Bei and its derivative from the power series in 60-digit decimal arithmetic."""
    with localcontext() as ctx:
        ctx.prec = 60
        half = Decimal(q) / 2
        ber = bei = dber = dbei = Decimal(0)
        factorial = [Decimal(1)]
        for n in range(1, 400):
            factorial.append(factorial[-1] * n)
        for m in range(150):
            sign = -1 if m % 2 else 1
            a = sign * half ** (4 * m) / factorial[2 * m] ** 2
            b = sign * half ** (4 * m + 2) / factorial[2 * m + 1] ** 2
            ber += a
            bei += b
            if m > 0:
                dber += a * 4 * m / Decimal(q)
            dbei += b * (4 * m + 2) / Decimal(q)
        return complex(float(ber), float(bei)), complex(float(dber), float(dbei))


@pytest.mark.parametrize("q", [0.1, 1.0, 2.5, 5.0, 10.0, 17.0, 18.0, 19.5, 21.0, 22.0, 26.0, 35.0])
def test_kelvin_matches_high_precision_series(q):
    f_ref, df_ref = _kelvin_reference(q)
    f, df = kelvin_complex(q)
    assert abs(f - f_ref) <= 1e-10 * abs(f_ref)
    assert abs(df - df_ref) <= 1e-10 * abs(df_ref)


@pytest.mark.parametrize("q", [0.5, 3.0, 8.0, 15.0])
def test_kelvin_matches_scipy(q):
    ber, bei, dber, dbei = kelvin(q)
    scale = abs(complex(special.ber(q), special.bei(q)))
    dscale = abs(complex(special.berp(q), special.beip(q)))
    assert abs(complex(ber, bei) - complex(special.ber(q), special.bei(q))) <= 1e-8 * scale
    assert abs(complex(dber, dbei) - complex(special.berp(q), special.beip(q))) <= 1e-8 * dscale


def test_kelvin_at_zero():
    assert kelvin(0.0) == (1.0, 0.0, 0.0, 0.0)


def test_scaled_kelvin_stays_finite_for_large_arguments():
    f, df = kelvin_complex_scaled(2000.0)
    assert np.isfinite([f.real, f.imag, df.real, df.imag]).all()
    # I1/I0 tends to 1 for large arguments
    assert abs(df / f - cmath.exp(0.25j * math.pi)) < 1e-3


@pytest.mark.parametrize("q", [-1.0, math.inf, math.nan])
def test_kelvin_rejects_bad_arguments(q):
    with pytest.raises(ValueError):
        kelvin(q)


def test_skin_depth_of_copper():
    assert skin_depth(1.0e6, SIGMA_COPPER) == pytest.approx(66.09e-6, rel=1e-3)
    assert skin_depth(0.0, SIGMA_COPPER) == math.inf
    with pytest.raises(ValueError):
        skin_depth(-1.0, SIGMA_COPPER)


def test_dc_values_of_reference_wire():
    assert r_dc(WIRE) == pytest.approx(2.7441e-4, rel=1e-4)
    assert z_internal(WIRE, 0.0) == complex(r_dc(WIRE), 0.0)
    assert l_internal_dc(WIRE) == pytest.approx(2.5e-9, rel=1e-12)
    assert l_external(WIRE) == pytest.approx(36.25e-9, rel=1e-3)


def test_low_frequency_limit():
    """Below the skin-effect onset Z is R_DC plus the DC inductive reactance."""
    f = 10.0
    z = z_ana(WIRE, f)
    omega = 2.0 * math.pi * f
    assert z.real == pytest.approx(r_dc(WIRE), rel=1e-6)
    assert z.imag / omega == pytest.approx(l_internal_dc(WIRE) + l_external(WIRE), rel=1e-6)
    assert z.imag / omega == pytest.approx(38.75e-9, rel=1e-3)


def test_high_frequency_asymptote():
    f = 1.0e8
    z = z_internal(WIRE, f)
    assert z.real == pytest.approx(r_high_frequency(WIRE, f), rel=1e-2)
    # Resistance and internal reactance coincide in the skin-effect limit
    assert z.imag == pytest.approx(z.real, rel=1e-2)


def test_resistance_grows_monotonically():
    z = z_ana_sweep(WIRE, np.logspace(1, 7, 25))
    assert np.all(np.diff(z.real) > 0)
    assert z.shape == (25,)


def test_wire_model_and_mu():
    """A magnetic wire scales the internal inductance but not the external one."""
    iron = WireModel(length=0.05, radius=1.0e-3, sigma=1.0e7, mu=100.0 * MU0)
    assert l_internal_dc(iron) == pytest.approx(100.0 * l_internal_dc(WIRE))
    assert l_external(iron) == pytest.approx(l_external(WIRE))


def test_parallel_plate_capacitance():
    assert parallel_plate_c(1.0e-4, 1.0e-3) == pytest.approx(EPS0 * 0.1)
    assert parallel_plate_c(1.0e-4, 1.0e-3, eps_r=4.0) == pytest.approx(4.0 * EPS0 * 0.1)
    with pytest.raises(ValueError):
        parallel_plate_c(0.0, 1.0e-3)
    with pytest.raises(ValueError):
        parallel_plate_c(1.0e-4, -1.0e-3)


@pytest.mark.parametrize("q", [0.1, 0.5, 1.0, 2.0, 3.5, 5.0, 7.5, 10.0])
def test_kelvin_derivatives_match_central_differences(q):
    h = 1.0e-5
    ber_hi, bei_hi, _, _ = kelvin(q + h)
    ber_lo, bei_lo, _, _ = kelvin(q - h)
    _, _, dber, dbei = kelvin(q)
    assert (ber_hi - ber_lo) / (2.0 * h) == pytest.approx(dber, rel=1e-6, abs=1e-8)
    assert (bei_hi - bei_lo) / (2.0 * h) == pytest.approx(dbei, rel=1e-6, abs=1e-8)


@pytest.mark.parametrize("q", [18.0, 22.0])
def test_internal_impedance_is_continuous_at_series_switch(q):
    f = q**2 / (2.0 * math.pi * WIRE.mu * WIRE.sigma * WIRE.radius**2)
    below = z_internal(WIRE, f * (1.0 - 1.0e-10))
    above = z_internal(WIRE, f * (1.0 + 1.0e-10))
    assert abs(above - below) / abs(below) < 1e-8
