"""Kelvin functions of order zero and their derivatives for real arguments.

Ber(q) + i Bei(q) equals I0(q e^(i pi/4)). Small arguments use the power series
summed with ``math.fsum``; large arguments use the Hankel-type asymptotic expansion
of I0 and I1 including the exponentially small second exponential. Both branches
are blended smoothly between ``SERIES_LIMIT_LOW`` and ``SERIES_LIMIT_HIGH``.
"""

import cmath
import math
from typing import Tuple

SERIES_LIMIT_LOW = 18.0
SERIES_LIMIT_HIGH = 22.0
MAX_SERIES_TERMS = 400
MAX_ASYMPTOTIC_TERMS = 200

_PHASE = cmath.exp(0.25j * math.pi)


def _series(q: float) -> Tuple[complex, complex]:
    """(Ber + i Bei, Ber' + i Bei') from the power series."""
    if q == 0.0:
        return complex(1.0, 0.0), complex(0.0, 0.0)
    x4 = (q / 2.0) ** 4
    ber_terms, bei_terms, dber_terms, dbei_terms = [], [], [], []
    t = 1.0
    u = (q / 2.0) ** 2
    peak = 1.0
    for m in range(MAX_SERIES_TERMS):
        if m > 0:
            t *= -x4 / ((2 * m - 1) * (2 * m)) ** 2
            u *= -x4 / ((2 * m) * (2 * m + 1)) ** 2
        ber_terms.append(t)
        bei_terms.append(u)
        dber_terms.append(t * 4 * m / q)
        dbei_terms.append(u * (4 * m + 2) / q)
        size = max(abs(t), abs(u))
        peak = max(peak, size)
        if m > q and size < 1e-18 * peak:
            break
    ber, bei = math.fsum(ber_terms), math.fsum(bei_terms)
    dber, dbei = math.fsum(dber_terms), math.fsum(dbei_terms)
    return complex(ber, bei), complex(dber, dbei)


def _asymptotic_sums(z: complex, order: int) -> Tuple[complex, complex]:
    """Sums of (-1)^k a_k z^-k and a_k z^-k, truncated at the smallest term."""
    four_nu_sq = 4.0 * order * order
    a = 1.0
    zk = complex(1.0, 0.0)
    alternating, plain = complex(1.0, 0.0), complex(1.0, 0.0)
    previous = math.inf
    for k in range(1, MAX_ASYMPTOTIC_TERMS):
        a *= (four_nu_sq - (2 * k - 1) ** 2) / (8.0 * k)
        zk /= z
        term = a * zk
        if abs(term) >= previous or term == 0:
            break
        previous = abs(term)
        alternating += term if k % 2 == 0 else -term
        plain += term
    return alternating, plain


def _bessel_i_scaled(z: complex, order: int) -> complex:
    """e^(-z) I_order(z) for large |z| with 0 < arg z < pi/2."""
    alternating, plain = _asymptotic_sums(z, order)
    prefactor = 1.0 / cmath.sqrt(2.0 * math.pi * z)
    second = 1j * cmath.exp(1j * order * math.pi) * cmath.exp(-2.0 * z) * plain
    return prefactor * (alternating + second)


def _asymptotic_scaled(q: float) -> Tuple[complex, complex]:
    z = q * _PHASE
    return _bessel_i_scaled(z, 0), _PHASE * _bessel_i_scaled(z, 1)


def _smoothstep(q: float) -> float:
    t = (q - SERIES_LIMIT_LOW) / (SERIES_LIMIT_HIGH - SERIES_LIMIT_LOW)
    t = min(max(t, 0.0), 1.0)
    return t * t * (3.0 - 2.0 * t)


def kelvin_complex_scaled(q: float) -> Tuple[complex, complex]:
    """e^(-z) (Ber + i Bei) and e^(-z) (Ber' + i Bei') with z = q e^(i pi/4).

    The common scale cancels in ratios and keeps large arguments finite.
    """
    if not q >= 0 or not math.isfinite(q):
        raise ValueError(f"Kelvin functions need a finite q >= 0, got {q}")
    if q <= SERIES_LIMIT_LOW:
        f, df = _series(q)
        scale = cmath.exp(-q * _PHASE)
        return f * scale, df * scale
    if q >= SERIES_LIMIT_HIGH:
        return _asymptotic_scaled(q)
    w = _smoothstep(q)
    f, df = _series(q)
    scale = cmath.exp(-q * _PHASE)
    fa, dfa = _asymptotic_scaled(q)
    return (1.0 - w) * f * scale + w * fa, (1.0 - w) * df * scale + w * dfa


def kelvin_complex(q: float) -> Tuple[complex, complex]:
    """(Ber + i Bei, Ber' + i Bei') at q."""
    f, df = kelvin_complex_scaled(q)
    scale = cmath.exp(q * _PHASE)
    return f * scale, df * scale


def kelvin(q: float) -> Tuple[float, float, float, float]:
    """Return (Ber, Bei, Ber', Bei') at real q >= 0.

    Raises:
        ValueError: If q is negative or not finite.
    """
    f, df = kelvin_complex(q)
    return f.real, f.imag, df.real, df.imag
