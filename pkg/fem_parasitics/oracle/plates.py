"""Parallel-plate capacitance without fringing."""

from fem_parasitics.constants import EPS0


def parallel_plate_c(area: float, gap: float, eps_r: float = 1.0) -> float:
    """eps0 eps_r A / d in F; a lower bound for real plates with fringing fields."""
    if area <= 0 or gap <= 0 or eps_r <= 0:
        raise ValueError(f"area, gap and eps_r must be positive, got {area}, {gap}, {eps_r}")
    return EPS0 * eps_r * area / gap
