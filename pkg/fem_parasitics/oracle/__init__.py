"""Closed-form reference models."""

from fem_parasitics.oracle.kelvin import kelvin
from fem_parasitics.oracle.plates import parallel_plate_c
from fem_parasitics.oracle.wire import l_external, r_dc, skin_depth, z_ana, z_internal

__all__ = ["kelvin", "l_external", "parallel_plate_c", "r_dc", "skin_depth", "z_ana", "z_internal"]
