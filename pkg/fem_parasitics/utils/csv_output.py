"""CSV writers for the extract, validate-wire and sweep commands.

All numbers are written with 17 significant digits and rows end in LF, so
repeated runs of the same configuration produce identical files.
"""

import csv
import logging
import math
from pathlib import Path
from typing import Iterable, List, Optional, Union

from fem_parasitics.models.data_models import SweepPoint, SweepResult, WireComparison

logger = logging.getLogger(__name__)

IMPEDANCE_HEADER = ["frequency_hz", "branch_i", "branch_j", "re_z_ohm", "im_z_ohm", "r_ohm", "x_ohm", "l_henry", "c_farad", "formulation", "boundary"]
WIRE_HEADER = ["frequency_hz", "r_fe_ohm", "x_fe_ohm", "l_fe_henry", "r_ana_ohm", "x_ana_ohm", "l_ana_henry", "r_rel_err", "l_rel_err"]
SWEEP_HEADER = ["parameter", "value", "quantity", "extracted", "normalized", "relative_change"]
INF_BAND = "inf-band"


def fmt(value: Optional[float]) -> str:
    """17 significant digits; None becomes an empty field."""
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return "nan"
    return format(value, ".17g")


def _write(path: Union[str, Path], header: List[str], rows: Iterable[List[str]]) -> int:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
            count += 1
    logger.info(f"Wrote {count} row(s) to {path}")
    return count


def impedance_rows(result: SweepResult) -> List[List[str]]:
    """Rows for every (frequency, measured branch i, excited branch j)."""
    names = result.branch_names
    formulation, boundary = result.formulation.value, result.boundary.value
    rows = []
    if result.inf_band:
        for i, name_i in enumerate(names):
            for j, name_j in enumerate(names):
                rows.append([INF_BAND, name_i, name_j, "", "", "", "", fmt(result.band_inductance[i, j]), "", formulation, boundary])
        return rows

    inductance = result.inductance()
    capacitance = result.capacitance()
    for k, frequency in enumerate(result.frequencies):
        for i, name_i in enumerate(names):
            for j, name_j in enumerate(names):
                z = result.impedance[k, i, j]
                c = capacitance[k, i, j]
                c_field = fmt(c) if result.failed[k] or not math.isnan(c) else ""
                rows.append(
                    [fmt(frequency), name_i, name_j, fmt(z.real), fmt(z.imag), fmt(z.real), fmt(z.imag), fmt(inductance[k, i, j]), c_field, formulation, boundary]
                )
    return rows


def write_impedance_csv(result: SweepResult, path: Union[str, Path]) -> int:
    """Write the impedance table of an extraction run; returns the number of data rows."""
    return _write(path, IMPEDANCE_HEADER, impedance_rows(result))


def wire_rows(comparisons: Iterable[WireComparison]) -> List[List[str]]:
    rows = []
    for c in sorted(comparisons, key=lambda c: c.frequency):
        fe = [None, None, None] if c.z_fe is None else [c.z_fe.real, c.z_fe.imag, c.z_fe.imag / c.omega]
        ana = [c.z_ana.real, c.z_ana.imag, c.z_ana.imag / c.omega if c.omega > 0 else None]
        rows.append([fmt(c.frequency)] + [fmt(v) for v in fe + ana] + [fmt(c.r_rel_err), fmt(c.l_rel_err)])
    return rows


def write_wire_csv(comparisons: Iterable[WireComparison], path: Union[str, Path]) -> int:
    return _write(path, WIRE_HEADER, wire_rows(comparisons))


def sweep_rows(points: List[SweepPoint]) -> List[List[str]]:
    rows = []
    previous = None
    for point in points:
        change = None if previous is None else abs(point.normalized - previous) / abs(previous)
        rows.append([point.parameter, fmt(point.value), point.quantity, fmt(point.extracted), fmt(point.normalized), fmt(change)])
        previous = point.normalized
    return rows


def write_sweep_csv(points: List[SweepPoint], path: Union[str, Path]) -> int:
    return _write(path, SWEEP_HEADER, sweep_rows(points))
