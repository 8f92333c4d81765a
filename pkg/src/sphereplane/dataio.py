"""
sphereplane.dataio

CSV ingestion and emission of calibration series in laboratory units.

    capacitance:  v_pzt_V, capacitance_pF[, sigma_pF]
    contact potential:  distance_nm, v0_mV, sigma_mV

Values are converted to SI on read and back on write by exact decimal
power-of-ten shifts, and written with 17 significant digits, so
ingest -> emit -> ingest is lossless.
"""

from __future__ import annotations

import csv
import os
import tempfile
from decimal import Decimal, InvalidOperation
from pathlib import Path

import numpy as np

from .capcal import CapacitanceSeries
from .errors import InputError
from .vzero import VZeroSeries

PF = 1e12  # pF per F
NM = 1e9  # nm per m
MV = 1e3  # mV per V
# decimal exponents of the same conversions, used for lossless text I/O
PF_EXP, NM_EXP, MV_EXP, V_EXP = 12, 9, 3, 0

CAPACITANCE_COLUMNS = ("v_pzt_V", "capacitance_pF", "sigma_pF")
VZERO_COLUMNS = ("distance_nm", "v0_mV", "sigma_mV")


def to_si(text: str, exponent: int) -> float:
    """Parse a lab-unit decimal and shift it by ``10**-exponent`` exactly."""
    value = Decimal(text.strip())
    if not value.is_finite():
        raise ValueError(text)
    return float(value.scaleb(-exponent))


def format_lossless(si_value: float, exponent: int) -> str:
    """17-significant-digit lab-unit decimal that parses back to ``si_value``."""
    return format(Decimal(float(si_value)).scaleb(exponent), ".17g")


def _read_table(path, required: tuple, optional: tuple = ()) -> tuple:
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file {str(path)!r} does not exist")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [(i + 1, r) for i, r in enumerate(rows) if r and any(cell.strip() for cell in r)]
    if not rows:
        raise InputError(f"input file {str(path)!r} is empty")
    header_line, header = rows[0]
    header = [h.strip() for h in header]
    index = {}
    for name in required + optional:
        if name in header:
            index[name] = header.index(name)
        elif name in required:
            raise InputError(f"missing required column {name!r} (header: {header})", row=header_line, column=name)
    if len(rows) == 1:
        raise InputError(f"input file {str(path)!r} has a header but no data rows")
    columns = {name: [] for name in index}
    for line, row in rows[1:]:
        for name, col in index.items():
            if col >= len(row):
                raise InputError("missing cell", row=line, column=name)
            cell = row[col].strip()
            try:
                value = Decimal(cell)
            except InvalidOperation:
                raise InputError(f"non-numeric value {cell!r}", row=line, column=name) from None
            if not value.is_finite():
                raise InputError(f"non-finite value {cell!r}", row=line, column=name)
            columns[name].append((line, cell))
    return columns


def _check_positive(values, column: str) -> None:
    for line, text in values:
        value = float(text)
        if not value > 0.0:
            raise InputError(f"sigma must be > 0, got {value!r}", row=line, column=column)


def ingest_capacitance(path) -> CapacitanceSeries:
    """Read a capacitance run; a missing ``sigma_pF`` column gives an unweighted series."""
    cols = _read_table(path, CAPACITANCE_COLUMNS[:2], CAPACITANCE_COLUMNS[2:])
    v = [to_si(val, V_EXP) for _, val in cols["v_pzt_V"]]
    c = [to_si(val, PF_EXP) for _, val in cols["capacitance_pF"]]
    sigma = None
    if "sigma_pF" in cols:
        _check_positive(cols["sigma_pF"], "sigma_pF")
        sigma = [to_si(val, PF_EXP) for _, val in cols["sigma_pF"]]
    return CapacitanceSeries(np.array(v), np.array(c), None if sigma is None else np.array(sigma))


def ingest_vzero(path) -> VZeroSeries:
    cols = _read_table(path, VZERO_COLUMNS)
    _check_positive(cols["sigma_mV"], "sigma_mV")
    if len(cols["v0_mV"]) < 2:
        raise InputError("a V0 series needs at least 2 rows")
    return VZeroSeries(
        np.array([to_si(val, NM_EXP) for _, val in cols["distance_nm"]]),
        np.array([to_si(val, MV_EXP) for _, val in cols["v0_mV"]]),
        np.array([to_si(val, MV_EXP) for _, val in cols["sigma_mV"]]),
    )


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to a temporary file beside ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, columns) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in zip(*columns))
    return "\n".join(lines) + "\n"


def capacitance_csv(series: CapacitanceSeries) -> str:
    cols = [
        [format_lossless(v, V_EXP) for v in series.v_pzt],
        [format_lossless(c, PF_EXP) for c in series.capacitance],
    ]
    header = list(CAPACITANCE_COLUMNS[:2])
    if series.sigma is not None:
        cols.append([format_lossless(s, PF_EXP) for s in series.sigma])
        header.append(CAPACITANCE_COLUMNS[2])
    return _csv_text(header, cols)


def vzero_csv(series: VZeroSeries) -> str:
    cols = [
        [format_lossless(d, NM_EXP) for d in series.distance],
        [format_lossless(v, MV_EXP) for v in series.v0],
        [format_lossless(s, MV_EXP) for s in series.sigma],
    ]
    return _csv_text(VZERO_COLUMNS, cols)


def emit_capacitance(series: CapacitanceSeries, path) -> None:
    atomic_write_text(path, capacitance_csv(series))


def emit_vzero(series: VZeroSeries, path) -> None:
    atomic_write_text(path, vzero_csv(series))


def table_csv(table: dict) -> str:
    """Columns of floats keyed by header, 17 significant digits."""
    header = list(table)
    return _csv_text(header, [[f"{float(v):.17g}" for v in table[h]] for h in header])
