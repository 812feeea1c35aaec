import io
import math
import sys
from pathlib import Path
from typing import BinaryIO, Iterable, List, Optional, Union

import pandas as pd

from src.errors import ExportError
from src.study import Optimum, SweepRow, SweepVariable

CSV_COLUMNS = [
    "swept_var",
    "value",
    "scheme",
    "blocklength",
    "error_rate",
    "aoi_analytic_slots",
    "aoi_sim_slots",
    "aoi_sim_ci95",
    "seed",
    "flags",
]

Destination = Union[str, Path, BinaryIO, None]


# ---------------------------
# CELL FORMATTING
# ---------------------------

def format_number(value) -> str:
    """12 significant digits, '.' decimal point; None -> empty cell."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    value = float(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return format(value, ".12g")


def rows_to_frame(rows: Iterable[SweepRow]) -> pd.DataFrame:
    """All cells pre-formatted as strings so the CSV bytes never depend on dtypes."""
    records = [
        {
            "swept_var": row.swept_variable.value,
            "value": format_number(row.swept_value),
            "scheme": row.scheme.value,
            "blocklength": format_number(row.derived_blocklength),
            "error_rate": format_number(row.error_rate),
            "aoi_analytic_slots": format_number(row.analytic_aoi_slots),
            "aoi_sim_slots": format_number(row.sim_aoi_slots),
            "aoi_sim_ci95": format_number(row.sim_ci95),
            "seed": format_number(row.seed),
            "flags": ";".join(row.flags),
        }
        for row in rows
    ]
    return pd.DataFrame(records, columns=CSV_COLUMNS, dtype=str)


def profile_rows(opt: Optimum) -> List[SweepRow]:
    """Optimizer profile in the sweep row schema (swept variable = blocklength)."""
    rows = []
    for m, delta in opt.profile:
        flags = ["optimum", *opt.flags] if m == opt.best_blocklength else []
        rows.append(SweepRow(
            swept_variable=SweepVariable.BLOCKLENGTH,
            swept_value=m,
            scheme=opt.scheme,
            derived_blocklength=m,
            error_rate=None,
            analytic_aoi_slots=delta if math.isfinite(delta) else None,
            flags=tuple(flags) if math.isfinite(delta) else ("unbounded",),
        ))
    return rows


# ---------------------------
# CSV EXPORT
# ---------------------------

def export_to_csv(df: pd.DataFrame) -> bytes:
    buffer = io.StringIO()
    df.to_csv(buffer, index=False, lineterminator="\n")
    return buffer.getvalue().encode("utf-8")


def emit_csv(rows: Iterable[SweepRow], destination: Destination = None) -> bytes:
    """
    Write rows as CSV to a path, a binary stream, or stdout (destination None).

    Returns the bytes written; identical rows always give identical bytes.
    """
    payload = export_to_csv(rows_to_frame(rows))
    if destination is None:
        _write_stream(sys.stdout.buffer, payload, "<stdout>")
    elif isinstance(destination, (str, Path)):
        path = Path(destination)
        try:
            path.write_bytes(payload)
        except OSError as e:
            raise ExportError(str(path), e.strerror or str(e)) from e
    else:
        _write_stream(destination, payload, getattr(destination, "name", "<stream>"))
    return payload


def _write_stream(stream: BinaryIO, payload: bytes, name: Optional[str]):
    try:
        stream.write(payload)
        stream.flush()
    except OSError as e:
        raise ExportError(str(name), e.strerror or str(e)) from e
