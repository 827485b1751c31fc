"""On-disk formats: field files, grid CSV exports, and deterministic JSON."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import FieldFormatError
from .sphere import GridField, SpectralField, lm_index

BASIS_TAG = "real-orthonormal"


def format_float(x: float) -> str:
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        # JSON has no inf/nan; these only appear in diagnostics
        return json.dumps(str(x))
    return format(x, ".17g")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits.

    Output is byte-identical for identical inputs: keys keep insertion order
    and numpy scalars/arrays are converted to plain values.
    """
    out = io.StringIO()
    _write(obj, out, indent, 0)
    out.write("\n")
    return out.getvalue()


def _write(obj, out, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, (np.integer,)):
        obj = int(obj)
    if isinstance(obj, (np.bool_,)):
        obj = bool(obj)
    if obj is None or isinstance(obj, (bool, str)):
        out.write(json.dumps(obj))
    elif isinstance(obj, int):
        out.write(str(obj))
    elif isinstance(obj, float):
        out.write(format_float(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{\n")
        items = list(obj.items())
        for i, (k, v) in enumerate(items):
            out.write(pad + json.dumps(str(k)) + ": ")
            _write(v, out, indent, level + 1)
            out.write(",\n" if i < len(items) - 1 else "\n")
        out.write(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.write("[]")
            return
        # short numeric rows stay on one line
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj) and len(obj) <= 9:
            out.write("[" + ", ".join(_scalar(v) for v in obj) + "]")
            return
        out.write("[\n")
        for i, v in enumerate(obj):
            out.write(pad)
            _write(v, out, indent, level + 1)
            out.write(",\n" if i < len(obj) - 1 else "\n")
        out.write(end + "]")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def _scalar(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format_float(v)


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


# ---------------------------------------------------------------------------
# field files


def field_to_dict(f: SpectralField, keep_zeros: bool = False) -> dict:
    coeffs = []
    for l in range(f.lmax + 1):
        for m in range(-l, l + 1):
            v = float(f.coeffs[lm_index(l, m)])
            if keep_zeros or v != 0.0:
                coeffs.append([l, m, v])
    return {"lmax": f.lmax, "basis": BASIS_TAG, "coeffs": coeffs}


def field_from_dict(d: dict) -> SpectralField:
    try:
        lmax = d["lmax"]
        entries = d["coeffs"]
    except (KeyError, TypeError) as exc:
        raise FieldFormatError(f"field record is missing {exc}") from exc
    if not isinstance(lmax, int) or isinstance(lmax, bool) or lmax < 0:
        raise FieldFormatError(f"invalid lmax {lmax!r}")
    if d.get("basis", BASIS_TAG) != BASIS_TAG:
        raise FieldFormatError(f"unsupported basis {d.get('basis')!r}")
    if not isinstance(entries, list):
        raise FieldFormatError("coeffs must be a list of [l, m, value]")
    c = np.zeros((lmax + 1) ** 2)
    for e in entries:
        if not (isinstance(e, (list, tuple)) and len(e) == 3):
            raise FieldFormatError(f"bad coefficient entry {e!r}")
        l, m, v = e
        if not (isinstance(l, int) and isinstance(m, int) and 0 <= l <= lmax and -l <= m <= l):
            raise FieldFormatError(f"(l, m) = ({l!r}, {m!r}) invalid for lmax {lmax}")
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise FieldFormatError(f"coefficient value {v!r} is not a number")
        c[lm_index(l, m)] = float(v)
    return SpectralField(lmax, c)


def save_field(path, f: SpectralField) -> None:
    write_json(path, field_to_dict(f))


def load_field(path) -> SpectralField:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FieldFormatError(f"cannot read field file {path}: {exc}") from exc
    return field_from_dict(d)


# ---------------------------------------------------------------------------
# grid export


def grid_csv(v: GridField) -> str:
    g = v.grid
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["colatitude", "longitude", "value"])
    for i, th in enumerate(g.colat):
        for k, ph in enumerate(g.lon):
            w.writerow([format_float(th), format_float(ph), format_float(v.values[i, k])])
    return out.getvalue()


def write_grid_csv(path, v: GridField) -> None:
    Path(path).write_text(grid_csv(v))


def read_grid_csv(path) -> np.ndarray:
    """Rows of (colatitude, longitude, value) as an (n, 3) array."""
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def table_csv(header, rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(x) for x in r])
    return out.getvalue()


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return int(bool(x))
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return format_float(x)
    return x
