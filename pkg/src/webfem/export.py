"""Sampled field export (CSV, legacy VTK) and atomic file writes."""

from __future__ import annotations

import io
import json
import os
import tempfile

import numpy as np

from .solve import evaluate_solution

FIELD_COLUMNS = ("x", "y", "inside", "u1", "u2")


def write_atomic(path, text):
    """Write `text` to `path` through a temporary file and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, data):
    return write_atomic(path, json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialize {type(v).__name__}")


def sample_lattice(dom, res):
    """Tensor lattice with `res` points per dimension over the bounding box, x fastest."""
    if res < 2:
        raise ValueError("sample resolution must be at least 2")
    axes = [np.linspace(lo, hi, res) for lo, hi in zip(dom.lower, dom.upper)]
    mesh = np.meshgrid(*axes, indexing="xy")
    return np.stack([g.ravel() for g in mesh], axis=1), axes


def sample_field(sol, res):
    """Points, inside mask and component values (2, P) on the export lattice.

    Values outside the domain are NaN; they are never reported as numbers.
    """
    pts, axes = sample_lattice(sol.basis.dom, res)
    vals, inside = evaluate_solution(sol, pts)
    vals = np.where(inside[None, :], vals, np.nan)
    return pts, inside, vals, axes


def field_csv(sol, res):
    pts, inside, vals, _ = sample_field(sol, res)
    buf = io.StringIO()
    buf.write(",".join(FIELD_COLUMNS) + "\n")
    m = pts.shape[1]
    for k in range(len(pts)):
        y = f"{pts[k, 1]:.10g}" if m > 1 else ""
        if inside[k]:
            u1, u2 = f"{vals[0, k]:.12e}", f"{vals[1, k]:.12e}"
        else:
            u1 = u2 = ""
        buf.write(f"{pts[k, 0]:.10g},{y},{int(inside[k])},{u1},{u2}\n")
    return buf.getvalue()


def field_vtk(sol, res):
    pts, inside, vals, axes = sample_field(sol, res)
    m = pts.shape[1]
    dims = [res] * m + [1] * (3 - m)
    origin = [a[0] for a in axes] + [0.0] * (3 - m)
    spacing = [a[1] - a[0] for a in axes] + [1.0] * (3 - m)
    vals = np.where(inside[None, :], vals, 0.0)
    lines = [
        "# vtk DataFile Version 3.0",
        "webfem solution field",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS " + " ".join(str(d) for d in dims),
        "ORIGIN " + " ".join(f"{v:.10g}" for v in origin),
        "SPACING " + " ".join(f"{v:.10g}" for v in spacing),
        f"POINT_DATA {len(pts)}",
    ]
    for name, data, fmt in (("u1", vals[0], "{:.12e}"), ("u2", vals[1], "{:.12e}"),
                            ("inside", inside.astype(int), "{:d}")):
        kind = "int" if name == "inside" else "double"
        lines += [f"SCALARS {name} {kind} 1", "LOOKUP_TABLE default"]
        lines += [fmt.format(v) for v in data]
    return "\n".join(lines) + "\n"


def export_field(sol, res, fmt, path):
    """Write the sampled solution to `path` as ``csv`` or ``vtk``; returns the path."""
    if fmt == "csv":
        text = field_csv(sol, res)
    elif fmt == "vtk":
        text = field_vtk(sol, res)
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    return write_atomic(path, text)
