"""Deterministic CSV / manifest / plot-data writers.

Floats are written with repr (shortest round-trip), decimal dot, LF line
endings; identical inputs produce byte-identical files. The run manifest
additionally records wall time, which is the one field excluded from the
bit-identity contract.
"""

from __future__ import annotations

import json
from pathlib import Path


def fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    if hasattr(value, "item"):
        return fmt(value.item())
    return str(value)


def write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", newline="\n")


def write_plot_data(path: Path, xs, ys) -> None:
    """Two-column plot file (gnuplot-style)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{fmt(float(x))} {fmt(float(y))}" for x, y in zip(xs, ys)]
    path.write_text("\n".join(lines) + "\n", newline="\n")


def write_manifest(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", newline="\n")


def write_summary(path: Path, lines: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", newline="\n")


def write_points_csv(path: Path, points, times=None) -> None:
    """Point list export: header t,x1..xn, or x1..xn when no time column."""
    import numpy as np

    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[1]
    if times is not None:
        header = ["t"] + [f"x{j + 1}" for j in range(n)]
        rows = [(float(t), *row.tolist()) for t, row in zip(times, pts)]
    else:
        header = [f"x{j + 1}" for j in range(n)]
        rows = [tuple(row.tolist()) for row in pts]
    write_csv(path, header, rows)
