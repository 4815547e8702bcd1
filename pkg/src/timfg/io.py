"""CSV output with fixed 17-significant-digit formatting."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: Path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def write_convergence(path, report):
    return write_csv(path, ["k", "d_m", "d_J", "ratio", "seconds"], report.rows())


def write_diagonal(path, grid, J, DxJ):
    rows = ((grid.times[j], grid.xs[i], J[j, i], DxJ[j, i]) for j in range(grid.nt) for i in range(grid.nx))
    return write_csv(path, ["t", "x", "J", "DxJ"], rows)


def write_density(path, flow):
    g = flow.grid
    rows = ((g.times[j], g.xs[i], flow.densities[j, i]) for j in range(g.nt) for i in range(g.nx))
    return write_csv(path, ["t", "x", "p"], rows)


def write_value_slice(path, grid, slab, j_t):
    rows = ((grid.times[j_t], grid.times[j_t + k], grid.xs[i], slab[k, i])
            for k in range(slab.shape[0]) for i in range(grid.nx))
    return write_csv(path, ["t", "s", "x", "V"], rows)


def read_csv(path):
    with Path(path).open() as fh:
        return list(csv.DictReader(fh))
