"""Snapshot, CSV and manifest writers.

Snapshot files hold one component each: a text header line
``GSAV1 nx ny a b c d t comp`` (floats in ``repr`` form) followed by
``nx·ny`` little-endian float64 values in row-major (x-major) order.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .grid import Grid

MAGIC = "GSAV1"


def write_snapshot(path, grid: Grid, field: np.ndarray, t: float, comp: int = 0) -> None:
    field = np.asarray(field, dtype=float)
    if field.shape != grid.shape:
        raise ValueError(f"field shape {field.shape} does not match grid {grid.shape}")
    header = " ".join(
        [MAGIC, str(grid.nx), str(grid.ny)] + [repr(float(v)) for v in (grid.a, grid.b, grid.c, grid.d, t)] + [str(comp)]
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(np.ascontiguousarray(field, dtype="<f8").tobytes())


def read_snapshot(path) -> tuple[Grid, np.ndarray, float, int]:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        payload = fh.read()
    if len(header) != 9 or header[0] != MAGIC:
        raise ValueError(f"{path} is not a {MAGIC} snapshot")
    nx, ny = int(header[1]), int(header[2])
    a, b, c, d, t = (float(v) for v in header[3:8])
    if len(payload) != 8 * nx * ny:
        raise ValueError(f"{path}: payload has {len(payload)} bytes, expected {8 * nx * ny}")
    field = np.frombuffer(payload, dtype="<f8").reshape(nx, ny).astype(float)
    return Grid(nx, ny, a, b, c, d), field, t, int(header[8])


def diag_header(n_components: int, n_potentials: int) -> list[str]:
    return (
        ["step", "t", "dt", "E_original", "E_modified"]
        + [f"mass_{i}" for i in range(n_components)]
        + [f"xi_{i}" for i in range(n_potentials)]
        + [f"r_{i}" for i in range(n_potentials)]
        + ["newton_iters"]
    )


class DiagWriter:
    """Streams diagnostics rows to ``diag.csv`` (floats written with ``repr``)."""

    def __init__(self, path, n_components: int, n_potentials: int):
        self.fh = open(path, "w", newline="")
        self.writer = csv.writer(self.fh)
        self.writer.writerow(diag_header(n_components, n_potentials))

    def write(self, rec) -> None:
        row = [v.item() if isinstance(v, np.generic) else v for v in rec.row()]
        self.writer.writerow([repr(v) if isinstance(v, float) else v for v in row])

    def close(self) -> None:
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_diag(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = list(zip(*body)) if body else [()] * len(header)
    return {h: np.array([float(v) for v in col]) for h, col in zip(header, cols)}


def write_manifest(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
