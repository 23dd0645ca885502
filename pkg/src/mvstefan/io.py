"""CSV and JSON in and out: paths, density tables, reports."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .core import BoundaryPath, GridDensity, SubProbabilityGrid

PATH_HEADER = ("t", "lambda")


def _fmt(v: float) -> str:
    return f"{float(v):.12g}"


def write_path_csv(path: BoundaryPath, file: str | Path) -> None:
    """Grid times t >= 0 with header ``t,lambda`` and 12 significant digits."""
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PATH_HEADER)
        for t, v in zip(path.grid_times, path.grid_values):
            w.writerow([_fmt(t), _fmt(v)])


def read_path_csv(file: str | Path) -> BoundaryPath:
    """Inverse of :func:`write_path_csv`; the value at 0- is 0."""
    with open(file, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != list(PATH_HEADER):
        raise ValueError(f"{file}: expected header 't,lambda'")
    data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    if data.size == 0:
        raise ValueError(f"{file}: no rows")
    t, v = data[:, 0], data[:, 1]
    if t[0] == -1.0:
        return BoundaryPath(t, v)
    return BoundaryPath(np.concatenate([[-1.0], t]), np.concatenate([[0.0], v]))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(obj, file: str | Path) -> None:
    Path(file).write_text(dumps(obj))


def read_json(file: str | Path):
    return json.loads(Path(file).read_text())


def read_density_table(file: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Two columns (x, density); a non-numeric first row is taken as a header."""
    xs, ds = [], []
    with open(file, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                x, d = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if i == 0:
                    continue
                raise ValueError(f"{file}: bad row {i + 1}: {row}")
            xs.append(x)
            ds.append(d)
    x = np.asarray(xs)
    d = np.asarray(ds)
    if x.size < 2:
        raise ValueError(f"{file}: need at least two rows")
    if np.any(np.diff(x) <= 0):
        raise ValueError(f"{file}: x must be strictly increasing")
    if np.any(d < 0):
        raise ValueError(f"{file}: density must be nonnegative")
    return x, d


def _spacing(x: np.ndarray) -> float:
    dx = float(np.median(np.diff(x)))
    if np.max(np.abs(np.diff(x) - dx)) > 1e-6 * dx:
        raise ValueError("density table must be equally spaced")
    return dx


def read_density_csv(file: str | Path) -> GridDensity:
    """Initial law from a density table; x are cell midpoints, the mass is normalised to 1."""
    x, d = read_density_table(file)
    dx = _spacing(x)
    masses = d * dx
    total = masses.sum()
    if not total > 0:
        raise ValueError(f"{file}: density has no mass")
    return GridDensity(dx=dx, masses=masses / total, origin=float(x[0] - 0.5 * dx))


def read_subprobability_csv(file: str | Path) -> SubProbabilityGrid:
    """Surviving mass nu from a density table on (0, x_max]; x are cell midpoints. Not normalised."""
    x, d = read_density_table(file)
    dx = _spacing(x)
    idx = np.rint(x / dx - 0.5).astype(int)
    if idx[0] < 0:
        raise ValueError(f"{file}: nu lives on (0, x_max]")
    masses = np.zeros(idx[-1] + 1)
    masses[idx] = d * dx
    if masses.sum() > 1 + 1e-9:
        raise ValueError(f"{file}: total mass {masses.sum():.6g} exceeds 1")
    # whatever is missing from a unit mass is booked as already lost
    return SubProbabilityGrid(dx, masses, lost_mass=max(0.0, 1.0 - float(masses.sum())))
