from __future__ import annotations

import numpy as np

from mvstefan import BoundaryPath, SubProbabilityGrid
from mvstefan.io import dumps, read_density_csv, read_path_csv, read_subprobability_csv, write_path_csv


def test_path_csv_roundtrip(tmp_path):
    p = BoundaryPath.on_grid(0.1, [0.0, 1 / 3, 0.5, 2 / 3])
    f = tmp_path / "p.csv"
    write_path_csv(p, f)
    lines = f.read_text().splitlines()
    assert lines[0] == "t,lambda"
    assert lines[2] == "0.1,0.333333333333"
    q = read_path_csv(f)
    assert np.allclose(q.values, p.values, atol=1e-12)


def test_dumps_is_canonical():
    a = dumps({"b": np.float64(0.1), "a": np.arange(3), "c": np.bool_(True)})
    assert a == dumps({"c": True, "a": [0, 1, 2], "b": 0.1})


def test_density_tables(tmp_path):
    f = tmp_path / "d.csv"
    x = (np.arange(400) + 0.5) * 1e-3
    f.write_text("x,density\n" + "".join(f"{v:.6f},2\n" for v in x))
    nu = read_subprobability_csv(f)
    assert isinstance(nu, SubProbabilityGrid)
    assert nu.remaining == np.float64(nu.cell_masses.sum())
    assert abs(nu.remaining - 0.8) < 1e-12 and abs(nu.lost_mass - 0.2) < 1e-12
    law = read_density_csv(f)
    assert abs(law.cdf(0.2) - 0.5) < 1e-12
