import json

import numpy as np
import pytest

from nonlocal_plap.errors import ConfigError
from nonlocal_plap.evolve import StepperConfig, evolve
from nonlocal_plap.grid import Grid, GridFunction, ProblemSpec
from nonlocal_plap.io import (read_checkpoint, read_series, read_snapshot,
                              write_checkpoint, write_snapshot, write_trajectory)
from nonlocal_plap.kernel import make_bump_kernel, make_step_kernel


def test_snapshot_round_trip_exact(tmp_path):
    g = Grid(1, 1.0, 0.125)
    u = GridFunction(g, np.random.default_rng(0).normal(size=g.shape) / 3)
    write_snapshot(tmp_path / "u.csv", u)
    assert (tmp_path / "u.csv").read_text().splitlines()[0] == "x,u"
    assert np.array_equal(read_snapshot(tmp_path / "u.csv", g).values, u.values)


def test_snapshot_2d_header_and_shape(tmp_path):
    g = Grid(2, 1.0, 0.5)
    u = GridFunction(g, np.arange(25.0).reshape(5, 5))
    write_snapshot(tmp_path / "u.csv", u)
    assert (tmp_path / "u.csv").read_text().startswith("x,y,u\n")
    assert np.array_equal(read_snapshot(tmp_path / "u.csv", g).values, u.values)
    with pytest.raises(ConfigError):
        read_snapshot(tmp_path / "u.csv", Grid(2, 1.0, 0.25))


def test_trajectory_files(tmp_path):
    g = Grid(1, 1.5, 1 / 16)
    spec = ProblemSpec("dirichlet", [(-1.0, 1.0)])
    u0 = GridFunction(g, np.where(np.abs(g.axis) < 0.5, 1.0, 0.0))
    tr = evolve(u0, spec, make_step_kernel(0.5), 3.0, 0.5,
                StepperConfig(dt_max=0.1, snapshot_times=(0.2,)))
    names = write_trajectory(tmp_path, tr)
    assert len(names) == len(tr.snapshots)
    series = read_series(tmp_path / "series.csv")
    assert np.array_equal(series, tr.series_array())
    index = (tmp_path / "snapshots.csv").read_text().splitlines()
    assert index[0] == "index,t,file" and len(index) == len(tr.snapshots) + 1


def test_checkpoint_sidecar(tmp_path):
    g = Grid(1, 1.0, 0.125)
    u = GridFunction(g, np.linspace(0, 1, g.N) ** 2)
    spec = ProblemSpec("neumann", [(-0.5, 0.5)])
    kernel = make_bump_kernel(0.5, 4.0)
    path = str(tmp_path / "ck.csv")
    write_checkpoint(path, u, 0.1 + 0.2, 2.5, kernel, spec)
    meta = json.loads((tmp_path / "ck.csv.json").read_text())
    assert meta["kernel"]["family"] == "bump"
    ck = read_checkpoint(path)
    assert ck["t"] == 0.1 + 0.2
    assert ck["spec"] == spec and ck["grid"] == g
    assert ck["kernel"].describe() == kernel.describe()
    assert "stepper" not in ck
