"""CSV snapshots and series, and the restart sidecar.

Floats are written with ``repr`` so a round trip is exact; together with
the sidecar this lets a proximal run restart bit-identically.
"""
from __future__ import annotations

import csv
import json
import os

import numpy as np

from .errors import ConfigError
from .grid import SERIES_COLUMNS, Grid, GridFunction, ProblemSpec, Trajectory
from .kernel import make_kernel

__all__ = [
    "write_snapshot", "read_snapshot", "write_series", "read_series",
    "write_trajectory", "write_checkpoint", "read_checkpoint",
]


def write_snapshot(path, u: GridFunction):
    """CSV with header ``x,u`` (1D) or ``x,y,u`` (2D)."""
    g = u.grid
    X = g.coordinates().reshape(-1, g.dimension)
    vals = u.values.ravel()
    header = ["x", "u"] if g.dimension == 1 else ["x", "y", "u"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for xi, v in zip(X, vals):
            w.writerow([repr(float(c)) for c in xi] + [repr(float(v))])


def read_snapshot(path, grid: Grid) -> GridFunction:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != grid.N ** grid.dimension:
        raise ConfigError([f"{path}: {data.shape[0]} rows do not match the grid"])
    return GridFunction(grid, data[:, -1].reshape(grid.shape))


def write_series(path, traj: Trajectory):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for row in traj.series:
            w.writerow([repr(float(v)) for v in row])


def read_series(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def write_trajectory(directory, traj: Trajectory, prefix: str = ""):
    """Write every snapshot plus the series into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    names = []
    for k, (t, u) in enumerate(traj.snapshots):
        name = os.path.join(directory, f"{prefix}snapshot_{k:04d}.csv")
        write_snapshot(name, u)
        names.append((t, name))
    write_series(os.path.join(directory, f"{prefix}series.csv"), traj)
    with open(os.path.join(directory, f"{prefix}snapshots.csv"), "w") as fh:
        fh.write("index,t,file\n")
        for k, (t, name) in enumerate(names):
            fh.write(f"{k},{t!r},{os.path.basename(name)}\n")
    return names


def write_checkpoint(path, u: GridFunction, t: float, p: float, kernel,
                     spec: ProblemSpec, stepper=None):
    """Snapshot CSV at ``path`` and a JSON sidecar at ``path + '.json'``."""
    write_snapshot(path, u)
    g = u.grid
    meta = {
        "t": repr(float(t)), "p": repr(float(p)),
        "grid": {"dimension": g.dimension, "L": repr(g.L), "h": repr(g.h)},
        "kernel": kernel.describe(),
        "problem": {"variant": spec.variant,
                    "domain": None if spec.domain is None else
                    [[repr(a), repr(b)] for a, b in spec.domain],
                    "padding_layers": spec.padding_layers},
    }
    if stepper is not None:
        meta["stepper"] = {
            "scheme": stepper.scheme, "cfl_theta": repr(stepper.cfl_theta),
            "dt_max": repr(stepper.dt_max), "prox_tol": repr(stepper.prox_tol),
            "prox_max_iters": int(stepper.prox_max_iters)}
    with open(path + ".json", "w") as fh:
        json.dump(meta, fh, indent=2)


def read_checkpoint(path) -> dict:
    """Inverse of :func:`write_checkpoint`.

    Returns a dict with ``u``, ``t``, ``p``, ``kernel``, ``spec``, ``grid``
    and, when recorded, ``stepper`` keyword arguments.
    """
    with open(path + ".json") as fh:
        meta = json.load(fh)
    gm = meta["grid"]
    grid = Grid(int(gm["dimension"]), float(gm["L"]), float(gm["h"]))
    km = meta["kernel"]
    kernel = make_kernel(km["family"], float(km["radius"]), km["exponent"],
                         int(km["dimension"]))
    pm = meta["problem"]
    dom = pm["domain"]
    spec = ProblemSpec(pm["variant"],
                       None if dom is None else [(float(a), float(b)) for a, b in dom],
                       int(pm["padding_layers"]))
    out = {"u": read_snapshot(path, grid), "t": float(meta["t"]),
           "p": float(meta["p"]), "kernel": kernel, "spec": spec, "grid": grid}
    if "stepper" in meta:
        sm = meta["stepper"]
        out["stepper"] = {"scheme": sm["scheme"], "cfl_theta": float(sm["cfl_theta"]),
                          "dt_max": float(sm["dt_max"]),
                          "prox_tol": float(sm["prox_tol"]),
                          "prox_max_iters": int(sm["prox_max_iters"])}
    return out
