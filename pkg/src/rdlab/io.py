"""CSV and JSON output. CSV floats carry 17 significant digits so files round-trip exactly."""
from __future__ import annotations

import csv
import enum
import json
import math
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Field, Grid, Trajectory, derive_constants

FLOAT_FMT = "{:.17g}"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT.format(float(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path) -> tuple:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(c) if c != "" else math.nan for c in r] for r in body], dtype=float)
    return header, data


def jsonable(o):
    if isinstance(o, dict):
        return {str(k): jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [jsonable(v) for v in o]
    if isinstance(o, enum.Enum):
        return o.value
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if math.isfinite(f) else None
    if isinstance(o, np.ndarray):
        return jsonable(o.tolist())
    return o


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_field(path, f: Field) -> Path:
    return write_csv(path, ["x", "u"], zip(f.grid.x, f.values))


def read_field_values(path) -> tuple:
    """(x, u) columns of a snapshot CSV."""
    _, data = read_csv(path)
    return data[:, 0], data[:, 1]


def write_trajectory(outdir, traj: Trajectory, prefix: str = "u") -> list:
    """One CSV per snapshot plus an interface table; returns the written paths."""
    outdir = Path(outdir)
    paths = []
    for i, snap in enumerate(traj.snapshots):
        paths.append(write_field(outdir / "snapshots" / f"{prefix}_{i:04d}.csv", snap))
    rows = []
    for snap, iv in zip(traj.snapshots, traj.interfaces):
        rows.append((snap.t, None if iv is None else iv[0], None if iv is None else iv[1]))
    paths.append(write_csv(outdir / "interfaces.csv", ["t", "s_l", "s_r"], rows))
    return paths


def trajectory_manifest(traj: Trajectory, config: dict) -> dict:
    params = traj.params
    return {
        "config": config,
        "params": params.to_dict(),
        "derived": derive_constants(params).to_dict(),
        "grid": traj.grid.to_dict(),
        "reaction": None if traj.reaction is None else traj.reaction.to_dict(),
        "snapshot_times": [float(t) for t in traj.times],
        **traj.summary(),
    }


def out_dir(explicit=None) -> Path:
    base = explicit or os.environ.get("RD_LAB_OUT") or "rdlab_out"
    return Path(base)


def grid_from_spec(spec: dict) -> Grid:
    kind = spec.get("kind", "line")
    h = float(spec["h"])
    if kind == "line":
        return Grid.line(float(spec["half_width"]), h)
    if kind == "radial":
        return Grid.radial(float(spec["radius"]), h)
    raise ValueError(f"unknown grid kind {kind!r}")
