"""Batch front end: ``rdlab {solve,profile,verify,nonuniq,sweep} CONFIG``.

A config is one JSON document; ``--set a.b=value`` overrides single keys
(values are parsed as JSON when possible). Output goes to ``--out``, else
``$RD_LAB_OUT``, else ``./rdlab_out``. Exit codes: 0 ok, 1 runtime failure,
2 invalid config.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import io
from .analysis import abe_check, bump_battery, classify_speed, track_interfaces, weak_residual
from .core import (Field, GridError, LabError, Params, ParamsError, barenblatt, bump,
                   derive_constants, tent)
from .minimal import minimal_solution
from .nonuniq import InterfaceSchedule, distinctness_certificate, prescribed_interface_solution
from .selfsim import (InterfaceType, build_barrier, classify_interface, compute_E_profile,
                      shoot_f2_singular, shoot_from_interface, shoot_symmetric_profile,
                      singular_slope, synthetic_profile)
from .solver import RegularizedReaction, StepperConfig, StepperConfigError, solve_cauchy

log = logging.getLogger("rdlab")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class ConfigError(LabError, ValueError):
    code = "CONFIG_INVALID"


# --------------------------------------------------------------------------
# config handling


def load_config(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def apply_overrides(cfg: dict, sets) -> dict:
    cfg = copy.deepcopy(cfg)
    for item in sets or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = val
    return cfg


def build_params(cfg: dict) -> Params:
    if "params" not in cfg:
        raise ConfigError("config needs a params section")
    return Params.from_dict(cfg["params"])


def build_stepper(cfg: dict) -> StepperConfig:
    d = dict(cfg.get("stepper", {}))
    if d.get("blowup_threshold") is None:
        d.pop("blowup_threshold", None)
    try:
        return StepperConfig(**d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def build_initial(cfg: dict, params: Params, base: Path = Path(".")) -> Field:
    grid = io.grid_from_spec(cfg["grid"])
    spec = dict(cfg.get("initial", {"shape": "zero"}))
    shape = spec.pop("shape", "zero")
    lift = float(spec.pop("lift", 0.0))
    t0 = float(spec.pop("t0", 0.0))
    if shape == "zero":
        v = np.zeros(grid.n_nodes)
    elif shape == "tent":
        v = tent(grid, **spec).values
    elif shape == "bump":
        v = bump(grid, **spec).values
    elif shape == "constant":
        v = np.full(grid.n_nodes, float(spec.get("value", 1.0)))
    elif shape == "barenblatt":
        if t0 <= 0:
            raise ConfigError("barenblatt data need t0 > 0")
        v = barenblatt(params, float(spec.get("mass_const", 1.0)), grid.x, t0)
    elif shape == "table":
        xs, us = io.read_field_values(base / spec["path"])
        v = np.interp(grid.x, xs, us, left=0.0, right=0.0)
    else:
        raise ConfigError(f"unknown initial shape {shape!r}")
    v = np.asarray(v, dtype=float) + lift
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ConfigError("initial data must be finite and nonnegative")
    boundary = cfg.get("stepper", {}).get("boundary", "dirichlet")
    if boundary == "dirichlet" and lift == 0 and shape not in ("constant",):
        edge = v[-3:] if grid.kind == "radial" else np.concatenate([v[:3], v[-3:]])
        if np.any(edge > 0):
            raise ConfigError("initial data must vanish near the computational boundary")
    return Field(grid, t0, v)


def _snapshot_times(exp: dict, t0: float, t_end: float):
    if "snapshot_times" in exp:
        return [float(s) for s in exp["snapshot_times"]]
    n = int(exp.get("n_snapshots", 16))
    return list(np.linspace(t0, t_end, n + 1)[1:])


def _reaction(exp: dict, params: Params):
    if exp.get("reaction", True) is False:
        return None
    k = exp.get("k", None)
    return RegularizedReaction(params, None if k is None else float(k))


# --------------------------------------------------------------------------
# commands


def cmd_solve(cfg: dict, out: Path, jobs: int = 1) -> dict:
    params = build_params(cfg)
    stepper = build_stepper(cfg)
    u0 = build_initial(cfg, params)
    exp = cfg.get("experiment", {})
    mode = exp.get("mode", "cauchy")
    t_end = float(exp.get("t_end", 1.0))
    snaps = _snapshot_times(exp, u0.t, t_end)
    report = None
    if mode == "cauchy":
        traj = solve_cauchy(u0, _reaction(exp, params), stepper, t_end, snaps, params=params)
    elif mode == "minimal":
        rep = minimal_solution(u0, params, k_max=exp.get("k_max"), tol=exp.get("tol"),
                               t_end=t_end, check_barrier=bool(exp.get("check_barrier", False)),
                               cfg=stepper, snapshot_times=snaps, jobs=jobs)
        traj = rep.trajectory
        report = rep.to_dict()
        io.write_json(out / "minimal_report.json", report)
    else:
        raise ConfigError(f"unknown solve mode {mode!r}")
    io.write_trajectory(out, traj)
    manifest = io.trajectory_manifest(traj, cfg)
    manifest["command"] = "solve"
    io.write_json(out / "manifest.json", manifest)
    return {"status": traj.status.value, "report": report}


def cmd_profile(cfg: dict, out: Path, jobs: int = 1) -> dict:
    params = build_params(cfg)
    spec = cfg.get("profile", {})
    kind = spec.get("kind", "symmetric")
    result = {}
    if kind == "symmetric":
        prof = shoot_symmetric_profile(params, **spec.get("options", {}))
    elif kind == "interface":
        prof = shoot_from_interface(params, float(spec["xi0"]),
                                    InterfaceType(spec.get("type", "TypeI")))
    elif kind == "f2":
        prof = shoot_f2_singular(params, float(spec.get("xi0", 0.5)))
        result["singular_slope"] = singular_slope(prof)
        result["expected_slope"] = -(params.dim - 2) / params.m
    elif kind == "synthetic":
        prof = synthetic_profile(params, float(spec.get("xi0", 1.0)), float(spec["exponent"]))
    elif kind == "E":
        prof = compute_E_profile(params).profile
    elif kind == "barrier":
        bar = build_barrier(params, A=float(spec.get("A", 1.0)), R=float(spec.get("R", 1.0)))
        result["barrier"] = bar.describe()
        prof = bar.profile if bar.profile is not None else bar.f2
    else:
        raise ConfigError(f"unknown profile kind {kind!r}")
    try:
        itype, slope = classify_interface(prof)
        result["classification"] = {"type": itype.value, "slope": slope}
    except LabError as exc:
        result["classification"] = {"type": "inconclusive", "error": str(exc)}
    result["profile"] = prof.header()
    io.write_csv(out / "profile.csv", ["xi", "f", "g"], prof.to_rows())
    io.write_json(out / "classification.json", result)
    io.write_json(out / "manifest.json", {"command": "profile", "config": cfg,
                                          "params": params.to_dict(),
                                          "derived": derive_constants(params).to_dict()})
    return result


def cmd_verify(cfg: dict, out: Path, jobs: int = 1) -> dict:
    params = build_params(cfg)
    stepper = build_stepper(cfg)
    u0 = build_initial(cfg, params)
    exp = cfg.get("experiment", {})
    spec = cfg.get("verify", {})
    result = {}
    t_end = float(exp.get("t_end", 1.0))
    traj = None
    if spec.get("abe", True) or "weak" in spec:
        snaps = _snapshot_times(exp, u0.t, t_end)
        traj = solve_cauchy(u0, _reaction(exp, params), stepper, t_end, snaps, params=params)
        io.write_trajectory(out, traj)
    if spec.get("abe", True):
        opts = spec.get("abe_options", {})
        rep = abe_check(traj, params, buffer=int(opts.get("buffer", 1)),
                        band=int(opts.get("band", 1)), t_window=opts.get("t_window"))
        result["abe"] = rep.to_dict()
        io.write_csv(out / "abe_margins.csv", ["t", "margin", "relative", "tol"], rep.to_rows())
    if "weak" in spec:
        w = spec["weak"]
        t0 = float(traj.times[0])
        x = traj.grid.x
        span = w.get("x_range", [float(x[0]) + 2 * traj.grid.h, float(x[-1]) - 2 * traj.grid.h])
        bat = bump_battery(int(w.get("n_bumps", 20)), span, (t0, t_end), seed=int(w.get("seed", 0)),
                           radial=traj.grid.kind == "radial", dim=params.dim)
        vals = [weak_residual(traj, b, return_scale=True) for b in bat]
        result["weak"] = {"residuals": [v for v, _ in vals], "scales": [s for _, s in vals],
                          "max_abs": max(abs(v) for v, _ in vals)}
    if "speed" in spec:
        s = spec["speed"]
        rep = classify_speed(params, u0, X=float(s["X"]), delta_t=float(s["delta_t"]),
                             k_max=s.get("k_max"), cfg=stepper)
        result["speed"] = rep.to_dict()
    if traj is not None:
        track = track_interfaces(traj)
        io.write_csv(out / "interface_track.csv", ["t", "s_l", "s_r", "everywhere_positive"],
                     track.to_rows())
    io.write_json(out / "verify.json", result)
    io.write_json(out / "manifest.json", {"command": "verify", "config": cfg,
                                          "params": params.to_dict(),
                                          "derived": derive_constants(params).to_dict()})
    return result


def cmd_nonuniq(cfg: dict, out: Path, jobs: int = 1) -> dict:
    params = build_params(cfg)
    stepper = build_stepper(cfg)
    u0 = build_initial(cfg, params)
    spec = cfg.get("nonuniq", {})
    result = {}
    k_max = spec.get("k_max")
    if "r" in spec:
        result["certificate"] = distinctness_certificate(
            u0, params, float(spec["r"]), float(spec.get("delta", 0.02)), k_max=k_max, cfg=stepper)
    if "schedule" in spec:
        sch = spec["schedule"]
        n = int(sch.get("n", 16))
        t = float(sch.get("t", 0.05))
        part = [j * t / n for j in range(n + 1)]
        if "right" in sch:
            schedule = InterfaceSchedule.from_json(json.dumps(sch))
        else:
            # extra speed over the measured minimal interfaces
            c = float(sch.get("extra_speed", 0.0))
            rep = minimal_solution(u0, params, k_max=k_max, t_end=t, check_barrier=False,
                                   cfg=stepper, snapshot_times=part[1:])
            ivs = rep.trajectory.interfaces
            schedule = InterfaceSchedule(tuple((s, iv[1] + c * s) for s, iv in zip(part, ivs)))
            schedule.validate(part, s_r=[iv[1] for iv in ivs])
        pr = prescribed_interface_solution(u0, params, schedule, n, t, cfg=stepper)
        h = u0.grid.h
        match = pr.to_dict()
        match["tolerance"] = 2 * h
        match["matched"] = pr.max_match_error <= 2 * h
        match["schedule"] = schedule.to_dict()
        result["interface_match"] = match
        io.write_csv(out / "interface_match.csv", ["t", "target_right", "measured_right"],
                     zip(pr.partition, pr.target_right, pr.measured_right))
        io.write_trajectory(out, pr.trajectory)
    io.write_json(out / "certificate.json", result)
    io.write_json(out / "manifest.json", {"command": "nonuniq", "config": cfg,
                                          "params": params.to_dict(),
                                          "derived": derive_constants(params).to_dict()})
    return result


COMMANDS = {"solve": cmd_solve, "profile": cmd_profile, "verify": cmd_verify,
            "nonuniq": cmd_nonuniq}


def _sweep_one(args):
    command, cfg, out = args
    try:
        COMMANDS[command](cfg, Path(out))
        return {"out": str(out), "ok": True}
    except LabError as exc:
        io.write_json(Path(out) / "error.json", _error_payload(exc))
        return {"out": str(out), "ok": False, "error": str(exc)}


def cmd_sweep(cfg: dict, out: Path, jobs: int = 1) -> dict:
    spec = cfg.get("sweep")
    if not spec:
        raise ConfigError("sweep config needs a sweep section")
    command = spec.get("command", "solve")
    if command not in COMMANDS:
        raise ConfigError(f"unknown sweep command {command!r}")
    key = spec["key"]
    tasks = []
    for i, val in enumerate(spec["values"]):
        run = apply_overrides({k: v for k, v in cfg.items() if k != "sweep"},
                              [f"{key}={json.dumps(val)}"])
        build_params(run)  # validate before dispatch
        tasks.append((command, run, str(out / f"run_{i:03d}")))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, tasks))
    else:
        results = [_sweep_one(t) for t in tasks]
    summary = {"key": key, "values": spec["values"], "runs": results}
    io.write_json(out / "sweep.json", summary)
    io.write_json(out / "manifest.json", {"command": "sweep", "config": cfg})
    if not all(r["ok"] for r in results):
        raise LabError("some sweep runs failed", failed=[r["out"] for r in results if not r["ok"]])
    return summary


COMMANDS["sweep"] = cmd_sweep


# --------------------------------------------------------------------------
# entry point


def _error_payload(exc: Exception) -> dict:
    return {"error": type(exc).__name__, "code": getattr(exc, "code", None),
            "message": str(exc), "info": getattr(exc, "info", {})}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rdlab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("config", help="JSON config file")
    ap.add_argument("--out", help="output directory (default: $RD_LAB_OUT or ./rdlab_out)")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config key, e.g. params.sigma=2")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = io.out_dir(args.out)
    try:
        cfg = apply_overrides(load_config(args.config), args.set)
        result = COMMANDS[args.command](cfg, out, jobs=args.jobs)
    except (ConfigError, ParamsError, GridError, StepperConfigError, KeyError) as exc:
        payload = _error_payload(exc)
        payload["code"] = payload["code"] or "CONFIG_INVALID"
        io.write_json(out / "error.json", payload)
        print(json.dumps(payload), file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failure: report and exit 1
        payload = _error_payload(exc)
        io.write_json(out / "error.json", payload)
        print(json.dumps(payload), file=sys.stderr)
        return EXIT_RUNTIME
    log.info("wrote %s", out)
    print(json.dumps(io.jsonable({"command": args.command, "out": str(out),
                                   "status": "ok"})))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
