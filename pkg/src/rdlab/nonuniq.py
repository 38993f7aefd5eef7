"""Distinct solutions from one initial datum by instantaneous support jumps.

The fundamental extension replaces the tail of u0 beyond the last level-eps
point by a linear ramp reaching zero r further out. Decreasing eps gives the
extended solution; repeating the jump at every node of a time partition makes
the interfaces follow prescribed curves.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Field, LabError, Params, Regime, Status, Trajectory, support_edges
from .minimal import minimal_solution, resolved_k_max
from .selfsim import ProfileUnavailable, SupersolutionBarrier, absolute_minimal_E
from .solver import RegularizedReaction, StepperConfig, solve_cauchy

__all__ = [
    "EpsTooLarge", "ExtendedReport", "InterfaceSchedule", "PrescribedReport", "ScheduleInvalid",
    "distinctness_certificate", "extended_solution", "fundamental_extension",
    "prescribed_interface_solution",
]


class EpsTooLarge(LabError):
    code = "EPS_TOO_LARGE"


class ScheduleInvalid(LabError):
    code = "SCHEDULE_INVALID"


def _right_edge(values: np.ndarray, x: np.ndarray) -> float:
    edges = support_edges(x, values, 0.0)
    if edges is None:
        raise EpsTooLarge("initial datum vanishes identically")
    return edges[1]


def _extend_right(x: np.ndarray, u: np.ndarray, r: float, eps: float,
                  R0: Optional[float] = None) -> np.ndarray:
    if not eps > 0:
        raise ValueError("eps must be positive")
    above = np.flatnonzero(u >= eps)
    if above.size == 0:
        raise EpsTooLarge("no point where the datum reaches eps", eps=eps, sup=float(np.max(u)))
    if R0 is None:
        R0 = _right_edge(u, x)
    i = above[-1]
    # last level-eps crossing, interpolated toward the right edge
    if i + 1 < x.size and u[i] != u[i + 1]:
        R_eps = x[i] + (u[i] - eps) / (u[i] - u[i + 1]) * (x[i + 1] - x[i])
    else:
        R_eps = x[i]
    edge = R0 + r
    ramp = eps * (edge - x) / (edge - R_eps)
    out = u.copy()
    tail = x >= R_eps
    # max keeps the extension above u0 when u0 is convex near its edge
    out[tail] = np.maximum(u[tail], np.clip(ramp[tail], 0.0, None))
    return out


def fundamental_extension(u0: Field, r: float, eps: float, side: str = "right") -> Field:
    """Ramp extension of ``u0`` from its last level-``eps`` point to R0 + r.

    ``side="left"`` performs the mirror-image jump of the left edge. Radial
    grids only have a right edge.
    """
    if r < 0:
        raise ValueError("jump length must be nonnegative")
    x = u0.grid.x
    u = np.array(u0.values, dtype=float)
    if side == "right":
        out = _extend_right(x, u, r, eps)
    elif side == "left":
        if u0.grid.kind == "radial":
            raise ValueError("radial data have no left edge")
        out = _extend_right(-x[::-1], u[::-1], r, eps)[::-1]
    else:
        raise ValueError(f"unknown side {side!r}")
    return u0.with_values(out)


def default_eps_schedule(u0: Field, levels: int = 6) -> list:
    return [u0.sup / 4.0 * 2.0 ** (-j) for j in range(levels)]


@dataclass
class ExtendedReport:
    trajectory: Trajectory
    eps_schedule: list
    r: float
    R0: float
    monotonicity_margin: float
    lower_bound_margin: Optional[float]
    lower_bound_probes: list
    trajectories: Optional[list] = None

    def to_dict(self) -> dict:
        return {"eps_schedule": self.eps_schedule, "r": self.r, "R0": self.R0,
                "monotonicity_margin": self.monotonicity_margin,
                "lower_bound_margin": self.lower_bound_margin,
                "lower_bound_probes": self.lower_bound_probes,
                "status": self.trajectory.status.value}


def _solve_minimal(u0: Field, params: Params, t_end: float, snapshot_times, k_max, cfg, sweep: bool):
    if sweep:
        rep = minimal_solution(u0, params, k_max=k_max, t_end=t_end, check_barrier=False,
                               cfg=cfg, snapshot_times=snapshot_times)
        return rep.trajectory
    k = resolved_k_max(params, u0.grid.h) if k_max is None else k_max
    return solve_cauchy(u0, RegularizedReaction(params, k), cfg, t_end, snapshot_times, params=params)


def extended_solution(u0: Field, params: Params, r: float, t_end: float,
                      eps_schedule: Optional[Sequence[float]] = None,
                      snapshot_times: Optional[Sequence[float]] = None,
                      k_max: Optional[int] = None, cfg: Optional[StepperConfig] = None,
                      n_probes: int = 3, sweep: bool = True, keep_all: bool = False) -> ExtendedReport:
    """Minimal solutions from the eps-extended data, down a decreasing eps schedule.

    Returns the smallest-eps trajectory together with the nodewise ordering
    margin between consecutive eps levels and the lower bound by translates
    of the absolute minimal solution E centred at probe points of the ramp.
    """
    if params.regime is Regime.FAST:
        raise ValueError("the extension construction needs m + p >= 2")
    cfg = cfg or StepperConfig()
    eps_schedule = list(eps_schedule or default_eps_schedule(u0))
    if any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise ValueError("eps schedule must be strictly decreasing")
    if snapshot_times is None:
        snapshot_times = np.linspace(0.0, t_end, 17)[1:]
    x = u0.grid.x
    R0 = _right_edge(np.asarray(u0.values), x)
    trajs = []
    for eps in eps_schedule:
        ue = fundamental_extension(u0, r, eps)
        trajs.append(_solve_minimal(ue, params, t_end, snapshot_times, k_max, cfg, sweep))
    mono = math.inf
    for a, b in zip(trajs, trajs[1:]):
        n = min(len(a.snapshots), len(b.snapshots))
        mono = min(mono, float(np.min(a.values()[:n] - b.values()[:n])))
    if math.isinf(mono):
        mono = 0.0

    final = trajs[-1]
    probes = list(np.linspace(R0, R0 + r, n_probes + 2)[1:-1])
    lb = None
    try:
        lb = math.inf
        for snap in final.snapshots[1:]:
            for x0 in probes:
                e = absolute_minimal_E(params, x - x0, snap.t)
                lb = min(lb, float(np.min(snap.values - e)))
    except ProfileUnavailable:
        lb = None
    return ExtendedReport(final, eps_schedule, r, R0, mono, lb, [float(p) for p in probes],
                          trajs if keep_all else None)


def distinctness_certificate(u0: Field, params: Params, r: float, delta: float,
                             solver_tol: Optional[float] = None, k_max: Optional[int] = None,
                             cfg: Optional[StepperConfig] = None) -> dict:
    """Compare the r-extended solution with M(u0) at t = delta."""
    snaps = [delta]
    ext = extended_solution(u0, params, r, delta, snapshot_times=snaps, k_max=k_max, cfg=cfg)
    mrep = minimal_solution(u0, params, k_max=k_max, t_end=delta, check_barrier=False, cfg=cfg,
                            snapshot_times=snaps)
    x = u0.grid.x
    R0 = ext.R0
    ue = ext.trajectory.snapshots[-1].values
    um = mrep.trajectory.snapshots[-1].values
    window = (x > R0 + r / 4) & (x < R0 + 3 * r / 4)
    min_jump = float(np.min(ue[window])) if np.any(window) else math.nan
    iv = mrep.trajectory.interfaces[-1]
    s_r = None if iv is None else iv[1]
    tol = mrep.tol if solver_tol is None else solver_tol
    diff = float(np.max(np.abs(ue - um)))
    return {
        "R0": R0, "r": r, "delta": delta,
        "min_on_jump_interval": min_jump,
        "positive_on_jump_interval": bool(min_jump > 0),
        "minimal_s_r": s_r,
        "minimal_behind_jump": bool(s_r is not None and s_r < R0 + r / 4),
        "sup_difference": diff,
        "solver_tol": tol,
        "distinct": bool(diff > 10 * tol),
        "eps_monotonicity_margin": ext.monotonicity_margin,
        "E_lower_bound_margin": ext.lower_bound_margin,
    }


# --------------------------------------------------------------------------
# prescribed interfaces


@dataclass(frozen=True)
class InterfaceSchedule:
    """Piecewise-linear interface curves given by breakpoints (t, xi)."""

    right: tuple
    left: Optional[tuple] = None
    T: float = math.inf

    def __post_init__(self):
        for pts in (self.right, self.left):
            if pts is None:
                continue
            ts = [p[0] for p in pts]
            if len(pts) < 1 or any(b <= a for a, b in zip(ts, ts[1:])):
                raise ScheduleInvalid("breakpoint times must be strictly increasing")

    @staticmethod
    def _eval(pts, t):
        ts = np.array([p[0] for p in pts], dtype=float)
        xs = np.array([p[1] for p in pts], dtype=float)
        return np.interp(t, ts, xs)

    def xi_r(self, t):
        return self._eval(self.right, t)

    def xi_l(self, t):
        return None if self.left is None else self._eval(self.left, t)

    @classmethod
    def from_function(cls, times: Sequence[float], right, left=None, T: float = math.inf):
        r = tuple((float(t), float(right(t))) for t in times)
        lf = None if left is None else tuple((float(t), float(left(t))) for t in times)
        return cls(r, lf, T)

    @classmethod
    def from_json(cls, text: str) -> "InterfaceSchedule":
        d = json.loads(text)
        right = tuple(tuple(map(float, p)) for p in d["right"])
        left = None if d.get("left") is None else tuple(tuple(map(float, p)) for p in d["left"])
        return cls(right, left, float(d.get("T", math.inf)))

    def to_dict(self) -> dict:
        return {"right": [list(p) for p in self.right],
                "left": None if self.left is None else [list(p) for p in self.left],
                "T": None if math.isinf(self.T) else self.T}

    def validate(self, times: Sequence[float], s_l=None, s_r=None, R0=None, r0=None,
                 barrier: Optional[SupersolutionBarrier] = None, slack: float = 1e-8):
        """Raise :class:`ScheduleInvalid` if the schedule is slower than the
        measured minimal interfaces or leaves the barrier support."""
        times = np.asarray(times, dtype=float)
        xr = self.xi_r(times)
        if R0 is not None and self.xi_r(0.0) < R0 - slack:
            raise ScheduleInvalid("xi_r(0) lies inside the initial support", xi_r0=float(self.xi_r(0.0)), R0=R0)
        if self.left is not None and r0 is not None and self.xi_l(0.0) > r0 + slack:
            raise ScheduleInvalid("xi_l(0) lies inside the initial support")
        if s_r is not None:
            s_r = np.asarray(s_r, dtype=float)
            if np.any(np.diff(xr) < np.diff(s_r) - slack):
                raise ScheduleInvalid("right interface slower than the minimal solution")
        if self.left is not None and s_l is not None:
            xl = self.xi_l(times)
            if np.any(-np.diff(xl) < -np.diff(np.asarray(s_l, dtype=float)) - slack):
                raise ScheduleInvalid("left interface slower than the minimal solution")
        if barrier is not None:
            for t, x in zip(times, xr):
                if t >= barrier.T or not x < barrier.support_radius(t):
                    raise ScheduleInvalid("schedule leaves the barrier support", t=float(t))
                if self.left is not None and not -self.xi_l(t) < barrier.support_radius(t):
                    raise ScheduleInvalid("schedule leaves the barrier support", t=float(t))


@dataclass
class PrescribedReport:
    trajectory: Trajectory
    partition: list
    target_right: list
    measured_right: list
    target_left: list
    measured_left: list
    jumps_right: list
    jumps_left: list
    max_match_error: float
    barrier_margin: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"partition": self.partition, "target_right": self.target_right,
                "measured_right": self.measured_right, "target_left": self.target_left,
                "measured_left": self.measured_left, "jumps_right": self.jumps_right,
                "jumps_left": self.jumps_left, "max_match_error": self.max_match_error,
                "barrier_margin": self.barrier_margin, "meta": self.meta,
                "status": self.trajectory.status.value}


def prescribed_interface_solution(u0: Field, params: Params, schedule: InterfaceSchedule,
                                  n: int, t: float, eps_fraction: float = 1.0 / 128,
                                  k: Optional[int] = None, cfg: Optional[StepperConfig] = None,
                                  barrier: Optional[SupersolutionBarrier] = None,
                                  threshold: Optional[float] = None,
                                  min_jump: Optional[float] = None) -> PrescribedReport:
    """n-th approximant of the solution with interfaces xi_l, xi_r on [0, t].

    At each partition node t_j = j t / n the support edges are moved to the
    prescribed positions by a fundamental extension with eps equal to
    ``eps_fraction`` times the current maximum, then the (P_k) problem is
    solved on [t_j, t_{j+1}]. Jumps shorter than ``min_jump`` (default h/2)
    are below grid resolution and skipped. The measured edges just before
    each jump are the interface-match diagnostics.
    """
    cfg = cfg or StepperConfig()
    grid = u0.grid
    x = grid.x
    h = grid.h
    radial = grid.kind == "radial"
    k = resolved_k_max(params, h) if k is None else k
    reaction = RegularizedReaction(params, k)
    thr = 1e-10 * u0.sup if threshold is None else threshold
    min_jump = 0.5 * h if min_jump is None else min_jump
    part = [j * t / n for j in range(n + 1)]

    def edges(v):
        iv = support_edges(x, v, thr, radial)
        if iv is None:
            raise ScheduleInvalid("solution vanished")
        return iv

    def jump(v, tj):
        l_now, r_now = edges(v)
        rj = float(schedule.xi_r(tj)) - r_now
        if rj < -2 * h:
            raise ScheduleInvalid("right interface already beyond the schedule", t=tj,
                                  edge=r_now, target=float(schedule.xi_r(tj)))
        eps = eps_fraction * float(np.max(v))
        out = v
        jr = rj if rj >= min_jump else 0.0
        if jr > 0:
            out = _extend_right(x, out, jr, eps, R0=r_now)
        jl = 0.0
        if schedule.left is not None and not radial:
            lj = l_now - float(schedule.xi_l(tj))
            if lj < -2 * h:
                raise ScheduleInvalid("left interface already beyond the schedule", t=tj)
            jl = lj if lj >= min_jump else 0.0
            if jl > 0:
                out = _extend_right(-x[::-1], out[::-1], jl, eps, R0=-l_now)[::-1]
        if np.any(out < v):
            raise LabError("jump decreased the field")
        return out, jr, jl, l_now, r_now

    v = np.array(u0.values, dtype=float)
    snaps, ifaces = [], []
    meas_r, meas_l, jumps_r, jumps_l = [], [], [], []
    status = Status.COMPLETED
    dom = None
    for j in range(n + 1):
        tj = part[j]
        if j == n:
            l_now, r_now = edges(v)
            meas_r.append(r_now)
            meas_l.append(l_now)
            snaps.append(Field(grid, tj, v))
            ifaces.append(support_edges(x, v, thr, radial))
            break
        v, jr, jl, l_now, r_now = jump(v, tj)
        meas_r.append(r_now)
        meas_l.append(l_now)
        jumps_r.append(jr)
        jumps_l.append(jl)
        snaps.append(Field(grid, tj, v))
        ifaces.append(support_edges(x, v, thr, radial))
        seg = solve_cauchy(Field(grid, tj, v), reaction, cfg, part[j + 1], [part[j + 1]],
                           params=params, track_threshold=thr)
        if seg.status is not Status.COMPLETED:
            status = seg.status
            break
        v = np.array(seg.snapshots[-1].values)
        if barrier is not None and part[j + 1] < barrier.T:
            pos = v > 0
            if np.any(pos):
                gap = float(np.min(barrier(x[pos], part[j + 1]) - v[pos]))
                dom = gap if dom is None else min(dom, gap)

    # partition nodes t_1..t_n: edge measured before the jump
    tr_ = [float(schedule.xi_r(s)) for s in part[:len(meas_r)]]
    tl_ = [None if schedule.left is None else float(schedule.xi_l(s)) for s in part[:len(meas_l)]]
    errs = [abs(a - b) for a, b in zip(meas_r[1:], tr_[1:])]
    if schedule.left is not None and not radial:
        errs += [abs(a - b) for a, b in zip(meas_l[1:], tl_[1:])]
    traj = Trajectory(params, snaps, ifaces, status=status,
                      diagnostics={"track_threshold": thr, "k": k, "n": n},
                      reaction=reaction)
    return PrescribedReport(traj, part, tr_, meas_r, tl_, meas_l, jumps_r, jumps_l,
                            max(errs) if errs else 0.0, dom,
                            {"h": h, "eps_fraction": eps_fraction, "k": k})
