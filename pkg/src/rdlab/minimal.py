"""Minimal solution as the monotone limit of the regularized problems (P_k).

Every run in a k-sweep uses one common fixed time step, chosen stable for the
largest k, so the discrete comparison principle applies across the sweep and
the nodewise monotonicity w_k <= w_{2k} is a meaningful check.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Field, LabError, Params, Trajectory
from .selfsim import SupersolutionBarrier, barrier_T0, build_barrier
from .solver import RegularizedReaction, StepperConfig, solve_cauchy, stable_dt

__all__ = [
    "MinimalSolveReport", "NoAdmissibleT0", "NotConverged", "choose_T0", "doubling_schedule",
    "k_sweep", "minimal_solution", "resolved_k_max", "support_radius",
]


class NoAdmissibleT0(LabError):
    code = "NO_ADMISSIBLE_T0"


class NotConverged(LabError):
    code = "NOT_CONVERGED"


def resolved_k_max(params: Params, h: float, cap: int = 2 ** 20) -> int:
    """Largest power of two whose regularization layer is resolved by the mesh.

    Below u = 1/k the front of a (P_k) solution has width of order
    k^{-(m-p)/2}; once that drops under h the scheme's positivity leak is
    amplified by the linear reaction k^{1-p} and the sweep reports spurious
    support growth. The bound is k^{(m-p)/2} h <= 1.
    """
    k = 1
    expo = 0.5 * (params.m - params.p)
    while 2 * k <= cap and (2.0 * k) ** expo * h <= 1.0:
        k *= 2
    return k


def doubling_schedule(k_max: int) -> list:
    ks = [1]
    while 2 * ks[-1] <= k_max:
        ks.append(2 * ks[-1])
    return ks


def support_radius(u0: Field) -> float:
    """Radius R of the smallest ball B(0, R) holding the support of the interpolant of u0."""
    pos = u0.values > 0
    if not np.any(pos):
        return 0.0
    # the piecewise-linear interpolant reaches zero one node past the last positive one
    return float(np.max(np.abs(u0.grid.x[pos])) + u0.grid.h)


def choose_T0(u0: Field, barrier: SupersolutionBarrier) -> float:
    """Largest lattice horizon T0 for which the barrier dominates u0 at t = 0."""
    A = u0.sup
    if A <= 0:
        A = np.finfo(float).tiny
    R = support_radius(u0)
    T0 = barrier_T0(barrier, A, R)
    if T0 is None:
        raise NoAdmissibleT0("barrier cannot dominate the initial data", A=A, R=R,
                             xi0=barrier.xi0)
    return T0


@dataclass
class MinimalSolveReport:
    k_schedule: list
    sup_gap: list
    T0: Optional[float]
    trajectory: Trajectory
    converged: bool
    tol: float
    monotonicity_margin: float
    domination_margin: Optional[float] = None
    domination_tol: Optional[float] = None
    dominated: Optional[bool] = None
    support_right: list = field(default_factory=list)
    dt_fixed: Optional[float] = None
    barrier: Optional[dict] = None
    trajectories: Optional[list] = None

    def to_dict(self) -> dict:
        return {
            "k_schedule": list(self.k_schedule),
            "sup_gap": list(self.sup_gap),
            "T0": self.T0,
            "converged": self.converged,
            "tol": self.tol,
            "monotonicity_margin": self.monotonicity_margin,
            "domination_margin": self.domination_margin,
            "domination_tol": self.domination_tol,
            "dominated": self.dominated,
            "support_right": list(self.support_right),
            "dt_fixed": self.dt_fixed,
            "barrier": self.barrier,
            "status": self.trajectory.status.value,
        }


def _run_one(args):
    u0, params, k, cfg, t_end, snaps = args
    return solve_cauchy(u0, RegularizedReaction(params, k), cfg, t_end, snaps, params=params)


def k_sweep(u0: Field, params: Params, ks: Sequence[int], cfg: StepperConfig, t_end: float,
            snapshot_times: Optional[Sequence[float]] = None, jobs: int = 1) -> list:
    """Independent (P_k) runs, one per k, in schedule order."""
    tasks = [(u0, params, k, cfg, t_end, snapshot_times) for k in ks]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one, tasks))
    return [_run_one(t) for t in tasks]


def common_dt(u0: Field, params: Params, k_max: int, cfg: StepperConfig, t_end: float,
              snapshot_times=None) -> float:
    """Fixed step stable for every k <= k_max, sized from a probe run at k_max."""
    probe = solve_cauchy(u0, RegularizedReaction(params, k_max), cfg, t_end, snapshot_times,
                         params=params)
    umax = 1.1 * max(float(np.max(probe.values())), u0.sup, 1e-300)
    dt = stable_dt(np.array([umax]), u0.grid, params, RegularizedReaction(params, k_max), cfg)
    return float(dt)


def minimal_solution(u0: Field, params: Params, k_max: Optional[int] = None,
                     tol: Optional[float] = None, t_end: Optional[float] = None,
                     barrier: Optional[SupersolutionBarrier] = None, check_barrier: bool = True,
                     cfg: Optional[StepperConfig] = None,
                     snapshot_times: Optional[Sequence[float]] = None, jobs: int = 1,
                     keep_all: bool = False, raise_on_failure: bool = False) -> MinimalSolveReport:
    """Doubling k-sweep toward M(u0), with monotonicity and barrier diagnostics.

    Parameters
    ----------
    k_max
        Largest k in the schedule 1, 2, 4, ...; defaults to the resolution limit
        :func:`resolved_k_max` of the grid.
    tol
        Convergence tolerance on the last sup-norm gap; default 1e-4 * ||u0||.
    t_end
        End of the run window, at most T0; defaults to T0 / 2 when a barrier is
        checked. Required when ``check_barrier`` is false.
    """
    cfg = cfg or StepperConfig()
    h = u0.grid.h
    if k_max is None:
        k_max = resolved_k_max(params, h)
    ks = doubling_schedule(k_max)
    unorm = u0.sup
    tol = 1e-4 * unorm if tol is None else tol

    T0 = None
    if check_barrier and unorm > 0:
        if barrier is None:
            barrier = build_barrier(params, A=unorm, R=support_radius(u0))
        T0 = choose_T0(u0, barrier)
        barrier.T = T0
        if t_end is None:
            t_end = 0.5 * T0
        elif t_end > T0:
            raise NoAdmissibleT0("t_end exceeds the admissible horizon", t_end=t_end, T0=T0)
    if t_end is None:
        if unorm > 0:
            raise LabError("t_end is required without a barrier")
        t_end = 1.0
    if snapshot_times is None:
        snapshot_times = np.linspace(0.0, t_end, 17)[1:]

    if cfg.dt_fixed is None and unorm > 0:
        dt = common_dt(u0, params, ks[-1], cfg, t_end, snapshot_times)
        cfg = cfg.replace(dt_fixed=dt)
    trajs = k_sweep(u0, params, ks, cfg, t_end, snapshot_times, jobs=jobs)

    gaps = []
    mono = math.inf
    for a, b in zip(trajs, trajs[1:]):
        n = min(len(a.snapshots), len(b.snapshots))
        va, vb = a.values()[:n], b.values()[:n]
        gaps.append(float(np.max(np.abs(vb - va))))
        mono = min(mono, float(np.min(vb - va)))
    if not gaps:
        mono = 0.0
    converged = (unorm == 0) or (bool(gaps) and gaps[-1] <= tol)

    support_right = []
    for tr in trajs:
        iv = tr.interfaces[-1]
        support_right.append(None if iv is None else iv[1])

    dom = dom_tol = dominated = None
    if check_barrier and barrier is not None and T0 is not None:
        dom = math.inf
        x = u0.grid.x
        for tr in trajs:
            for snap in tr.snapshots:
                if snap.t >= T0:
                    continue
                pos = snap.values > 0
                if np.any(pos):
                    gap = barrier(x[pos], snap.t, T0) - snap.values[pos]
                    dom = min(dom, float(np.min(gap)))
        dom = None if math.isinf(dom) else dom
        dom_tol = 1e-8 + h * unorm
        dominated = dom is None or dom >= -dom_tol

    report = MinimalSolveReport(
        k_schedule=ks, sup_gap=gaps, T0=T0, trajectory=trajs[-1], converged=converged,
        tol=tol, monotonicity_margin=mono, domination_margin=dom, domination_tol=dom_tol,
        dominated=dominated, support_right=support_right, dt_fixed=cfg.dt_fixed,
        barrier=None if barrier is None else barrier.describe(),
        trajectories=trajs if keep_all else None)
    if raise_on_failure and not converged:
        raise NotConverged("sup gap above tolerance", gap=gaps[-1] if gaps else None, tol=tol)
    return report
