"""Post-hoc checks on trajectories: interfaces, propagation speed, pressure
estimates and the weak-formulation residual."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (Field, Grid, LabError, Params, Status, Trajectory, derive_constants,
                   sphere_area, support_edges)
from .minimal import doubling_schedule, resolved_k_max
from .solver import DomainTooSmall, RegularizedReaction, StepperConfig, _operator, solve_cauchy

__all__ = [
    "AbeReport", "InterfaceTrack", "SpeedReport", "SpeedVerdict", "SupportViolation",
    "TestFunction", "abe_check", "abe_distributional", "bump_battery", "classify_speed",
    "sample_trajectory", "track_interfaces", "weak_residual",
]


class SupportViolation(LabError):
    code = "SUPPORT_VIOLATION"


def _dim(grid: Grid, params: Params) -> int:
    return params.dim if grid.kind == "radial" else 1


def _default_threshold(traj: Trajectory) -> float:
    thr = traj.diagnostics.get("track_threshold") if traj.diagnostics else None
    if thr:
        return float(thr)
    return 1e-10 * max(traj.snapshots[0].sup, 1e-300)


def sample_trajectory(params: Params, grid: Grid, func: Callable, times: Sequence[float]) -> Trajectory:
    """Trajectory whose snapshots are ``func(x, t)`` sampled on ``grid``."""
    snaps = [Field(grid, float(t), np.asarray(func(grid.x, float(t)), dtype=float)) for t in times]
    thr = 1e-10 * max(max(s.sup for s in snaps), 1e-300)
    radial = grid.kind == "radial"
    ifaces = [support_edges(grid.x, s.values, thr, radial) for s in snaps]
    return Trajectory(params, snaps, ifaces, diagnostics={"track_threshold": thr, "dt_max_used": 0.0})


# --------------------------------------------------------------------------
# interfaces


@dataclass
class InterfaceTrack:
    times: np.ndarray
    s_l: list
    s_r: list
    everywhere_positive: list

    def to_rows(self):
        return [(t, l, r, int(e)) for t, l, r, e in
                zip(self.times, self.s_l, self.s_r, self.everywhere_positive)]


def track_interfaces(traj: Trajectory, threshold: Optional[float] = None,
                     window: Optional[float] = None) -> InterfaceTrack:
    """Support edges per snapshot, or NONE where the field is positive on the whole window.

    ``window`` is the half-width |x| <= X of the observation window; the
    default is the grid without its outermost node at each end.
    """
    thr = _default_threshold(traj) if threshold is None else threshold
    grid = traj.grid
    x = grid.x
    radial = grid.kind == "radial"
    if window is None:
        inside = np.zeros(x.size, dtype=bool)
        inside[(0 if radial else 1):-1] = True
    else:
        inside = np.abs(x) <= window
    s_l, s_r, pos = [], [], []
    for snap in traj.snapshots:
        v = snap.values
        everywhere = bool(np.any(inside)) and float(np.min(v[inside])) >= thr
        edges = None if everywhere else support_edges(x, v, thr, radial)
        s_l.append(None if edges is None else edges[0])
        s_r.append(None if edges is None else edges[1])
        pos.append(everywhere)
    return InterfaceTrack(traj.times, s_l, s_r, pos)


# --------------------------------------------------------------------------
# Aronson-Benilan estimates


def pressure(u: np.ndarray, m: float) -> np.ndarray:
    return (m / (m - 1.0)) * np.asarray(u, dtype=float) ** (m - 1.0)


def _interior(u: np.ndarray, thr: float, buffer: int, band: int, radial: bool) -> np.ndarray:
    pos = u > thr
    inner = pos.copy()
    for b in range(1, buffer + 1):
        inner[b:] &= pos[:-b]
        inner[:-b] &= pos[b:]
        if not radial:
            inner[:b] = False
        inner[-b:] = False
    inner[-max(band, 1):] = False
    if not radial:
        inner[:max(band, 1)] = False
    return inner


def theory_tag(params: Params) -> str:
    if params.sigma == 0:
        return "theorem"
    if params.dim >= 2:
        return "formal regime"
    return "no theoretical backing"


@dataclass
class AbeReport:
    times: list
    margins: list
    relative: list
    tolerances: list
    worst_margin: float
    worst_relative: float
    pass_: bool
    corollary_margin: Optional[float]
    corollary_relative: Optional[float]
    corollary_pass: Optional[bool]
    K: float
    tag: str
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.pass_

    def to_dict(self) -> dict:
        return {
            "K": self.K, "tag": self.tag, "pass": self.pass_,
            "worst_margin": self.worst_margin, "worst_relative": self.worst_relative,
            "corollary_margin": self.corollary_margin,
            "corollary_relative": self.corollary_relative,
            "corollary_pass": self.corollary_pass,
            "snapshots": [{"t": t, "margin": a, "relative": r, "tol": s}
                          for t, a, r, s in zip(self.times, self.margins, self.relative,
                                                self.tolerances)],
            "meta": self.meta,
        }

    def to_rows(self):
        return list(zip(self.times, self.margins, self.relative, self.tolerances))


def abe_check(traj: Trajectory, params: Optional[Params] = None, threshold: Optional[float] = None,
              buffer: int = 1, band: int = 1, t_window: Optional[Sequence[float]] = None,
              dt: Optional[float] = None) -> AbeReport:
    """Margins of Δ_h v + K/t on interior support nodes, and of u_t + K u/t.

    Interior nodes exceed the support threshold and have ``buffer`` such
    neighbours on each side; the outermost ``band`` nodes of the grid are never
    used. The tolerance at time t is 5 h max|∇_h v| + 2 dt/t^2, with dt the
    largest step the solver took. The corollary check uses centred
    differences between consecutive snapshots and the same relative slack.
    """
    params = params or traj.params
    grid = traj.grid
    radial = grid.kind == "radial"
    h = grid.h
    K = derive_constants(params).K_abe
    thr = _default_threshold(traj) if threshold is None else threshold
    if dt is None:
        dt = float(traj.diagnostics.get("dt_max_used", 0.0) or 0.0) if traj.diagnostics else 0.0
    op = _operator(grid, _dim(grid, params))
    lo, hi = (t_window if t_window is not None else (0.0, math.inf))

    times, margins, rels, tols, masks = [], [], [], [], []
    for snap in traj.snapshots:
        t = snap.t
        if t <= 0 or t < lo - 1e-12 or t > hi + 1e-12:
            continue
        u = snap.values
        inner = _interior(u, thr, buffer, band, radial)
        if not np.any(inner):
            continue
        v = pressure(u, params.m)
        lap = op.apply(v)
        grad = np.abs(np.diff(v)) / h
        gmask = inner[:-1] | inner[1:]
        gmax = float(np.max(grad[gmask])) if np.any(gmask) else 0.0
        tol = 5.0 * h * gmax + 2.0 * dt / t ** 2
        marg = float(np.min(lap[inner] + K / t))
        times.append(t)
        margins.append(marg)
        rels.append(marg / (K / t))
        tols.append(tol)
        masks.append(inner)

    ok = all(mg >= -tl for mg, tl in zip(margins, tols))
    worst = min(margins) if margins else math.nan
    worst_rel = min(rels) if rels else math.nan

    # corollary: u_t >= -K u / t, from consecutive snapshots
    cm = cr = None
    cpass = None
    snaps = [s for s in traj.snapshots if s.t > 0 and lo - 1e-12 <= s.t <= hi + 1e-12]
    if len(snaps) >= 2:
        cm, cr = math.inf, math.inf
        cpass = True
        for a, b in zip(snaps, snaps[1:]):
            tm = 0.5 * (a.t + b.t)
            ut = (b.values - a.values) / (b.t - a.t)
            um = 0.5 * (a.values + b.values)
            sel = _interior(np.minimum(a.values, b.values), thr, buffer, band, radial)
            if not np.any(sel):
                continue
            c = ut[sel] + K * um[sel] / tm
            rel = c / (K * um[sel] / tm)
            cm = min(cm, float(np.min(c)))
            cr = min(cr, float(np.min(rel)))
            j = int(np.argmin(np.abs(np.array(times) - tm))) if times else None
            slack = tols[j] / (K / tm) if j is not None else 0.0
            if float(np.min(rel)) < -slack:
                cpass = False
        if math.isinf(cm):
            cm = cr = None
            cpass = None

    meta = {"threshold": thr, "buffer": buffer, "band": band, "dt": dt, "h": h,
            "kind": grid.kind, "params": params.to_dict()}
    return AbeReport(times, margins, rels, tols, worst, worst_rel, ok and bool(margins),
                     cm, cr, cpass, K, theory_tag(params), meta)


# --------------------------------------------------------------------------
# test functions


def _bump(s):
    q = np.clip(1.0 - s * s, 0.0, None)
    return q ** 3


def _bump_d1(s):
    q = np.clip(1.0 - s * s, 0.0, None)
    return -6.0 * s * q ** 2


def _bump_d2(s):
    q = np.clip(1.0 - s * s, 0.0, None)
    return -6.0 * q ** 2 + 24.0 * s * s * q


@dataclass(frozen=True)
class TestFunction:
    """Separable bump eta(x, t) = scale B((x - c)/a) B((t - t_mid)/t_half), B(s) = (1 - s^2)_+^3.

    On radial grids x is r = |x| and the space factor must be smooth at the
    origin, so either ``center == 0`` or ``center >= radius``.
    """

    __test__ = False  # not a pytest class

    center: float
    radius: float
    t_a: float
    t_b: float
    scale: float = 1.0
    radial: bool = False
    dim: int = 1

    def __post_init__(self):
        if not self.radius > 0 or not self.t_b > self.t_a:
            raise ValueError("bump needs positive radius and t_b > t_a")
        if self.radial and not (self.center == 0 or self.center >= self.radius):
            raise ValueError("radial bump must be centred at 0 or vanish near the origin")

    def scaled(self, lam: float) -> "TestFunction":
        return TestFunction(self.center, self.radius, self.t_a, self.t_b, self.scale * lam,
                            self.radial, self.dim)

    def space(self, x):
        return _bump((np.asarray(x, dtype=float) - self.center) / self.radius)

    def space_lap(self, x):
        x = np.asarray(x, dtype=float)
        a = self.radius
        s = (x - self.center) / a
        out = _bump_d2(s) / a ** 2
        if self.radial and self.dim > 1:
            if self.center == 0:
                # B'(s)/(s a^2), regular at the origin
                q = np.clip(1.0 - s * s, 0.0, None)
                out = out + (self.dim - 1) * (-6.0 * q ** 2) / a ** 2
            else:
                r = np.where(x > 0, x, 1.0)
                out = out + np.where(x > 0, (self.dim - 1) * _bump_d1(s) / (a * r), 0.0)
        return out

    def time(self, t):
        mid, half = 0.5 * (self.t_a + self.t_b), 0.5 * (self.t_b - self.t_a)
        return _bump((np.asarray(t, dtype=float) - mid) / half)

    def time_dt(self, t):
        mid, half = 0.5 * (self.t_a + self.t_b), 0.5 * (self.t_b - self.t_a)
        return _bump_d1((np.asarray(t, dtype=float) - mid) / half) / half

    def eta(self, x, t):
        return self.scale * np.multiply.outer(self.time(t), self.space(x))

    def eta_t(self, x, t):
        return self.scale * np.multiply.outer(self.time_dt(t), self.space(x))

    def lap_eta(self, x, t):
        return self.scale * np.multiply.outer(self.time(t), self.space_lap(x))

    def to_dict(self) -> dict:
        return {"center": self.center, "radius": self.radius, "t_a": self.t_a, "t_b": self.t_b,
                "scale": self.scale, "radial": self.radial, "dim": self.dim}


def bump_battery(n: int, x_range: Sequence[float], t_range: Sequence[float], seed: int = 0,
                 radius_range: Sequence[float] = (0.2, 1.0), radial: bool = False,
                 dim: int = 1) -> list:
    """``n`` reproducible random bumps with space support inside ``x_range``
    and time support inside ``t_range``."""
    rng = np.random.default_rng(seed)
    out = []
    x0, x1 = x_range
    t0, t1 = t_range
    while len(out) < n:
        a = rng.uniform(*radius_range)
        if radial:
            c = 0.0 if rng.random() < 0.5 else rng.uniform(a, max(a, x1 - a))
        else:
            c = rng.uniform(x0 + a, x1 - a)
        if c + a > x1 or c - a < (0.0 if radial else x0):
            continue
        ta, tb = np.sort(rng.uniform(t0, t1, size=2))
        if tb - ta < 0.2 * (t1 - t0):
            continue
        out.append(TestFunction(float(c), float(a), float(ta), float(tb), 1.0, radial, dim))
    return out


def _check_support(traj: Trajectory, phi: TestFunction, t_end: Optional[float] = None):
    x = traj.grid.x
    h = traj.grid.h
    t = traj.times
    hi = t[-1] if t_end is None else t_end
    if phi.center + phi.radius > x[-1] - h or (
            traj.grid.kind == "line" and phi.center - phi.radius < x[0] + h):
        raise SupportViolation("test function touches the domain boundary", phi=phi.to_dict())
    if phi.t_a < t[0] or phi.t_b > hi:
        raise SupportViolation("test function time support leaves the run window",
                               phi=phi.to_dict())


def _time_weights(t: np.ndarray) -> np.ndarray:
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def abe_distributional(traj: Trajectory, phi: TestFunction, params: Optional[Params] = None,
                       laplacian: str = "discrete") -> float:
    """Quadrature of the double integral of v Δphi + (K/t) phi.

    ``laplacian="discrete"`` applies the solver's finite-volume Laplacian to
    the sampled phi and integrates with the control volumes, which is the
    summation-by-parts partner of the nodal check. ``"exact"`` uses the closed
    form of Δphi with trapezoid weights; its O(h^2) error carries a factor
    radius^-4 and swamps small bumps on coarse grids.
    """
    params = params or traj.params
    _check_support(traj, phi)
    grid = traj.grid
    dim = _dim(grid, params)
    K = derive_constants(params).K_abe
    t = traj.times
    keep = t > 0
    t = t[keep]
    u = traj.values()[keep]
    v = pressure(u, params.m)
    eta = phi.eta(grid.x, t)
    if laplacian == "discrete":
        op = _operator(grid, dim)
        lap = np.array([op.apply(row) for row in eta])
        wx = op.vol * (sphere_area(dim) if grid.kind == "radial" else 1.0)
    elif laplacian == "exact":
        lap = phi.lap_eta(grid.x, t)
        wx = grid.quadrature_weights(dim)
    else:
        raise ValueError(f"unknown laplacian mode {laplacian!r}")
    integrand = v * lap + (K / t)[:, None] * eta
    return float(_time_weights(t) @ (integrand @ wx))


def weak_residual(traj: Trajectory, eta: TestFunction, t: Optional[float] = None,
                  reaction: str = "solved", return_scale: bool = False):
    """Trapezoid quadrature of the double integral of u eta_t + u^m Δeta + R(u) eta.

    ``eta`` vanishes at both ends of its time support, so boundary terms drop
    out and the value is zero for an exact weak solution. ``reaction`` selects
    R: ``"solved"`` is the reaction the trajectory was integrated with (none
    for diffusion-only runs), ``"pure"`` is (1+|x|)^sigma u^p.
    """
    params = traj.params
    _check_support(traj, eta, t)
    grid = traj.grid
    ts = traj.times
    keep = ts <= (ts[-1] if t is None else t) + 1e-12
    ts = ts[keep]
    u = traj.values()[keep]
    x = grid.x
    if reaction == "solved":
        rx = traj.reaction
        R = None if rx is None else rx.evaluate(x, u)
    elif reaction == "pure":
        R = RegularizedReaction(params, None).evaluate(x, u)
    else:
        raise ValueError(f"unknown reaction mode {reaction!r}")
    terms = [u * eta.eta_t(x, ts), u ** params.m * eta.lap_eta(x, ts)]
    if R is not None:
        terms.append(R * eta.eta(x, ts))
    wx = grid.quadrature_weights(_dim(grid, params))
    wt = _time_weights(ts)
    total = float(wt @ (sum(terms) @ wx))
    if return_scale:
        scale = float(sum(wt @ (np.abs(tm) @ wx) for tm in terms))
        return total, scale
    return total


# --------------------------------------------------------------------------
# propagation speed


class SpeedVerdict(enum.Enum):
    FINITE = "finite"
    INFINITE = "infinite"
    INCONCLUSIVE = "inconclusive"


@dataclass
class SpeedReport:
    verdict: SpeedVerdict
    ks: list
    s_r: list
    min_inside: list
    X: float
    delta_t: float
    reason: str

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.value, "ks": self.ks, "s_r": self.s_r,
                "min_inside": self.min_inside, "X": self.X, "delta_t": self.delta_t,
                "reason": self.reason}


def classify_speed(params: Params, u0: Field, X: float, delta_t: float,
                   k_max: Optional[int] = None, cfg: Optional[StepperConfig] = None,
                   threshold: Optional[float] = None, stable_rel: float = 0.05) -> SpeedReport:
    """Finite or infinite propagation from a doubling k-sweep at time ``delta_t``.

    FINITE when s_r(delta_t) changes by less than ``stable_rel`` (relative)
    across the last two doublings and stays below X. INFINITE when s_r reaches
    X or u exceeds the threshold on all of |x| <= X. The sweep stops as soon
    as either INFINITE signature appears.
    """
    cfg = cfg or StepperConfig()
    grid = u0.grid
    if k_max is None:
        k_max = resolved_k_max(params, grid.h)
    thr = 1e-10 * max(u0.sup, 1e-300) if threshold is None else threshold
    x = grid.x
    inside = np.abs(x) <= X
    ks, srs, mins = [], [], []
    for k in doubling_schedule(k_max):
        try:
            tr = solve_cauchy(u0, RegularizedReaction(params, k), cfg, delta_t, [delta_t],
                              params=params, track_threshold=thr)
        except DomainTooSmall:
            ks.append(k)
            srs.append(float(np.max(np.abs(x))))
            mins.append(None)
            return SpeedReport(SpeedVerdict.INFINITE, ks, srs, mins, X, delta_t,
                               "support reached the computational boundary")
        if tr.status is not Status.COMPLETED:
            raise LabError("solver did not complete", status=tr.status.value, k=k)
        u = tr.snapshots[-1].values
        iv = tr.interfaces[-1]
        s = 0.0 if iv is None else max(abs(iv[0]), abs(iv[1]))
        ks.append(k)
        srs.append(s)
        mins.append(float(np.min(u[inside])))
        if s >= X:
            return SpeedReport(SpeedVerdict.INFINITE, ks, srs, mins, X, delta_t,
                               "support grew through X")
        if mins[-1] > thr:
            return SpeedReport(SpeedVerdict.INFINITE, ks, srs, mins, X, delta_t,
                               "positive on the whole window")
    if len(srs) >= 3 and srs[-1] > 0 and abs(srs[-1] - srs[-3]) / srs[-1] < stable_rel:
        return SpeedReport(SpeedVerdict.FINITE, ks, srs, mins, X, delta_t,
                           "support radius stabilized in k")
    return SpeedReport(SpeedVerdict.INCONCLUSIVE, ks, srs, mins, X, delta_t,
                       "support radius neither stabilized nor reached X")
