"""Finite-difference time stepping for the regularized Cauchy problems (P_k).

Diffusion is discretized in conservative flux form on w = u**m, so nothing is
ever divided by u and the free boundary needs no special treatment. The
default explicit scheme is Heun's method (SSP-RK2): each stage is a monotone
forward-Euler step under the CFL bound, so discrete comparison survives.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .core import Field, Grid, LabError, Params, Status, Trajectory, support_edges

UNREGULARIZED = None


class BlowUp(LabError):
    code = "BLOWUP"


class Instability(LabError):
    code = "INSTABILITY"


class DomainTooSmall(LabError):
    code = "DOMAIN_TOO_SMALL"


class StepperConfigError(LabError, ValueError):
    code = "CONFIG_INVALID"


@dataclass(frozen=True)
class RegularizedReaction:
    """min{(1+|x|)^σ, k} f_k(w) with f_k linear below 1/k; ``k=None`` means plain (1+|x|)^σ w^p."""

    params: Params
    k: Optional[float] = UNREGULARIZED

    def __post_init__(self):
        if self.k is not None and not self.k >= 1:
            raise StepperConfigError(f"k must be >= 1, got {self.k}")

    @property
    def regularized(self) -> bool:
        return self.k is not None

    def weight(self, x: np.ndarray) -> np.ndarray:
        w = (1.0 + np.abs(x)) ** self.params.sigma
        return w if self.k is None else np.minimum(w, self.k)

    def f(self, w: np.ndarray) -> np.ndarray:
        p = self.params.p
        w = np.maximum(w, 0.0)
        if self.k is None:
            return w ** p
        k = float(self.k)
        return np.where(w <= 1.0 / k, k ** (1.0 - p) * w, w ** p)

    def evaluate(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        return self.weight(x) * self.f(w)

    def lipschitz(self, x: np.ndarray) -> float:
        """Lipschitz constant in w over the grid (inf when unregularized)."""
        if self.k is None:
            return math.inf
        return float(np.max(self.weight(x))) * float(self.k) ** (1.0 - self.params.p)

    def to_dict(self) -> dict:
        return {"k": self.k, "sigma": self.params.sigma, "p": self.params.p}


@dataclass(frozen=True)
class StepperConfig:
    scheme: str = "explicit"
    cfl_safety: float = 0.9
    dt_max: float = 1e-2
    dt_fixed: Optional[float] = None
    blowup_threshold: float = math.inf
    blowup_factor: float = 1e6
    diffusion: bool = True
    boundary: str = "dirichlet"
    boundary_guard: bool = True
    guard_threshold: float = 0.0
    guard_cells: int = 2

    def __post_init__(self):
        if self.scheme not in ("explicit", "semi_implicit"):
            raise StepperConfigError(f"unknown scheme {self.scheme!r}")
        if self.boundary not in ("dirichlet", "neumann"):
            raise StepperConfigError(f"unknown boundary condition {self.boundary!r}")
        if not 0 < self.cfl_safety <= 1:
            raise StepperConfigError("cfl_safety must lie in (0, 1]")
        if not self.dt_max > 0:
            raise StepperConfigError("dt_max must be positive")
        if self.dt_fixed is not None and not self.dt_fixed > 0:
            raise StepperConfigError("dt_fixed must be positive")
        if not self.blowup_factor > 0:
            raise StepperConfigError("blowup_factor must be positive")

    def replace(self, **changes) -> "StepperConfig":
        d = asdict(self)
        d.update(changes)
        return StepperConfig(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["blowup_threshold"] = None if math.isinf(self.blowup_threshold) else self.blowup_threshold
        return d


# --------------------------------------------------------------------------
# spatial operator


class _Operator:
    """Finite-volume Laplacian coefficients for a grid: lap_i = (F_{i+1/2} - F_{i-1/2}) / vol_i."""

    def __init__(self, grid: Grid, dim: int):
        if grid.n_cells < 3:
            raise StepperConfigError("grid needs at least 3 cells")
        h = grid.h
        n = grid.n_nodes
        if grid.kind == "line":
            self.area = np.ones(n - 1)
            self.vol = np.full(n, h)
            self.vol[0] = self.vol[-1] = 0.5 * h  # half cells: second-order zero-flux ends
            self.center_coef = 2.0
        else:
            r = grid.x
            rf = r[:-1] + 0.5 * h  # faces i+1/2
            self.area = rf ** (dim - 1)
            lo = np.concatenate(([0.0], rf))
            hi = np.concatenate((rf, [r[-1]]))
            self.vol = (hi ** dim - lo ** dim) / dim
            self.vol[-1] = max(self.vol[-1], 1e-300)
            self.center_coef = 2.0 * dim
        self.h = h
        self.kind = grid.kind
        # lap = up * (w[i+1]-w[i]) - dn * (w[i]-w[i-1])
        self.up = np.zeros(n)
        self.dn = np.zeros(n)
        self.up[:-1] = self.area / (h * self.vol[:-1])
        self.dn[1:] = self.area / (h * self.vol[1:])

    def apply(self, w: np.ndarray) -> np.ndarray:
        flux = self.area * np.diff(w) / self.h
        out = np.zeros_like(w)
        out[:-1] += flux
        out[1:] -= flux
        return out / self.vol

    def max_diag(self) -> float:
        return float(np.max(self.up + self.dn))


_OPERATORS: dict = {}


def _operator(grid: Grid, dim: int) -> _Operator:
    key = (grid, dim)
    op = _OPERATORS.get(key)
    if op is None:
        if len(_OPERATORS) > 64:
            _OPERATORS.clear()
        op = _OPERATORS[key] = _Operator(grid, dim)
    return op


def laplacian_pme(field: Field, params: Params, m: Optional[float] = None) -> np.ndarray:
    """Discrete Δ(u^m) at every node.

    Line grids use the three-point stencil; radial grids use the conservative
    flux form with r^{N-1} face areas, which reduces to 2N(w_1 - w_0)/h^2 at
    the origin. End nodes carry the zero-flux (half-cell) value; under
    Dirichlet conditions they are boundary nodes and should be ignored.
    ``m`` overrides the diffusion exponent (``m=1`` gives Δu).
    """
    expo = params.m if m is None else m
    op = _operator(field.grid, params.dim if field.grid.kind == "radial" else 1)
    w = np.asarray(field.values, dtype=float) ** expo
    out = op.apply(w)
    return out


# --------------------------------------------------------------------------
# time stepping


def stable_dt(u: np.ndarray, grid: Grid, params: Params, reaction, cfg: StepperConfig) -> float:
    """Largest forward-Euler step keeping the scheme monotone, times ``cfg.cfl_safety``."""
    dim = params.dim if grid.kind == "radial" else 1
    umax = float(np.max(u)) if u.size else 0.0
    rate = 0.0
    if cfg.diffusion and cfg.scheme == "explicit":
        rate += _operator(grid, dim).max_diag() * params.m * umax ** (params.m - 1.0)
    if reaction is not None:
        lip = reaction.lipschitz(grid.x)
        if math.isinf(lip):
            # non-Lipschitz: limit the relative growth of the largest values instead
            wmax = float(np.max(reaction.weight(grid.x)))
            lip = wmax * umax ** (params.p - 1.0) if umax > 0 else 0.0
        rate += lip
    if rate <= 0:
        return cfg.dt_max
    return min(cfg.dt_max, cfg.cfl_safety / rate)


def _rhs(u, grid, params, reaction, cfg, op, x):
    out = np.zeros_like(u)
    if cfg.diffusion:
        out += op.apply(u ** params.m)
    if reaction is not None:
        out += reaction.evaluate(x, u)
    return out


def _dirichlet(u, grid):
    u[-1] = 0.0
    if grid.kind == "line":
        u[0] = 0.0
    return u


def _euler(u, dt, grid, params, reaction, cfg, op, x, clamp):
    v = u + dt * _rhs(u, grid, params, reaction, cfg, op, x)
    neg = v < 0
    if np.any(neg):
        clamp[0] += float(-np.sum(v[neg]))
        v[neg] = 0.0
    if cfg.diffusion and cfg.boundary == "dirichlet":
        _dirichlet(v, grid)
    return v


def _semi_implicit(u, dt, grid, params, reaction, cfg, op, x, clamp):
    # (I - dt L a^n) u^{n+1} = u^n + dt R(u^n), a^n = (u^n)^{m-1}
    rhs = u.copy()
    if reaction is not None:
        rhs += dt * reaction.evaluate(x, u)
    if not cfg.diffusion:
        return rhs
    a = u ** (params.m - 1.0)
    n = u.size
    ab = np.zeros((3, n))
    ab[1] = 1.0 + dt * (op.up + op.dn) * a
    ab[0, 1:] = -dt * op.up[:-1] * a[1:]
    ab[2, :-1] = -dt * op.dn[1:] * a[:-1]
    if cfg.boundary == "dirichlet":
        ab[1, -1] = 1.0
        ab[2, -2] = 0.0
        rhs[-1] = 0.0
        if grid.kind == "line":
            ab[1, 0] = 1.0
            ab[0, 1] = 0.0
            rhs[0] = 0.0
    v = solve_banded((1, 1), ab, rhs, check_finite=False)
    neg = v < 0
    if np.any(neg):
        clamp[0] += float(-np.sum(v[neg]))
        v[neg] = 0.0
    return v


def _advance(u, dt, grid, params, reaction, cfg, clamp):
    dim = params.dim if grid.kind == "radial" else 1
    op = _operator(grid, dim)
    x = grid.x
    if cfg.scheme == "semi_implicit":
        return _semi_implicit(u, dt, grid, params, reaction, cfg, op, x, clamp)
    u1 = _euler(u, dt, grid, params, reaction, cfg, op, x, clamp)
    u2 = _euler(u1, dt, grid, params, reaction, cfg, op, x, clamp)
    return 0.5 * (u + u2)


def blowup_limit(u0: np.ndarray, cfg: StepperConfig) -> float:
    """Sup-norm level treated as blow-up: the absolute threshold or
    ``blowup_factor`` times the initial sup, whichever is lower."""
    unorm = float(np.max(u0)) if u0.size else 0.0
    rel = cfg.blowup_factor * unorm if unorm > 0 else math.inf
    return min(cfg.blowup_threshold, rel)


def _check(u: np.ndarray, t: float, limit: float):
    if not np.all(np.isfinite(u)):
        raise Instability("non-finite values", t=t)
    if float(np.max(u)) > limit:
        raise BlowUp("blow-up threshold exceeded", t=t)


def step(field: Field, reaction: Optional[RegularizedReaction], cfg: StepperConfig,
         dt: float, params: Optional[Params] = None) -> Field:
    """One step of size ``dt``; ``reaction=None`` switches the reaction off."""
    if params is None:
        if reaction is None:
            raise StepperConfigError("params are required when the reaction is off")
        params = reaction.params
    clamp = [0.0]
    u = _advance(np.array(field.values, dtype=float), dt, field.grid, params, reaction, cfg, clamp)
    _check(u, field.t + dt, blowup_limit(field.values, cfg))
    return Field(field.grid, field.t + dt, u)


def solve_cauchy(u0: Field, reaction: Optional[RegularizedReaction], cfg: StepperConfig,
                 t_end: float, snapshot_times: Optional[Sequence[float]] = None,
                 params: Optional[Params] = None, track_threshold: Optional[float] = None
                 ) -> Trajectory:
    """Integrate from ``u0`` to ``t_end``, storing snapshots at the requested times.

    Steps are shortened so that every snapshot time is hit exactly. Blow-up
    and instability end the run early with the corresponding status; the
    boundary guard raises :class:`DomainTooSmall` when the support reaches the
    last ``cfg.guard_cells`` nodes.
    """
    if params is None:
        if reaction is None:
            raise StepperConfigError("params are required when the reaction is off")
        params = reaction.params
    grid = u0.grid
    t0 = float(u0.t)
    if snapshot_times is None:
        snapshot_times = np.linspace(t0, t_end, 17)[1:]
    targets = sorted({float(s) for s in snapshot_times if t0 < s <= t_end + 1e-14} | {float(t_end)})
    unorm = float(np.max(u0.values)) if u0.values.size else 0.0
    thr = track_threshold if track_threshold is not None else 1e-10 * max(unorm, 1e-300)
    guard_thr = cfg.guard_threshold if cfg.guard_threshold > 0 else thr
    limit = blowup_limit(u0.values, cfg)
    radial = grid.kind == "radial"

    u = np.array(u0.values, dtype=float)
    t = t0
    snaps = [Field(grid, t0, u)]
    ifaces = [support_edges(grid.x, u, thr, radial)]
    clamp = [0.0]
    n_steps = 0
    dt_min = math.inf
    dt_used = 0.0
    status = Status.COMPLETED
    t_blow = None

    def guard(v, tt):
        if not (cfg.boundary_guard and cfg.diffusion and cfg.boundary == "dirichlet"):
            return
        g = cfg.guard_cells
        hit = np.any(v[-g - 1:] > guard_thr)
        if not radial:
            hit = hit or np.any(v[:g + 1] > guard_thr)
        if hit:
            raise DomainTooSmall("support reached the computational boundary", t=tt)

    try:
        for target in targets:
            while t < target - 1e-14 * max(1.0, abs(target)):
                if cfg.dt_fixed is not None:
                    dt = cfg.dt_fixed
                else:
                    dt = stable_dt(u, grid, params, reaction, cfg)
                if t + dt > target or target - (t + dt) < 1e-12 * max(dt, 1.0):
                    dt = target - t
                u = _advance(u, dt, grid, params, reaction, cfg, clamp)
                t = target if dt == target - t else t + dt
                n_steps += 1
                dt_min = min(dt_min, dt)
                dt_used = max(dt_used, dt)
                _check(u, t, limit)
                guard(u, t)
            snaps.append(Field(grid, t, u.copy()))
            ifaces.append(support_edges(grid.x, u, thr, radial))
    except BlowUp as exc:
        status = Status.BLOWN_UP
        t_blow = float(exc.info.get("t", t))
    except Instability:
        status = Status.DIVERGED

    diag = {"n_steps": n_steps, "dt_min": None if math.isinf(dt_min) else dt_min,
            "dt_max_used": dt_used,
            "clamped_mass": clamp[0], "track_threshold": thr,
            "blowup_limit": None if math.isinf(limit) else limit,
            "scheme": cfg.scheme, "k": None if reaction is None else reaction.k}
    return Trajectory(params=params, snapshots=snaps, interfaces=ifaces, status=status,
                      t_blowup=t_blow, diagnostics=diag, reaction=reaction)
