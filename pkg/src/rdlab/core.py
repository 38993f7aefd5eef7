"""Shared value types, derived constants and closed-form reference solutions.

Everything here is an immutable value (frozen dataclasses, read-only arrays),
so it can be handed to worker processes without copying concerns.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

REGIME_TOL = 1e-12


class LabError(Exception):
    """Base error. ``code`` is the machine-readable tag written to error JSON."""

    code = "LAB_ERROR"

    def __init__(self, message: str = "", **info: Any):
        super().__init__(message or self.code)
        self.info = info


class ParamsError(LabError, ValueError):
    code = "PARAMS_INVALID"


class GridError(LabError, ValueError):
    code = "GRID_INVALID"


class Regime(enum.Enum):
    SLOW = "slow"  # m + p > 2, finite speed
    CRITICAL = "critical"  # m + p = 2, finite speed
    FAST = "fast"  # m + p < 2, infinite speed


@dataclass(frozen=True)
class Params:
    m: float
    p: float
    sigma: float = 0.0
    dim: int = 1

    def __post_init__(self):
        for name in ("m", "p", "sigma"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ParamsError(f"{name} must be a finite real, got {v!r}")
        if not self.m > 1:
            raise ParamsError(f"m must be > 1, got {self.m}")
        if not 0 < self.p < 1:
            raise ParamsError(f"p must lie in (0, 1), got {self.p}")
        if not self.sigma >= 0:
            raise ParamsError(f"sigma must be >= 0, got {self.sigma}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ParamsError(f"dim must be an integer >= 1, got {self.dim}")
        object.__setattr__(self, "m", float(self.m))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def regime(self) -> Regime:
        s = self.m + self.p - 2.0
        if abs(s) <= REGIME_TOL:
            return Regime.CRITICAL
        return Regime.SLOW if s > 0 else Regime.FAST

    @property
    def sigma_threshold(self) -> float:
        """Weight exponent 2(1-p)/(m-1) at which L changes sign."""
        return 2.0 * (1.0 - self.p) / (self.m - 1.0)

    def replace(self, **changes) -> "Params":
        d = asdict(self)
        d.update(changes)
        return Params(**d)

    def to_dict(self) -> dict:
        return {"m": self.m, "p": self.p, "sigma": self.sigma, "dim": self.dim,
                "regime": self.regime.value}

    @classmethod
    def from_dict(cls, d: dict) -> "Params":
        return cls(m=d["m"], p=d["p"], sigma=d.get("sigma", 0.0), dim=d.get("dim", 1))


def _pow(base: float, expo: float) -> float:
    # log-domain power for positive bases and non-integer exponents
    if float(expo).is_integer():
        return float(base) ** int(expo)
    return math.exp(expo * math.log(base))


@dataclass(frozen=True)
class DerivedConstants:
    L: float
    alpha: Optional[float]
    beta: Optional[float]
    gamma: float
    K_abe: float
    K_mp: float

    def to_dict(self) -> dict:
        return asdict(self)


def derive_constants(params: Params) -> DerivedConstants:
    m, p, s, n = params.m, params.p, params.sigma, params.dim
    L = s * (m - 1.0) + 2.0 * (p - 1.0)
    if abs(L) <= 1e-14:
        alpha = beta = None
    else:
        alpha = (s + 2.0) / L
        beta = (m - p) / L
    gamma = (m - p) / (2.0 * (1.0 - p))
    K_abe = n / (n * (m - 1.0) + 2.0)
    K_mp = m * _pow((m - 1.0) / m, (m + p - 2.0) / (m - 1.0))
    return DerivedConstants(L=L, alpha=alpha, beta=beta, gamma=gamma, K_abe=K_abe, K_mp=K_mp)


# --------------------------------------------------------------------------
# closed-form oracles


def reaction_oracle(u0, p: float, t):
    """Maximal solution of u' = u**p through u0 at time t."""
    u0 = np.asarray(u0, dtype=float)
    t = np.asarray(t, dtype=float)
    out = (u0 ** (1.0 - p) + (1.0 - p) * t) ** (1.0 / (1.0 - p))
    return float(out) if out.ndim == 0 else out


def barenblatt(params: Params, mass_const: float, x, t: float):
    """Source-type solution of u_t = Δu^m (weight and reaction ignored).

    ``x`` is a coordinate (line) or radius (radial); the solution is radial
    in ``params.dim`` dimensions.
    """
    if t <= 0:
        raise ValueError("barenblatt requires t > 0")
    m, n = params.m, params.dim
    k = n / (n * (m - 1.0) + 2.0)
    kappa = (m - 1.0) * k / (2.0 * m * n)
    x = np.asarray(x, dtype=float)
    core = mass_const - kappa * x * x * t ** (-2.0 * k / n)
    out = t ** (-k) * np.maximum(core, 0.0) ** (1.0 / (m - 1.0))
    return float(out) if out.ndim == 0 else out


def barenblatt_radius(params: Params, mass_const: float, t: float) -> float:
    m, n = params.m, params.dim
    k = n / (n * (m - 1.0) + 2.0)
    kappa = (m - 1.0) * k / (2.0 * m * n)
    return math.sqrt(mass_const / kappa) * t ** (k / n)


def u_bar_subsolution(params: Params, x, t):
    """Explicit solution of the pure reaction equation u_t = (1+|x|)^σ u^p from zero data."""
    p, s = params.p, params.sigma
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    coef = (1.0 / (1.0 - p)) ** (1.0 / (p - 1.0))
    out = coef * np.maximum(t, 0.0) ** (1.0 / (1.0 - p)) * (1.0 + np.abs(x)) ** (s / (1.0 - p))
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# grids, fields, trajectories


@dataclass(frozen=True)
class Grid:
    kind: str
    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if self.kind not in ("line", "radial"):
            raise GridError(f"unknown grid kind {self.kind!r}")
        if self.kind == "radial" and self.x_min != 0.0:
            raise GridError("radial grids start at r = 0")
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise GridError("n_cells must be a positive integer")
        if not self.x_max > self.x_min:
            raise GridError("x_max must exceed x_min")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @classmethod
    def line(cls, half_width: float, h: float) -> "Grid":
        n = int(round(2 * half_width / h))
        return cls("line", -n * h / 2, n * h / 2, n)

    @classmethod
    def radial(cls, radius: float, h: float) -> "Grid":
        n = int(round(radius / h))
        return cls("radial", 0.0, n * h, n)

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.h * np.arange(self.n_cells + 1)

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    def to_dict(self) -> dict:
        return {"kind": self.kind, "x_min": self.x_min, "x_max": self.x_max,
                "n_cells": self.n_cells, "h": self.h}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(d["kind"], float(d["x_min"]), float(d["x_max"]), int(d["n_cells"]))

    def quadrature_weights(self, dim: int = 1) -> np.ndarray:
        """Trapezoid weights; radial grids include the |S^{N-1}| r^{N-1} Jacobian."""
        w = np.full(self.n_nodes, self.h)
        w[0] *= 0.5
        w[-1] *= 0.5
        if self.kind == "radial":
            w = w * sphere_area(dim) * self.x ** (dim - 1)
        return w


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere in R^dim (2 for dim = 1)."""
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


@dataclass(frozen=True)
class Field:
    grid: Grid
    t: float
    values: np.ndarray
    blown_up: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_nodes,):
            raise GridError(f"values shape {v.shape} does not match grid ({self.grid.n_nodes},)")
        if not self.blown_up and not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        if np.any(v < 0):
            raise ValueError("field values must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def sup(self) -> float:
        return float(np.max(self.values))

    def with_values(self, values, t: Optional[float] = None) -> "Field":
        return Field(self.grid, self.t if t is None else t, values)


def support_edges(x: np.ndarray, values: np.ndarray, threshold: float,
                  radial: bool = False):
    """Outermost threshold crossings, linearly interpolated between nodes.

    Returns ``(s_l, s_r)`` or ``None`` when no node exceeds the threshold.
    On radial grids ``s_l`` is reported as ``-s_r``.
    """
    idx = np.flatnonzero(values > threshold)
    if idx.size == 0:
        return None

    def crossing(i_in, i_out):
        a, b = values[i_in], values[i_out]
        w = (a - threshold) / (a - b) if a != b else 0.0
        return float(x[i_in] + w * (x[i_out] - x[i_in]))

    i, j = idx[0], idx[-1]
    s_r = crossing(j, j + 1) if j + 1 < len(x) else float(x[j])
    if radial:
        return (-s_r, s_r)
    s_l = crossing(i, i - 1) if i > 0 else float(x[i])
    return (s_l, s_r)


class Status(enum.Enum):
    COMPLETED = "completed"
    BLOWN_UP = "blown_up"
    DIVERGED = "diverged"


@dataclass
class Trajectory:
    params: Params
    snapshots: list
    interfaces: list
    status: Status = Status.COMPLETED
    t_blowup: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)
    reaction: Any = None  # the RegularizedReaction actually integrated (None: diffusion only)

    def __post_init__(self):
        ts = [s.t for s in self.snapshots]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("snapshot times must be strictly increasing")

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def grid(self) -> Grid:
        return self.snapshots[0].grid

    def values(self) -> np.ndarray:
        """(n_snapshots, n_nodes) array of nodal values."""
        return np.array([s.values for s in self.snapshots])

    def at(self, t: float) -> Field:
        """Snapshot closest to ``t``."""
        i = int(np.argmin(np.abs(self.times - t)))
        return self.snapshots[i]

    def summary(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "status": self.status.value,
            "t_blowup": self.t_blowup,
            "n_snapshots": len(self.snapshots),
            "t_final": float(self.snapshots[-1].t) if self.snapshots else None,
            "interfaces": [None if iv is None else list(iv) for iv in self.interfaces],
            "diagnostics": self.diagnostics,
        }


def tent(grid: Grid, radius: float = 1.0, height: float = 1.0, center: float = 0.0) -> Field:
    """Compactly supported tent ``height * (1 - |x - center|/radius)_+``."""
    v = height * np.maximum(1.0 - np.abs(grid.x - center) / radius, 0.0)
    return Field(grid, 0.0, v)


def bump(grid: Grid, radius: float = 1.0, height: float = 1.0, center: float = 0.0) -> Field:
    """Smooth compactly supported bump ``height * (1 - s^2)_+^2``."""
    s = (grid.x - center) / radius
    v = height * np.maximum(1.0 - s * s, 0.0) ** 2
    return Field(grid, 0.0, v)


def sequence_of_floats(xs: Sequence) -> list:
    return [float(v) for v in xs]
