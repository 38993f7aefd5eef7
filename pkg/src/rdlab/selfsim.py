"""Self-similar profiles, interface classification and supersolution barriers.

Blow-up profiles solve

    (f^m)'' + (N-1)/xi (f^m)' - alpha f + beta xi f' + xi^sigma f^p = 0

and are integrated as a first-order system in (f, g) with g = (f^m)'. Shots
always start at the interface and run backward: forward integration toward
f = 0 is stiff and unreliable.

The profile of the absolute minimal solution E(x, t) = t^{1/(1-p)} phi(|x| t^-gamma)
solves (phi^m)'' + (N-1)/xi (phi^m)' + gamma xi phi' - phi/(1-p) + phi^p = 0.
"""
from __future__ import annotations

import enum
import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .core import LabError, Params, Regime, derive_constants

__all__ = [
    "InterfaceType", "Profile", "SupersolutionBarrier", "EProfile",
    "ode_rhs", "seed_coefficient", "shoot_from_interface", "shoot_symmetric_profile",
    "shoot_f1_center", "shoot_f2_singular", "singular_slope", "synthetic_profile", "build_barrier", "surrogate_params",
    "classify_interface", "compute_E_profile", "absolute_minimal_E", "profile_residual",
]

RTOL = 1e-11
ATOL = 1e-14
SEED_FRACTION = 1e-4
F2_START = 1e-4
F_CAP = 1e12
F_FLOOR = 1e-12


class Degenerate(LabError):
    code = "DEGENERATE"


class BlowupInXi(LabError):
    code = "BLOWUP_IN_XI"


class NegativeProfile(LabError):
    code = "NEGATIVE"


class TooFewPoints(LabError):
    code = "TOO_FEW_POINTS"


class NoCrossing(LabError):
    code = "NO_CROSSING"


class ProfileUnavailable(LabError):
    code = "PROFILE_UNAVAILABLE"


class SeedError(LabError):
    code = "NO_REAL_SEED"


class UndefinedExponents(LabError, ValueError):
    code = "L_NOT_POSITIVE"


class InterfaceType(enum.Enum):
    TYPE_I = "TypeI"
    TYPE_II = "TypeII"
    NONE = "none"
    INCONCLUSIVE = "inconclusive"


def _exponents(params: Params):
    c = derive_constants(params)
    if c.alpha is None or c.L <= 0:
        raise UndefinedExponents(f"blow-up profiles need L > 0 (L = {c.L:.6g})")
    return c.alpha, c.beta


def ode_rhs(params: Params, xi: float, f: float, g: float):
    """Right-hand side (f', g') of the blow-up profile system.

    Raises :class:`Degenerate` at f = 0, where f' = g / (m f^{m-1}) is undefined.
    """
    if f < 0:
        raise ValueError("f must be nonnegative")
    if f == 0:
        if g == 0:
            return 0.0, 0.0
        raise Degenerate("f = 0 with nonzero flux", xi=xi)
    alpha, beta = _exponents(params)
    if params.dim > 1 and xi <= 0:
        raise ValueError("xi must be positive for the radial term")
    return _profile_rhs(params.m, params.p, params.sigma, params.dim, alpha, beta)(xi, (f, g))


def _profile_rhs(m, p, sigma, dim, alpha, beta) -> Callable:
    def rhs(xi, y):
        f = max(y[0], 1e-300)
        g = y[1]
        fp = g / (m * f ** (m - 1.0))
        gp = alpha * f - beta * xi * fp - xi ** sigma * f ** p
        if dim > 1:
            gp -= (dim - 1) / xi * g
        return [fp, gp]
    return rhs


def _e_rhs(m, p, dim, gamma) -> Callable:
    def rhs(xi, y):
        f = max(y[0], 1e-300)
        g = y[1]
        fp = g / (m * f ** (m - 1.0))
        gp = f / (1.0 - p) - f ** p - gamma * xi * fp
        if dim > 1:
            gp -= (dim - 1) / xi * g
        return [fp, gp]
    return rhs


def seed_coefficient(m: float, p: float, transport: float, reaction: float, itype: InterfaceType):
    """Leading coefficient and exponent of f ~ c (xi0 - xi)^e at an interface.

    ``transport`` is the coefficient of xi f' at xi0 (beta xi0, or gamma rho0 for E)
    and ``reaction`` the coefficient of f^p there (xi0^sigma, or 1 for E).
    Type I balances diffusion against transport, Type II transport against
    reaction. When m + p = 2 all three terms share one power and c solves a
    quadratic; Type I takes the larger root.
    """
    if abs(m + p - 2.0) <= 1e-12:
        e = 1.0 / (m - 1.0)
        a2 = (1.0 + e) * e
        disc = (transport * e) ** 2 - 4.0 * a2 * reaction
        if disc < 0:
            raise SeedError("no real interface seed for m + p = 2 at this interface point")
        root = (transport * e + (1 if itype is InterfaceType.TYPE_I else -1) * math.sqrt(disc)) / (2 * a2)
        if root <= 0:
            raise SeedError("non-positive seed coefficient")
        return root ** e, e
    if itype is InterfaceType.TYPE_I:
        e = 1.0 / (m - 1.0)
        return (transport * (m - 1.0) / m) ** e, e
    if itype is InterfaceType.TYPE_II:
        e = 1.0 / (1.0 - p)
        return ((1.0 - p) * reaction / transport) ** e, e
    raise ValueError(f"cannot seed interface of type {itype}")


def _seed_state(m, c, e, d):
    f = c * d ** e
    fp = -c * e * d ** (e - 1.0)
    return f, m * f ** (m - 1.0) * fp


# --------------------------------------------------------------------------
# profiles


@dataclass
class Profile:
    """Self-similar profile on an increasing xi-mesh.

    ``g`` holds the flux (f^m)'. ``evaluate`` uses the integrator's dense
    output between mesh points and the interface expansion inside the seed
    gap; f is zero beyond ``xi0``.
    """

    params: Params
    xi: np.ndarray
    f: np.ndarray
    g: np.ndarray
    xi0: Optional[float]
    interface_type: InterfaceType
    kind: str
    converged: bool = True
    residual: Optional[float] = None
    meta: dict = field(default_factory=dict)
    _dense: Optional[Callable] = field(default=None, repr=False)
    _seed: Optional[tuple] = field(default=None, repr=False)

    @property
    def monotone(self) -> bool:
        """Strictly decreasing on the stored mesh (where f > 0)."""
        pos = self.f > 0
        return bool(np.all(np.diff(self.f[pos]) < 0))

    @property
    def flux_origin(self) -> float:
        return float(self.g[0])

    @property
    def f_origin(self) -> float:
        return float(self.f[0])

    def evaluate(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        out = np.zeros_like(xi)
        lo = self.xi[0]
        if self._dense is None:
            inside = (xi >= lo) & (xi <= self.xi[-1])
            out[inside] = np.interp(xi[inside], self.xi, self.f)
        else:
            hi = self.xi0 - self._seed[2] if self._seed is not None else self.xi[-1]
            inside = (xi >= lo) & (xi <= hi)
            if np.any(inside):
                out[inside] = self._dense(xi[inside])[0]
            if self._seed is not None:
                c, e, _ = self._seed
                gap = (xi > hi) & (xi < self.xi0)
                out[gap] = c * (self.xi0 - xi[gap]) ** e
        out = np.maximum(out, 0.0)
        out[xi < lo] = np.nan
        return out

    def __call__(self, xi):
        return self.evaluate(xi)

    def to_rows(self):
        return np.column_stack([self.xi, self.f, self.g])

    def header(self) -> dict:
        return {
            "params": self.params.to_dict(), "kind": self.kind,
            "xi0": self.xi0, "interface_type": self.interface_type.value,
            "converged": self.converged, "monotone": self.monotone,
            "residual": self.residual, "f_origin": self.f_origin,
            "flux_origin": self.flux_origin, **self.meta,
        }


def _events(floor=F_FLOOR, cap=F_CAP):
    def hit_zero(xi, y):
        return y[0] - floor
    hit_zero.terminal = True
    hit_zero.direction = -1

    def blow(xi, y):
        return y[0] - cap
    blow.terminal = True
    blow.direction = 1
    return [hit_zero, blow]


def _mesh_toward(xi0, d, xi_end, n_uniform=801, n_geo=200):
    """Uniform mesh on [xi_end, xi0-d] refined geometrically toward xi0."""
    base = np.linspace(xi_end, xi0 - d, n_uniform)
    near = xi0 - np.geomspace(d, max(0.5 * (xi0 - xi_end), 2 * d), n_geo)
    parts = [base, near[near >= xi_end]]
    if xi_end > 0:
        # singular end: geometric refinement toward xi_end
        parts.append(np.geomspace(xi_end, 0.5 * (xi0 + xi_end), n_geo))
    return np.unique(np.concatenate(parts))


def _run_backward(rhs, xi0, c, e, m, xi_end, delta=None):
    d = SEED_FRACTION * xi0 if delta is None else delta
    f, g = _seed_state(m, c, e, d)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sol = solve_ivp(rhs, [xi0 - d, xi_end], [f, g], method="DOP853", rtol=RTOL, atol=ATOL,
                        events=_events(), dense_output=True)
    status = "ok"
    if sol.status == 1:
        status = "zero" if sol.t_events[0].size else "blowup"
    elif sol.status < 0:
        # step-size collapse as f -> 0 at finite flux is a zero crossing in disguise
        status = "zero" if sol.y[0, -1] < 1e-3 * np.max(sol.y[0]) else "failed"
    return sol, status, d


def shoot_from_interface(params: Params, xi0: float, itype: InterfaceType = InterfaceType.TYPE_I,
                         xi_end: Optional[float] = None, raise_on_failure: bool = True) -> Profile:
    """Shoot the blow-up profile ODE backward from an interface at ``xi0``.

    For N = 1 the shot runs to xi = 0; for N >= 2 it stops at ``xi_end``
    (default ``F2_START``) because of the singular radial term.
    """
    if not xi0 > 0:
        raise ValueError("xi0 must be positive")
    alpha, beta = _exponents(params)
    m, p, s, n = params.m, params.p, params.sigma, params.dim
    if xi_end is None:
        xi_end = 0.0 if n == 1 else F2_START
    c, e = seed_coefficient(m, p, beta * xi0, xi0 ** s, itype)
    rhs = _profile_rhs(m, p, s, n, alpha, beta)
    sol, status, d = _run_backward(rhs, xi0, c, e, m, xi_end)
    end = float(sol.t[-1])
    if raise_on_failure and status == "zero":
        raise NegativeProfile("profile reached zero before the end point", xi=end)
    if raise_on_failure and status == "blowup":
        raise BlowupInXi("profile diverged before the end point", xi=end)
    if raise_on_failure and status == "failed":
        raise NegativeProfile(f"integration failed: {sol.message}", xi=end)
    mesh = _mesh_toward(xi0, d, end)
    y = sol.sol(mesh)
    xi = np.concatenate([mesh, [xi0]])
    f = np.concatenate([np.maximum(y[0], 0.0), [0.0]])
    g = np.concatenate([y[1], [0.0]])
    kind = "N1_decreasing" if n == 1 else "f2_branch"
    prof = Profile(params, xi, f, g, xi0, itype, kind, converged=(status == "ok"),
                   meta={"status": status, "seed_delta": d, "seed_c": c, "seed_exponent": e},
                   _dense=sol.sol, _seed=(c, e, d))
    return prof


def _origin_flux_sign(params, xi0, itype):
    """(sign, profile) of the origin flux; shots that die before the origin count as positive."""
    try:
        prof = shoot_from_interface(params, xi0, itype, raise_on_failure=False)
    except SeedError:
        return math.nan, None
    if prof.meta["status"] == "ok":
        return prof.flux_origin, prof
    if prof.meta["status"] == "zero":
        return math.inf, prof
    return math.nan, prof


def shoot_symmetric_profile(params: Params, xi0_range=(0.05, 20.0), n_lattice: int = 64,
                            itype: InterfaceType = InterfaceType.TYPE_I, flux_tol: float = 1e-6
                            ) -> Profile:
    """N = 1 profile with zero flux at the origin, by bisection over xi0.

    A lattice over ``xi0_range`` brackets a sign change of (f^m)'(0); shots
    that hit zero before the origin count as positive flux. ``converged`` is
    set when the final |(f^m)'(0)| <= ``flux_tol``; otherwise the profile with
    the smallest scale-free flux |g(0)| xi0 / f(0)^m is returned.
    """
    if params.dim != 1:
        raise ValueError("symmetric shooting is for N = 1")
    lattice = np.geomspace(xi0_range[0], xi0_range[1], n_lattice)
    vals = [_origin_flux_sign(params, x, itype)[0] for x in lattice]
    bracket = None
    for a, b, va, vb in zip(lattice, lattice[1:], vals, vals[1:]):
        if np.isfinite(va) and va < 0 and (vb > 0):
            bracket = (a, b)
            break
    if bracket is not None:
        a, b = bracket
        # plain bisection: the flux map is discontinuous where shots stop reaching the origin
        for _ in range(200):
            mid = 0.5 * (a + b)
            if mid in (a, b):
                break
            v, prof = _origin_flux_sign(params, mid, itype)
            if np.isfinite(v) and abs(v) <= 0.01 * flux_tol:
                a = b = mid
                break
            if np.isfinite(v) and v < 0:
                a = mid
            else:
                b = mid
        best = None
        for cand in (a, b):
            v, prof = _origin_flux_sign(params, cand, itype)
            if np.isfinite(v) and (best is None or abs(v) < abs(best[0])):
                best = (v, prof)
        if best is not None:
            prof = best[1]
            prof.converged = abs(best[0]) <= flux_tol
            prof.residual = profile_residual(prof)
            prof.meta["target"] = "zero origin flux"
            return prof
    # no bracket: report the least-bad admissible shot
    best = None
    for x, v in zip(lattice, vals):
        if not np.isfinite(v):
            continue
        prof = shoot_from_interface(params, x, itype, raise_on_failure=False)
        score = abs(v) * x / max(prof.f_origin, 1e-300) ** params.m
        if best is None or score < best[0]:
            best = (score, prof)
    if best is None:
        raise ProfileUnavailable("no shot reached the origin")
    prof = best[1]
    prof.converged = False
    prof.residual = profile_residual(prof)
    prof.meta["target"] = "zero origin flux (no bracket found)"
    return prof


def shoot_f2_singular(params: Params, xi0: float, xi_end: float = F2_START) -> Profile:
    """Decreasing N >= 2 branch with interface at ``xi0``, diverging as xi -> 0."""
    if params.dim < 2:
        raise ValueError("the singular branch needs N >= 2")
    prof = shoot_from_interface(params, xi0, InterfaceType.TYPE_I, xi_end=xi_end)
    prof.kind = "f2_branch"
    prof.residual = profile_residual(prof)
    return prof


def singular_slope(prof: Profile, window=(F2_START, 10 * F2_START)) -> float:
    """Log-log slope of f against xi over ``window`` near the origin."""
    sel = (prof.xi >= window[0] * (1 - 1e-9)) & (prof.xi <= window[1]) & (prof.f > 0)
    if np.count_nonzero(sel) < 4:
        raise TooFewPoints("too few mesh points in the slope window")
    return float(np.polyfit(np.log(prof.xi[sel]), np.log(prof.f[sel]), 1)[0])


def f1_series(params: Params, A: float, xi):
    """Leading-order expansion of the regular branch at the center."""
    alpha, _ = _exponents(params)
    m, n = params.m, params.dim
    xi = np.asarray(xi, dtype=float)
    return (A ** (m - 1.0) + alpha * (m - 1.0) / (2.0 * m * n) * xi * xi) ** (1.0 / (m - 1.0))


def shoot_f1_center(params: Params, A: float, xi_max: float = 50.0,
                    delta: float = F2_START) -> Profile:
    """Regular N >= 2 branch with f(0) = A, integrated forward to its first maximum."""
    alpha, beta = _exponents(params)
    m, p, s, n = params.m, params.p, params.sigma, params.dim
    kap = alpha * (m - 1.0) / (2.0 * m * n)
    S = A ** (m - 1.0) + kap * delta ** 2
    f0 = S ** (1.0 / (m - 1.0))
    g0 = m / (m - 1.0) * S ** (1.0 / (m - 1.0)) * 2.0 * kap * delta
    rhs = _profile_rhs(m, p, s, n, alpha, beta)

    def peak(xi, y):
        return y[1]
    peak.terminal = True
    peak.direction = -1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sol = solve_ivp(rhs, [delta, xi_max], [f0, g0], method="DOP853", rtol=RTOL, atol=ATOL,
                        events=[peak] + _events(), dense_output=True)
    end = float(sol.t[-1])
    xi = np.linspace(delta, end, 1201)
    y = sol.sol(xi)
    xi = np.concatenate([[0.0], xi])
    f = np.concatenate([[A], y[0]])
    g = np.concatenate([[0.0], y[1]])

    def dense(x):
        x = np.asarray(x, dtype=float)
        out = sol.sol(np.maximum(x, delta))
        small = x < delta
        out[0, small] = f1_series(params, A, x[small])
        return out
    xi1 = end if sol.t_events[0].size else None
    prof = Profile(params, xi, f, g, None, InterfaceType.NONE, "f1_branch",
                   meta={"xi1": xi1, "A": A}, _dense=dense)
    return prof


# --------------------------------------------------------------------------
# residual and classification


def profile_residual(prof: Profile, n_points: int = 400, exclude: float = 10.0) -> float:
    """Sup-norm residual of the profile ODE from independent finite differences.

    Derivatives come from sixth-order central differences of the dense
    solution, with the step shrinking in proportion to the distance from the
    interface and from the origin, so the check does not reuse the
    integrator's own derivative evaluations. Each component is scaled by
    max(1, |derivative|). Points within ``exclude`` seed distances of the
    interface are skipped.
    """
    if prof._dense is None:
        return math.nan
    p = prof.params
    lo = prof.xi[0]
    if prof.kind == "E_profile":
        rhs = _e_rhs(p.m, p.p, p.dim, derive_constants(p).gamma)
    else:
        alpha, beta = _exponents(p)
        rhs = _profile_rhs(p.m, p.p, p.sigma, p.dim, alpha, beta)
    if prof.xi0 is not None:
        d = prof._seed[2] if prof._seed else SEED_FRACTION * prof.xi0
        hi = prof.xi0 - exclude * d
    else:
        hi = prof.xi[-1]
    start = max(lo, F2_START) * 2.0 if p.dim > 1 else lo + 3e-3
    pts = np.unique(np.concatenate([
        np.linspace(start, hi, n_points),
        np.geomspace(start, hi, n_points // 4),
        (prof.xi0 - np.geomspace(exclude * d, 0.5 * (prof.xi0 - start), n_points // 4))
        if prof.xi0 is not None else np.empty(0),
    ]))
    offsets = np.arange(-3.0, 4.0)
    weights = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0
    worst = 0.0
    for x in pts:
        dist = (prof.xi0 - x) if prof.xi0 is not None else math.inf
        step = min(1e-3, 0.01 * dist, 0.01 * x if p.dim > 1 else math.inf)
        if x - 3 * step < lo or step <= 0:
            continue
        y = prof._dense(x + offsets * step)
        yc = y[:, 3]
        if yc[0] <= 0:
            continue
        fp, gp = rhs(x, yc)
        fp_num = float(weights @ y[0]) / step
        gp_num = float(weights @ y[1]) / step
        worst = max(worst, abs(gp_num - gp) / max(1.0, abs(gp)),
                    abs(fp_num - fp) / max(1.0, abs(fp)))
    return worst


def classify_interface(prof: Profile, band: float = 0.10, min_points: int = 8):
    """Type of vanishing at the interface from a log-log fit over the last decade.

    Returns ``(InterfaceType, slope)``.
    """
    if prof.xi0 is None:
        raise ValueError("profile has no interface")
    d = prof.xi0 - prof.xi
    ok = (d > 0) & (prof.f > 0)
    d, f = d[ok], prof.f[ok]
    if d.size == 0:
        raise TooFewPoints("no positive mesh points before the interface")
    d_min = d.min()
    win = d <= 10.0 * d_min * (1 + 1e-9)
    if np.count_nonzero(win) < min_points:
        raise TooFewPoints(f"only {np.count_nonzero(win)} points in the fit window")
    slope = float(np.polyfit(np.log(d[win]), np.log(f[win]), 1)[0])
    m, p = prof.params.m, prof.params.p
    e1, e2 = 1.0 / (m - 1.0), 1.0 / (1.0 - p)
    if abs(slope - e1) <= band * e1:
        return InterfaceType.TYPE_I, slope
    if abs(slope - e2) <= band * e2:
        return InterfaceType.TYPE_II, slope
    return InterfaceType.INCONCLUSIVE, slope


def synthetic_profile(params: Params, xi0: float, exponent: float, scale: float = 1.0,
                      n: int = 200) -> Profile:
    """f = scale * (xi0 - xi)_+^exponent on a mesh refined toward xi0 (classifier tests)."""
    mesh = np.unique(np.concatenate([np.linspace(0.0, xi0, n),
                                     xi0 - np.geomspace(1e-6 * xi0, 0.5 * xi0, n)]))
    f = scale * np.maximum(xi0 - mesh, 0.0) ** exponent
    return Profile(params, mesh, f, np.zeros_like(f), xi0, InterfaceType.NONE, "synthetic")


# --------------------------------------------------------------------------
# supersolution barriers


def surrogate_params(params: Params, bump: float = 1.0) -> Params:
    """Weight exponent raised above 2(1-p)/(m-1) when L <= 0; identity otherwise.

    Since (1+|x|)^sigma <= (1+|x|)^sigma1 for sigma <= sigma1, a supersolution
    for the larger weight is one for the smaller.
    """
    if derive_constants(params).L > 0:
        return params
    return params.replace(sigma=params.sigma_threshold + bump)


@dataclass
class SupersolutionBarrier:
    """z(x, t) = (T - t)^-alpha F((1 + |x|)(T - t)^beta) with F a profile or min(f1, f2)."""

    params: Params
    alpha: float
    beta: float
    profile: Optional[Profile] = None
    f1: Optional[Profile] = None
    f2: Optional[Profile] = None
    xi_bar: Optional[float] = None
    T: float = 1.0
    source_params: Optional[Params] = None

    @property
    def xi0(self) -> float:
        return self.profile.xi0 if self.profile is not None else self.f2.xi0

    def shape(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.profile is not None:
            out = self.profile.evaluate(xi)
            return np.where(np.isnan(out), self.profile.f_origin, out)
        out = self.f2.evaluate(np.maximum(xi, self.f2.xi[0]))
        inner = xi <= self.xi_bar
        out[inner] = self.f1.evaluate(xi[inner])
        return out

    def __call__(self, x, t, T: Optional[float] = None):
        T = self.T if T is None else T
        tau = T - np.asarray(t, dtype=float)
        if np.any(tau <= 0):
            raise ValueError("barrier is only defined for t < T")
        xi = (1.0 + np.abs(np.asarray(x, dtype=float))) * tau ** self.beta
        return tau ** (-self.alpha) * self.shape(xi)

    def support_radius(self, t, T: Optional[float] = None):
        T = self.T if T is None else T
        return self.xi0 * (T - np.asarray(t, dtype=float)) ** (-self.beta) - 1.0

    def min_shape(self, lo: float, hi: float, n: int = 257) -> float:
        return float(np.min(self.shape(np.linspace(lo, hi, n))))

    def describe(self) -> dict:
        d = {"params": self.params.to_dict(), "alpha": self.alpha, "beta": self.beta,
             "xi0": self.xi0, "T": self.T}
        if self.source_params is not None and self.source_params != self.params:
            d["surrogate_for"] = self.source_params.to_dict()
        if self.profile is not None:
            d["profile"] = self.profile.header()
        else:
            d["xi_bar"] = self.xi_bar
            d["f1_A"] = self.f1.meta.get("A")
        return d


def _admissible_n1(params, xi0):
    try:
        prof = shoot_from_interface(params, xi0, InterfaceType.TYPE_I, raise_on_failure=False)
    except SeedError:
        return None
    if prof.meta["status"] != "ok" or not prof.monotone:
        return None
    return prof


def barrier_T0(barrier: SupersolutionBarrier, A: float, R: float, t_lo: float = 1e-12,
               rel: float = 1e-6) -> Optional[float]:
    """Largest T on a bisection lattice with T^-alpha min F >= A over |x| <= R and (1+R)T^beta < xi0."""
    al, be, xi0 = barrier.alpha, barrier.beta, barrier.xi0

    def ok(T):
        top = (1.0 + R) * T ** be
        if not top < xi0:
            return False
        return T ** (-al) * barrier.min_shape(T ** be, top) >= A

    if not ok(t_lo):
        return None
    hi = (xi0 / (1.0 + R)) ** (1.0 / be)
    lo = t_lo
    if ok(hi * (1 - 1e-12)):
        return hi * (1 - 1e-12)
    while hi / lo - 1.0 > rel:
        mid = math.sqrt(lo * hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def build_barrier(params: Params, A: float = 1.0, R: float = 1.0, xi0: Optional[float] = None,
                  xi0_range=(0.05, 20.0), n_lattice: int = 48) -> SupersolutionBarrier:
    """Supersolution barrier for data bounded by ``A`` and supported in B(0, R).

    N = 1: a strictly decreasing shot profile; without ``xi0`` the lattice
    point maximizing the admissible horizon T0 is used. N >= 2: the glued
    min(f1, f2) barrier, halving ``xi0`` until the branches cross.
    """
    eff = surrogate_params(params)
    alpha, beta = _exponents(eff)
    if eff.dim == 1:
        if xi0 is not None:
            prof = shoot_from_interface(eff, xi0, InterfaceType.TYPE_I)
            if not prof.monotone:
                raise ProfileUnavailable("profile is not decreasing", xi0=xi0)
            bar = SupersolutionBarrier(eff, alpha, beta, profile=prof, source_params=params)
        else:
            best = None
            for x in np.geomspace(xi0_range[0], xi0_range[1], n_lattice):
                prof = _admissible_n1(eff, x)
                if prof is None:
                    continue
                bar = SupersolutionBarrier(eff, alpha, beta, profile=prof, source_params=params)
                T0 = barrier_T0(bar, A, R)
                if T0 is not None and (best is None or T0 > best[0]):
                    best = (T0, bar)
            if best is None:
                raise ProfileUnavailable("no decreasing profile on the lattice")
            bar = best[1]
            bar.T = best[0]
        bar.profile.residual = profile_residual(bar.profile)
        return bar
    # N >= 2: glue the regular and singular branches
    f1 = shoot_f1_center(eff, A)
    xi1 = f1.meta["xi1"] or f1.xi[-1]
    x0 = xi0 if xi0 is not None else 0.5 * xi1
    for _ in range(40):
        try:
            f2 = shoot_f2_singular(eff, x0)
        except (NegativeProfile, BlowupInXi):
            x0 *= 0.5
            continue
        grid = np.linspace(f2.xi[0], min(xi1, x0), 2001)
        diff = f1.evaluate(grid) - f2.evaluate(grid)
        sgn = np.flatnonzero((diff[:-1] < 0) & (diff[1:] >= 0))
        if sgn.size:
            i = sgn[0]
            xb = brentq(lambda s: float(f1.evaluate(np.array([s]))[0] - f2.evaluate(np.array([s]))[0]),
                        grid[i], grid[i + 1], xtol=1e-13)
            return SupersolutionBarrier(eff, alpha, beta, f1=f1, f2=f2, xi_bar=xb, source_params=params)
        x0 *= 0.5
    raise NoCrossing("regular and singular branches do not cross")


# --------------------------------------------------------------------------
# absolute minimal solution E


@dataclass
class EProfile:
    params: Params
    rho0: float
    profile: Profile
    converged: bool


def _shoot_E(params: Params, rho0: float, xi_end: float):
    gamma = derive_constants(params).gamma
    c, e = seed_coefficient(params.m, params.p, gamma * rho0, 1.0, InterfaceType.TYPE_I)
    rhs = _e_rhs(params.m, params.p, params.dim, gamma)
    return _run_backward(rhs, rho0, c, e, params.m, xi_end) + (c, e)


@functools.lru_cache(maxsize=32)
def _E_cached(m: float, p: float, dim: int) -> EProfile:
    return compute_E_profile(Params(m, p, 0.0, dim))


def compute_E_profile(params: Params, rho_range=(0.02, 50.0), n_lattice: int = 80,
                      flux_tol: float = 1e-9) -> EProfile:
    """Profile phi of E by Type I shooting from rho0, bisecting on phi'(0) = 0."""
    params = params.replace(sigma=0.0)
    xi_end = 0.0 if params.dim == 1 else 1e-6

    def flux(r):
        try:
            sol, status, d, c, e = _shoot_E(params, r, xi_end * r)
        except SeedError:
            return math.nan
        if status == "ok":
            return float(sol.y[1, -1])
        return math.inf if status == "zero" else math.nan

    lattice = np.geomspace(rho_range[0], rho_range[1], n_lattice)
    vals = [flux(r) for r in lattice]
    bracket = None
    for a, b, va, vb in zip(lattice, lattice[1:], vals, vals[1:]):
        if np.isfinite(va) and np.isfinite(vb) and va * vb < 0:
            bracket = (a, b)
            break
        if np.isfinite(va) and va < 0 and vb == math.inf:
            bracket = (a, b)
            break
    if bracket is None:
        raise ProfileUnavailable("no sign change of the origin flux for E")
    a, b = bracket
    va = flux(a)
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid in (a, b):
            break
        v = flux(mid)
        if np.isfinite(v) and abs(v) <= 1e-3 * flux_tol:
            a = b = mid
            break
        if np.isfinite(v) and np.sign(v) == np.sign(va):
            a = mid
        else:
            b = mid
    cands = [(abs(flux(r)), r) for r in (a, b) if np.isfinite(flux(r))]
    v, rho0 = min(cands)
    sol, status, d, c, e = _shoot_E(params, rho0, xi_end * rho0)
    mesh = _mesh_toward(rho0, d, float(sol.t[-1]))
    y = sol.sol(mesh)
    prof = Profile(params, np.concatenate([mesh, [rho0]]),
                   np.concatenate([np.maximum(y[0], 0.0), [0.0]]),
                   np.concatenate([y[1], [0.0]]), rho0, InterfaceType.TYPE_I, "E_profile",
                   converged=v <= flux_tol, meta={"seed_delta": d, "origin_flux": v},
                   _dense=sol.sol, _seed=(c, e, d))
    prof.residual = profile_residual(prof)
    return EProfile(params, rho0, prof, prof.converged)


def absolute_minimal_E(params: Params, x, t, eprof: Optional[EProfile] = None):
    """E(x, t) = t^{1/(1-p)} phi(|x| t^-gamma), zero for |x| > rho0 t^gamma."""
    if eprof is None:
        eprof = _E_cached(params.m, params.p, params.dim)
    if not eprof.converged:
        raise ProfileUnavailable("E profile did not converge")
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    gamma = derive_constants(eprof.params).gamma
    p = params.p
    out = np.zeros(np.broadcast(x, t).shape)
    tb = np.broadcast_to(t, out.shape)
    xb = np.broadcast_to(x, out.shape)
    pos = tb > 0
    if np.any(pos):
        xi = np.abs(xb[pos]) * tb[pos] ** (-gamma)
        vals = np.zeros_like(xi)
        inside = xi < eprof.rho0
        vals[inside] = eprof.profile.evaluate(xi[inside])
        out[pos] = tb[pos] ** (1.0 / (1.0 - p)) * vals
    return float(out) if out.ndim == 0 else out
