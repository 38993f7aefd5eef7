import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rdlab.core import Field, Grid, Params, derive_constants
from rdlab.selfsim import (Degenerate, InterfaceType, ProfileUnavailable, SeedError, TooFewPoints,
                           UndefinedExponents, absolute_minimal_E, barrier_T0, build_barrier,
                           classify_interface, compute_E_profile, f1_series, ode_rhs,
                           profile_residual, seed_coefficient, shoot_f1_center, shoot_f2_singular,
                           shoot_from_interface, shoot_symmetric_profile, singular_slope,
                           surrogate_params, synthetic_profile)
from rdlab.solver import laplacian_pme

N1 = Params(3.0, 0.5, 3.0, 1)


@pytest.fixture(scope="module")
def symmetric_profile():
    return shoot_symmetric_profile(N1)


@pytest.fixture(scope="module")
def slow_barrier():
    return build_barrier(Params(2.0, 0.5, 1.0, 1), A=1.0, R=1.0)


@pytest.fixture(scope="module")
def e_profile():
    return compute_E_profile(Params(2.0, 0.5, 0.0, 1))


class TestOdeRhs:
    def test_zero_state(self):
        assert ode_rhs(N1, 1.0, 0.0, 0.0) == (0.0, 0.0)

    def test_degenerate(self):
        with pytest.raises(Degenerate):
            ode_rhs(N1, 1.0, 0.0, -1.0)

    def test_critical_point(self):
        c = derive_constants(N1)
        xi, F = 0.7, 0.4
        fp, gp = ode_rhs(N1, xi, F, 0.0)
        assert fp == 0.0
        assert gp == pytest.approx(c.alpha * F - xi ** N1.sigma * F ** N1.p, rel=1e-14)

    def test_needs_positive_L(self):
        with pytest.raises(UndefinedExponents):
            ode_rhs(Params(2.0, 0.5, 0.5, 1), 1.0, 1.0, 0.0)

    def test_f1_series_example(self):
        prm = Params(2.0, 0.5, 3.0, 2)
        assert derive_constants(prm).alpha == pytest.approx(2.5)
        xi = np.array([0.0, 0.1, 0.2])
        np.testing.assert_allclose(f1_series(prm, 1.0, xi), 1 + 0.3125 * xi ** 2, rtol=1e-14)

    def test_f1_branch_matches_series(self):
        prm = Params(2.0, 0.5, 3.0, 2)
        prof = shoot_f1_center(prm, 1.0)
        xi = np.array([1e-3, 5e-3, 1e-2])
        np.testing.assert_allclose(prof.evaluate(xi), f1_series(prm, 1.0, xi), rtol=1e-6)


class TestSeeds:
    def test_type_one_coefficient(self):
        c, e = seed_coefficient(3.0, 0.5, 2.0, 1.0, InterfaceType.TYPE_I)
        assert e == 0.5
        assert c == pytest.approx(math.sqrt(2.0 * 2.0 / 3.0))

    def test_type_two_coefficient(self):
        c, e = seed_coefficient(3.0, 0.5, 2.0, 1.0, InterfaceType.TYPE_II)
        assert e == 2.0
        assert c == pytest.approx(0.0625)

    def test_critical_no_real_root(self):
        with pytest.raises(SeedError):
            seed_coefficient(1.5, 0.5, 0.01, 1.0, InterfaceType.TYPE_I)

    @staticmethod
    def _seed_residual(scale):
        """Relative ODE residual of the Type I expansion, with its coefficient scaled, at the seed point."""
        c0 = derive_constants(N1)
        xi0, d = 1.0, 1e-4
        c, e = seed_coefficient(N1.m, N1.p, c0.beta * xi0, xi0 ** N1.sigma, InterfaceType.TYPE_I)
        c *= scale
        f = lambda x: c * (xi0 - x) ** e
        flux = lambda x: (f(x + 1e-9) ** N1.m - f(x - 1e-9) ** N1.m) / 2e-9
        x, s = xi0 - d, 1e-7
        gp_num = (flux(x + s) - flux(x - s)) / (2 * s)
        _, gp = ode_rhs(N1, x, f(x), flux(x))
        return abs(gp_num - gp) / max(1.0, abs(gp))

    def test_wrong_seed_fails_residual(self):
        good = self._seed_residual(1.0)
        for scale in (5.0, 0.2):
            bad = self._seed_residual(scale)
            assert bad > 1e-3 and bad > 100 * good


class TestSymmetricProfile:
    def test_converges(self, symmetric_profile):
        prof = symmetric_profile
        assert prof.converged
        assert abs(prof.flux_origin) <= 1e-6
        assert prof.residual <= 1e-6
        assert prof.f_origin > 0
        assert prof.xi0 == pytest.approx(1.294558059417527, rel=1e-6)

    def test_round_trip_type_one(self, symmetric_profile):
        itype, slope = classify_interface(symmetric_profile)
        assert itype is InterfaceType.TYPE_I
        assert slope == pytest.approx(0.5, rel=1e-2)

    def test_interface_flux_vanishes(self, symmetric_profile):
        prof = symmetric_profile
        xi = prof.xi0 - np.geomspace(1e-8, 1e-5, 5)
        f = prof.evaluate(xi)
        # secant slope of f^m toward the interface decays like (xi0 - xi)^{1/2}
        fm_slope = (f ** prof.params.m) / (prof.xi0 - xi)
        assert np.all(np.diff(fm_slope) > 0)
        assert fm_slope[0] < 1e-4


class TestClassifier:
    @pytest.mark.parametrize("m,p,exp,expected", [(3.0, 0.5, 0.5, InterfaceType.TYPE_I),
                                                  (2.0, 0.5, 1.0, InterfaceType.TYPE_I),
                                                  (3.0, 0.5, 2.0, InterfaceType.TYPE_II),
                                                  (2.0, 0.8, 5.0, InterfaceType.TYPE_II),
                                                  (3.0, 0.5, 1.2, InterfaceType.INCONCLUSIVE)])
    def test_synthetic(self, m, p, exp, expected):
        prm = Params(m, p, 3.0, 1)
        itype, slope = classify_interface(synthetic_profile(prm, 1.3, exp))
        assert itype is expected
        assert slope == pytest.approx(exp, abs=1e-9)

    @settings(max_examples=20)
    @given(st.floats(1e-3, 1e3))
    def test_scale_invariant(self, scale):
        prm = Params(3.0, 0.5, 3.0, 1)
        _, s1 = classify_interface(synthetic_profile(prm, 1.3, 0.5))
        _, s2 = classify_interface(synthetic_profile(prm, 1.3, 0.5, scale=scale))
        assert abs(s1 - s2) < 1e-12

    def test_too_few_points(self):
        prm = Params(3.0, 0.5, 3.0, 1)
        prof = synthetic_profile(prm, 1.3, 0.5, n=5)
        with pytest.raises(TooFewPoints):
            classify_interface(prof, min_points=50)


class TestSingularBranch:
    @pytest.mark.parametrize("m,dim,expected", [(2.0, 3, -0.5), (3.0, 3, -1 / 3), (2.0, 4, -1.0)])
    def test_slope(self, m, dim, expected):
        prof = shoot_f2_singular(Params(m, 0.5, 3.0, dim), 0.5)
        assert singular_slope(prof) == pytest.approx(expected, rel=0.01)
        assert prof.residual < 1e-6
        assert prof.monotone

    def test_two_dimensional_log(self):
        prof = shoot_f2_singular(Params(2.0, 0.5, 3.0, 2), 0.5)
        sel = (prof.xi >= 1e-4) & (prof.xi <= 1e-3)
        # f^m is affine in -ln xi near the origin
        a = -np.log(prof.xi[sel])
        b = prof.f[sel] ** 2
        coef = np.polyfit(a, b, 1)
        assert np.max(np.abs(np.polyval(coef, a) - b)) < 1e-3 * np.max(b)

    def test_doubled_interface(self):
        prm = Params(2.0, 0.5, 3.0, 3)
        prof = shoot_f2_singular(prm, 1.0)
        assert prof.xi0 == 1.0 and prof.monotone


class TestBarrier:
    def test_surrogate(self):
        prm = Params(2.0, 0.5, 1.0, 1)
        sur = surrogate_params(prm)
        assert derive_constants(sur).L > 0 and sur.sigma == pytest.approx(2.0)
        assert surrogate_params(Params(2.0, 0.5, 3.0, 1)) == Params(2.0, 0.5, 3.0, 1)

    def test_T0(self, slow_barrier):
        assert slow_barrier.T == pytest.approx(1.0410087741, rel=1e-6)
        assert slow_barrier.xi0 == pytest.approx(3.357, rel=1e-3)

    def test_nonincreasing_in_x(self, slow_barrier):
        x = np.linspace(0, 5, 501)
        z = slow_barrier(x, 0.5)
        assert np.all(np.diff(z) <= 1e-12)

    def test_amplitude_and_support_grow(self, slow_barrier):
        T = slow_barrier.T
        ts = T - np.geomspace(0.5, 1e-3, 6)
        amp = [slow_barrier(np.array([0.0]), t)[0] for t in ts]
        rad = slow_barrier.support_radius(ts)
        assert np.all(np.diff(amp) > 0) and amp[-1] > 10 * amp[0]
        assert np.all(np.diff(rad) > 0)

    def test_dominates_data(self, slow_barrier):
        x = np.linspace(-1, 1, 201)
        assert np.all(slow_barrier(x, 0.0) >= 1.0 - 1e-9)
        assert barrier_T0(slow_barrier, 1.0, 1.0) == pytest.approx(slow_barrier.T, rel=1e-5)

    def test_discrete_supersolution(self, slow_barrier):
        # O(h^2) at a fixed distance from the interface and the kink at x = 0; in the
        # front layer (f^m)'' is dominated by the reaction term and the error is larger
        prm = slow_barrier.params
        t, dt = 0.5, 1e-6
        rad = slow_barrier.support_radius(t)
        worst = []
        for h in (0.02, 0.01, 0.005):
            g = Grid.line(8.0, h)
            z = slow_barrier(g.x, t)
            zt = (slow_barrier(g.x, t + dt) - slow_barrier(g.x, t - dt)) / (2 * dt)
            lap = laplacian_pme(Field(g, t, z), prm)
            res = zt - lap - (1 + np.abs(g.x)) ** prm.sigma * z ** prm.p
            ok = (np.abs(g.x) > 0.5) & (rad - np.abs(g.x) > 0.5)
            worst.append(-res[ok].min())
            assert res[ok].min() >= -30 * h ** 2
        assert worst[0] / worst[1] > 3.5 and worst[1] / worst[2] > 3.5

    def test_radial_barrier(self):
        bar = build_barrier(Params(2.0, 0.5, 3.0, 3), A=1.0, R=1.0)
        assert bar.xi_bar is not None and bar.xi_bar > 0
        xb = bar.xi_bar
        left, right = bar.shape(np.array([xb - 1e-9, xb + 1e-9]))
        assert left == pytest.approx(right, rel=1e-6)
        xi = np.linspace(bar.f2.xi[0], bar.xi0, 400)
        assert np.all(bar.shape(xi) >= 0)


class TestAbsoluteMinimal:
    def test_rho0(self, e_profile):
        assert e_profile.converged
        assert e_profile.rho0 == pytest.approx(0.6285297375, rel=1e-6)
        assert e_profile.profile.residual <= 1e-6

    def test_zero_initially_and_outside(self, e_profile):
        prm = Params(2.0, 0.5, 0.0, 1)
        gamma = derive_constants(prm).gamma
        x = np.linspace(-3, 3, 61)
        assert np.all(absolute_minimal_E(prm, x, 0.0, e_profile) == 0)
        t = 2.0
        out = np.abs(x) > e_profile.rho0 * t ** gamma
        assert np.all(absolute_minimal_E(prm, x[out], t, e_profile) == 0)
        assert absolute_minimal_E(prm, 0.0, t, e_profile) > 0

    def test_solves_pde(self, e_profile):
        prm = Params(2.0, 0.5, 0.0, 1)
        t, d = 1.0, 1e-4
        x = np.linspace(-0.4, 0.4, 9)
        E = lambda y, s: absolute_minimal_E(prm, y, s, e_profile)
        et = (E(x, t + d) - E(x, t - d)) / (2 * d)
        lap = (E(x + d, t) ** 2 - 2 * E(x, t) ** 2 + E(x - d, t) ** 2) / d ** 2
        np.testing.assert_allclose(et, lap + E(x, t) ** 0.5, atol=1e-4)

    def test_critical_unavailable(self):
        with pytest.raises((ProfileUnavailable, SeedError)):
            compute_E_profile(Params(1.5, 0.5, 0.0, 1))
