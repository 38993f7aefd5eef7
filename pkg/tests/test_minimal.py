import json

import numpy as np
import pytest

from rdlab.core import Field, Grid, Params, tent
from rdlab.minimal import (NoAdmissibleT0, NotConverged, choose_T0, doubling_schedule,
                           minimal_solution, resolved_k_max, support_radius)
from rdlab.selfsim import barrier_T0, build_barrier

SLOW = Params(2.0, 0.5, 1.0, 1)


@pytest.fixture(scope="module")
def slow_barrier():
    return build_barrier(SLOW, A=1.0, R=1.0)


@pytest.fixture(scope="module")
def slow_report():
    g = Grid.line(4.0, 0.02)
    return minimal_solution(tent(g), SLOW, t_end=0.1, keep_all=True)


class TestSchedule:
    def test_resolved_k_max(self):
        assert resolved_k_max(SLOW, 0.01) == 256
        assert resolved_k_max(Params(1.5, 0.5, 1.0), 0.01) == 8192
        k = resolved_k_max(SLOW, 0.02)
        assert k ** 0.75 * 0.02 <= 1 < (2 * k) ** 0.75 * 0.02

    def test_doubling(self):
        assert doubling_schedule(1) == [1]
        assert doubling_schedule(20) == [1, 2, 4, 8, 16]

    def test_support_radius(self):
        g = Grid.line(3.0, 0.1)
        assert support_radius(tent(g, 1.0)) == pytest.approx(1.0)
        assert support_radius(Field(g, 0.0, np.zeros(g.n_nodes))) == 0.0


class TestChooseT0:
    def test_shrinking_data_grows_T0(self, slow_barrier):
        Ts = [barrier_T0(slow_barrier, A, 1.0) for A in (4.0, 1.0, 0.25, 0.0625)]
        assert all(b >= a for a, b in zip(Ts, Ts[1:]))

    def test_larger_support_never_grows_T0(self, slow_barrier):
        Ts = [barrier_T0(slow_barrier, 1.0, R) for R in (0.5, 1.0, 2.0)]
        assert all(b <= a for a, b in zip(Ts, Ts[1:]))

    def test_concrete_slow_profile(self):
        prm = Params(3.0, 0.5, 3.0, 1)
        g = Grid.line(3.0, 0.01)
        u0 = tent(g, 0.99)
        bar = build_barrier(prm, A=1.0, R=1.0)
        T0 = choose_T0(u0, bar)
        assert T0 > 0
        x = np.linspace(-1, 1, 201)
        assert np.all(bar(x, 0.0, T0) >= 1.0 - 1e-9)
        assert (2.0) * T0 ** bar.beta < bar.xi0

    def test_no_admissible(self, slow_barrier):
        class FlatBarrier:
            alpha, beta, xi0 = slow_barrier.alpha, slow_barrier.beta, slow_barrier.xi0

            def min_shape(self, lo, hi):
                return 0.0

        g = Grid.line(3.0, 0.1)
        with pytest.raises(NoAdmissibleT0):
            choose_T0(tent(g), FlatBarrier())


class TestMinimalSolution:
    def test_zero_data(self):
        g = Grid.line(2.0, 0.05)
        rep = minimal_solution(Field(g, 0.0, np.zeros(g.n_nodes)), SLOW, k_max=8)
        assert rep.converged and np.all(rep.trajectory.values() == 0)
        assert rep.sup_gap == [0.0, 0.0, 0.0]

    def test_monotone_in_k(self, slow_report):
        assert slow_report.monotonicity_margin >= -1e-10

    def test_gap_shrinks(self, slow_report):
        gaps = np.array(slow_report.sup_gap)
        assert gaps[-1] < gaps[len(gaps) // 2]
        # the gap decays like 1/k once k exceeds the weight bound
        assert 1.5 < gaps[-2] / gaps[-1] < 2.5

    def test_support_stabilizes(self, slow_report):
        s = np.array(slow_report.support_right)
        assert abs(s[-1] - s[-2]) / s[-1] < 0.02

    def test_barrier_domination(self, slow_report):
        assert slow_report.T0 == pytest.approx(1.0410087741, rel=1e-5)
        assert slow_report.dominated
        assert slow_report.domination_margin > 0

    def test_report_json(self, slow_report):
        d = json.loads(json.dumps(slow_report.to_dict()))
        assert d["k_schedule"] == slow_report.k_schedule
        assert d["status"] == "completed"

    def test_t_end_beyond_T0(self):
        g = Grid.line(4.0, 0.05)
        with pytest.raises(NoAdmissibleT0):
            minimal_solution(tent(g), SLOW, k_max=4, t_end=2.0)

    def test_not_converged_raises(self):
        g = Grid.line(4.0, 0.05)
        with pytest.raises(NotConverged):
            minimal_solution(tent(g), SLOW, k_max=4, t_end=0.05, raise_on_failure=True)

    def test_parallel_matches_serial(self):
        g = Grid.line(4.0, 0.05)
        a = minimal_solution(tent(g), SLOW, k_max=8, t_end=0.05, check_barrier=False, jobs=1)
        b = minimal_solution(tent(g), SLOW, k_max=8, t_end=0.05, check_barrier=False, jobs=2)
        assert np.array_equal(a.trajectory.values(), b.trajectory.values())
        assert a.sup_gap == b.sup_gap

    def test_fast_support_keeps_growing(self):
        prm = Params(1.2, 0.5, 1.0, 1)
        g = Grid.line(8.0, 0.02)
        rep = minimal_solution(tent(g), prm, k_max=1024, t_end=0.3, check_barrier=False)
        s = np.array(rep.support_right)
        steps = np.diff(s)
        assert np.all(steps > 0)
        # no saturation: the last doublings move the edge by more and more
        assert np.all(np.diff(steps[-4:]) > 0)
        assert steps[-1] / s[-1] > 0.05
