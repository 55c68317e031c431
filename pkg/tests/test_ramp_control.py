"""Ramp metering controller tests with hand-computed recursions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trafficbench.errors import ConfigurationError, ContractError
from trafficbench.ramp_control import (
    AlineaController,
    HeroCoordinator,
    HeroParams,
    MetalineController,
    RampMeterParams,
)


def make_alinea(**kw):
    return AlineaController(RampMeterParams(**kw))


class TestAlinea:
    def test_proportional_recursion(self):
        # r0 = 100, target 10, k_p 30: occ 12 -> 100 - 60 = 40
        ctl = make_alinea()
        assert ctl.update(12.0) == pytest.approx(40.0)
        # on target: no movement
        assert ctl.update(10.0) == pytest.approx(40.0)
        # occ 8: 40 + 60 = 100, at the cap
        assert ctl.update(8.0) == pytest.approx(100.0)

    def test_clamps_to_min_rate(self):
        ctl = make_alinea()
        ctl.update(12.0)                     # rate 40
        assert ctl.update(20.0) == pytest.approx(5.0)   # 40 - 300 clamps

    def test_clamp_is_anti_windup(self):
        # after clamping, the recursion continues from the bound, not
        # from the unclamped value
        ctl = make_alinea()
        ctl.update(12.0)
        ctl.update(20.0)                     # clamped to 5
        assert ctl.update(10.0) == pytest.approx(5.0)
        assert ctl.update(9.0) == pytest.approx(35.0)   # 5 + 30 * 1

    def test_trend_term(self):
        # k_i = 2, occupancy rising 9 -> 10 with occupancy on target:
        # rate moves by k_i * (c_t - c_prev) = +2
        ctl = make_alinea(k_i=2.0, initial_rate=50.0)
        ctl.update(9.0)                      # first call seeds c_prev
        before = ctl.rate
        after = ctl.update(10.0)
        assert after == pytest.approx(before + 2.0)

    def test_first_update_has_no_trend(self):
        pure_p = make_alinea(initial_rate=50.0)
        with_i = make_alinea(k_i=5.0, initial_rate=50.0)
        assert with_i.update(12.0) == pytest.approx(pure_p.update(12.0))

    def test_initial_rate_defaults_to_max(self):
        assert make_alinea().rate == 100.0
        assert make_alinea(initial_rate=42.0).rate == 42.0

    def test_param_validation(self):
        with pytest.raises(ConfigurationError):
            RampMeterParams(min_rate=50.0, max_rate=50.0)
        with pytest.raises(ConfigurationError):
            RampMeterParams(min_rate=-1.0)
        with pytest.raises(ConfigurationError):
            RampMeterParams(cycle_s=0.0)
        with pytest.raises(ConfigurationError):
            RampMeterParams(initial_rate=200.0)

    @given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=50))
    @settings(max_examples=100, deadline=None)
    def test_rate_always_within_bounds(self, occs):
        ctl = make_alinea(k_i=3.0)
        for occ in occs:
            r = ctl.update(occ)
            assert 5.0 <= r <= 100.0


class TestMetaline:
    K_P = [[30.0, -5.0, 0.0], [-3.0, 25.0, -2.0], [0.0, -4.0, 20.0]]
    K_I = [[0.0] * 3] * 3

    def test_matrix_column_action(self):
        # unit error on ramp 0 moves rates by the first gain column
        ctl = MetalineController(targets=[10.0, 10.0, 10.0],
                                 k_p=self.K_P, k_i=self.K_I,
                                 initial_rates=[50.0, 50.0, 50.0])
        rates = ctl.update([9.0, 10.0, 10.0])
        assert rates == pytest.approx([80.0, 47.0, 50.0])

    def test_rates_clamped_elementwise(self):
        ctl = MetalineController(targets=[10.0, 10.0, 10.0],
                                 k_p=self.K_P, k_i=self.K_I)
        rates = ctl.update([30.0, 0.0, 30.0])
        assert (rates >= 5.0).all() and (rates <= 100.0).all()

    def test_dimension_mismatch_raises(self):
        ctl = MetalineController(targets=[10.0, 10.0, 10.0],
                                 k_p=self.K_P, k_i=self.K_I)
        with pytest.raises(ContractError):
            ctl.update([10.0, 10.0])

    def test_gain_shape_validation(self):
        with pytest.raises(ConfigurationError):
            MetalineController(targets=[10.0, 10.0], k_p=self.K_P, k_i=self.K_I)

    @given(st.lists(st.tuples(st.floats(0.0, 60.0), st.floats(0.0, 60.0),
                              st.floats(0.0, 60.0)),
                    min_size=1, max_size=30),
           st.floats(5.0, 60.0), st.floats(0.1, 40.0), st.floats(0.0, 10.0))
    @settings(max_examples=50, deadline=None)
    def test_diagonal_reduces_to_independent_local_laws(self, occ_seq, target,
                                                        kp, ki):
        # bitwise agreement, not approximate: the matrix recursion with
        # diagonal gains must produce the identical float sequence
        gains_p = np.diag([kp, kp * 0.5, kp * 2.0])
        gains_i = np.diag([ki, ki * 0.25, ki * 3.0])
        mat = MetalineController(targets=[target] * 3, k_p=gains_p, k_i=gains_i)
        locals_ = [
            AlineaController(RampMeterParams(target_occupancy=target,
                                             k_p=gains_p[i, i], k_i=gains_i[i, i]))
            for i in range(3)
        ]
        for occ in occ_seq:
            vec = mat.update(list(occ))
            for i, ctl in enumerate(locals_):
                assert vec[i] == ctl.update(occ[i])


class TestHero:
    def make(self, n=3, **kw):
        params = HeroParams(**kw)
        children = [AlineaController(RampMeterParams()) for _ in range(n)]
        return HeroCoordinator(children, q_sat=[0.5] * n, params=params)

    def test_slave_law_worked_example(self):
        # set-point 5 m -> 2/3 veh, empty queue, 2 forecast arrivals,
        # 60 s period, q_sat 0.5: r = 100 * ((2/3 + 2) / 60) / 0.5 = 8.889
        hero = self.make()
        # activation and first recruitment happen in the same period:
        # ramp 2 becomes master, ramp 1 its slave
        rates = hero.update([10.0, 10.0, 10.0], [0.0, 0.0, 20.0], [0.0, 2.0, 0.0])
        assert hero.modes == ["normal", "slave", "master"]
        expected = 100.0 * ((5.0 / 7.5 - 0.0 + 2.0) / 60.0) / 0.5
        assert expected == pytest.approx(8.888888888888888)
        assert rates[1] == pytest.approx(expected)

    def test_hysteresis_mode_trace(self):
        # master queue 16 -> 10 -> 2 with thresholds 15 / 2.5:
        # master, still master, released
        hero = self.make(n=2)
        hero.update([10.0, 10.0], [0.0, 16.0], [0.0, 0.0])
        assert hero.modes[1] == "master"
        hero.update([10.0, 10.0], [0.0, 10.0], [0.0, 0.0])
        assert hero.modes[1] == "master"
        hero.update([10.0, 10.0], [0.0, 2.0], [0.0, 0.0])
        assert hero.modes[1] == "normal"

    def test_recruitment_one_per_period(self):
        hero = self.make(n=3)
        hero.update([10.0] * 3, [0.0, 0.0, 20.0], [0.0] * 3)
        assert hero.modes == ["normal", "slave", "master"]
        hero.update([10.0] * 3, [0.0, 0.0, 20.0], [0.0] * 3)
        assert hero.modes == ["slave", "slave", "master"]

    def test_no_recruitment_below_activation(self):
        # hysteresis keeps the master active between the thresholds,
        # but the chain only grows while the queue exceeds activation
        hero = self.make(n=3)
        hero.update([10.0] * 3, [0.0, 0.0, 20.0], [0.0] * 3)
        assert hero.modes == ["normal", "slave", "master"]
        hero.update([10.0] * 3, [0.0, 0.0, 10.0], [0.0] * 3)
        assert hero.modes == ["normal", "slave", "master"]

    def test_release_frees_whole_cluster(self):
        hero = self.make(n=3)
        hero.update([10.0] * 3, [0.0, 0.0, 20.0], [0.0] * 3)
        hero.update([10.0] * 3, [0.0, 0.0, 20.0], [0.0] * 3)
        assert hero.modes == ["slave", "slave", "master"]
        hero.update([10.0] * 3, [0.0, 0.0, 1.0], [0.0] * 3)
        assert hero.modes == ["normal", "normal", "normal"]

    def test_masters_do_not_steal_foreign_slaves(self):
        # both ramp 1 and ramp 2 over threshold: each becomes master;
        # ramp 2 cannot recruit ramp 1, ramp 1 recruits ramp 0
        hero = self.make(n=3)
        hero.update([10.0] * 3, [0.0, 20.0, 20.0], [0.0] * 3)
        assert hero.modes == ["slave", "master", "master"]

    def test_slave_rate_clamped_to_child_bounds(self):
        hero = self.make(n=2)
        hero.update([10.0, 10.0], [0.0, 20.0], [0.0, 0.0])
        # slave with a huge own queue: raw rate far negative, clamps to 5
        rates = hero.update([10.0, 10.0], [300.0, 20.0], [0.0, 0.0])
        assert hero.modes == ["slave", "master"]
        assert rates[0] == 5.0

    def test_bumpless_handover_on_release(self):
        hero = self.make(n=2)
        hero.update([10.0, 10.0], [0.0, 20.0], [0.0, 0.0])
        rates_slaved = hero.update([10.0, 10.0], [0.0, 20.0], [3.0, 0.0])
        # release, then the local law resumes from the slave rate
        rates_free = hero.update([10.0, 10.0], [0.0, 1.0], [0.0, 0.0])
        assert hero.modes == ["normal", "normal"]
        assert rates_free[0] == pytest.approx(rates_slaved[0])

    def test_master_keeps_local_law(self):
        solo = AlineaController(RampMeterParams())
        hero = self.make(n=2)
        hero.update([10.0, 12.0], [0.0, 20.0], [0.0, 0.0])
        assert hero.modes[1] == "master"
        assert hero.children[1].rate == pytest.approx(solo.update(12.0))

    def test_period_must_match_child_cycle(self):
        children = [AlineaController(RampMeterParams(cycle_s=30.0))]
        with pytest.raises(ConfigurationError, match="period"):
            HeroCoordinator(children, q_sat=[0.5], params=HeroParams())

    def test_threshold_ordering_enforced(self):
        with pytest.raises(ConfigurationError, match="hysteresis"):
            HeroParams(activation_queue_m=5.0, release_queue_m=10.0)

    def test_input_length_mismatch(self):
        hero = self.make(n=2)
        with pytest.raises(ContractError):
            hero.update([10.0], [0.0, 0.0], [0.0, 0.0])
