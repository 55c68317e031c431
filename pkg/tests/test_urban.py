"""Urban network simulator tests with hand-derived movement quanta."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trafficbench.errors import ConfigurationError, ContractError
from trafficbench.urban import (
    EXIT,
    GREEN,
    RED,
    YELLOW,
    IntersectionSpec,
    LinkSpec,
    PhaseSpec,
    UrbanNetwork,
    apply_signal_plan,
    init_urban_state,
    read_pressures,
    read_saturation,
    set_phase,
    step_urban,
)


def one_node_network(**kw):
    """Two source approaches into one intersection, one outbound link."""
    defaults = dict(
        intersections=(IntersectionSpec(
            node_id="n1",
            phases=(PhaseSpec(served=("A",)), PhaseSpec(served=("C",))),
        ),),
        links=(
            LinkSpec(link_id="A", length_m=150.0, freeflow_tt_s=2.0, to_node="n1"),
            LinkSpec(link_id="C", length_m=150.0, freeflow_tt_s=2.0, to_node="n1"),
            LinkSpec(link_id="B", length_m=150.0, freeflow_tt_s=2.0, from_node="n1"),
        ),
        turn_ratios={"A": {"B": 1.0}, "C": {"B": 0.6, EXIT: 0.4}},
        sources={"A": ((0.0, 0.0),), "C": ((0.0, 0.0),)},
        dt=0.25,
        warmup_s=0.0,
        horizon_s=600.0,
    )
    defaults.update(kw)
    return UrbanNetwork(**defaults)


def chain_network(**kw):
    """Source -> n1 -> short link -> n2 -> out, for spillback tests."""
    defaults = dict(
        intersections=(
            IntersectionSpec(node_id="n1", phases=(PhaseSpec(served=("A",)),)),
            IntersectionSpec(node_id="n2", phases=(
                PhaseSpec(served=("B",)), PhaseSpec(served=("D",)),
            )),
        ),
        links=(
            LinkSpec(link_id="A", length_m=300.0, freeflow_tt_s=1.0,
                     to_node="n1", sat_flow=1.0, storage_veh=100.0),
            LinkSpec(link_id="B", length_m=15.0, freeflow_tt_s=1.0,
                     from_node="n1", to_node="n2", sat_flow=1.0, storage_veh=2.0),
            LinkSpec(link_id="C", length_m=150.0, freeflow_tt_s=1.0,
                     from_node="n2"),
            LinkSpec(link_id="D", length_m=150.0, freeflow_tt_s=1.0,
                     to_node="n2", sat_flow=1.0, storage_veh=50.0),
        ),
        turn_ratios={"A": {"B": 1.0}, "B": {"C": 1.0}, "D": {"C": 1.0}},
        sources={"A": ((0.0, 1.0),), "D": ((0.0, 0.0),)},
        dt=0.25,
        warmup_s=0.0,
        horizon_s=600.0,
    )
    defaults.update(kw)
    return UrbanNetwork(**defaults)


class TestDischarge:
    def test_green_discharge_quantum(self):
        # queue 10, sat 0.5 veh/s, dt 0.25: exactly 0.125 veh per step
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        s.queue[s.link_index["A"]] = 10.0
        s.totals[s.link_index["A"]] = 10.0
        set_phase(s, net, "n1", 0)
        step_urban(s, net)
        assert s.queue[s.link_index["A"]] == pytest.approx(10.0 - 0.125)

    def test_red_link_does_not_discharge(self):
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        s.queue[s.link_index["C"]] = 10.0
        s.totals[s.link_index["C"]] = 10.0
        set_phase(s, net, "n1", 0)       # phase 0 serves A, not C
        step_urban(s, net)
        assert s.queue[s.link_index["C"]] == 10.0

    def test_exit_share_leaves_network(self):
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        s.queue[s.link_index["C"]] = 10.0
        s.totals[s.link_index["C"]] = 10.0
        set_phase(s, net, "n1", 1)
        for _ in range(12):                  # 3 s transition first
            step_urban(s, net)
        assert s.exited.value == 0.0
        step_urban(s, net)
        # 0.125 discharged: 40 percent leaves, 60 percent routed to B
        assert s.exited.value == pytest.approx(0.4 * 0.125)
        assert s.totals[s.link_index["B"]] == pytest.approx(0.6 * 0.125)

    def test_empty_queue_moves_nothing(self):
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        set_phase(s, net, "n1", 0)
        step_urban(s, net)
        assert s.exited.value == 0.0


class TestDelayLine:
    def test_freeflow_travel_time(self):
        # a vehicle spawned at t=0 on a 2 s line surfaces in the queue
        # at t=2, not earlier
        net = one_node_network(sources={"A": ((0.0, 1.0), (1.0, 0.0)),
                                        "C": ((0.0, 0.0),)})
        s = init_urban_state(net, seed=1)
        set_phase(s, net, "n1", 1)           # A stays red: no discharge
        a = s.link_index["A"]
        seen = []
        for _ in range(10):                   # 2.5 s
            step_urban(s, net)
            seen.append(float(s.queue[a]))
        # 2 s = 8 steps of delay; the spawn happens in step 0
        assert seen[6] == 0.0
        assert seen[7] == 0.0
        assert seen[8] == 1.0

    def test_exit_at_line_end_without_node(self):
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        b = s.link_index["B"]
        # place a cohort directly on B's delay line
        s.rings[b][s.ring_ptr[b]] = 3.0
        s.totals[b] = 3.0
        step_urban(s, net)
        assert s.exited.value == pytest.approx(3.0)
        assert s.totals[b] == 0.0


class TestSpillback:
    def test_full_link_blocks_upstream_discharge(self):
        net = chain_network()
        s = init_urban_state(net, seed=1)
        set_phase(s, net, "n1", 0)           # A green forever
        set_phase(s, net, "n2", 1)           # B never green
        b = s.link_index["B"]
        a = s.link_index["A"]
        for _ in range(net.n_steps // 2):
            step_urban(s, net)
            assert s.totals[b] <= 2.0 + 1e-9
        # B saturated at its storage and A backing up
        assert s.totals[b] == pytest.approx(2.0)
        assert s.queue[a] > 5.0
        assert s.conservation_residual() <= 1e-9

    def test_blocked_share_stays_in_queue(self):
        net = chain_network()
        s = init_urban_state(net, seed=1)
        a, b = s.link_index["A"], s.link_index["B"]
        s.queue[a] = 10.0
        s.totals[a] = 10.0
        s.totals[b] = 2.0                    # full before anything moves
        s.rings[b][0] = 2.0
        set_phase(s, net, "n1", 0)
        set_phase(s, net, "n2", 1)
        step_urban(s, net)
        assert s.queue[a] == pytest.approx(10.0)


class TestSignalPlans:
    def test_cycle_segment_lengths(self):
        net = one_node_network(
            intersections=(IntersectionSpec(
                node_id="n1",
                phases=(PhaseSpec(served=("A",)), PhaseSpec(served=("C",)),
                        PhaseSpec(served=("A",))),
            ),),
        )
        s = init_urban_state(net, seed=1)
        apply_signal_plan(s, net, "n1", greens=[30.0, 30.0, 21.0],
                          cycle_s=120.0, offset_s=0.0, anchor_s=0.0)
        counts = {}
        for _ in range(480):                  # one full 120 s cycle
            step_urban(s, net)
            phase, color = s.current_display["n1"]
            counts[(phase, color)] = counts.get((phase, color), 0) + 1
        assert counts[(0, GREEN)] == 120      # 30 s
        assert counts[(0, YELLOW)] == 12      # 3 s
        assert counts[(1, GREEN)] == 120
        assert counts[(2, GREEN)] == 84       # 21 s
        assert counts[(None, RED)] == 120     # 30 s slack
        assert sum(counts.values()) == 480

    def test_offset_delays_first_onset(self):
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        apply_signal_plan(s, net, "n1", greens=[30.0, 81.0], cycle_s=120.0,
                          offset_s=10.0, anchor_s=0.0)
        displays = []
        for _ in range(48):                   # 12 s
            step_urban(s, net)
            displays.append(s.current_display["n1"])
        # before the offset the schedule position sits in the cycle tail
        assert displays[0] != (0, GREEN)
        assert displays[39] != (0, GREEN)     # t = 9.75
        assert displays[40] == (0, GREEN)     # t = 10.0
        assert all(d == (0, GREEN) for d in displays[40:])

    def test_plan_must_fit_cycle(self):
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        with pytest.raises(ContractError, match="cannot fit"):
            apply_signal_plan(s, net, "n1", greens=[60.0, 60.0], cycle_s=120.0)

    def test_plan_green_count_must_match_phases(self):
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        with pytest.raises(ContractError):
            apply_signal_plan(s, net, "n1", greens=[30.0], cycle_s=120.0)


class TestDirectPhases:
    def test_transition_lasts_exactly_t_l(self):
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        set_phase(s, net, "n1", 0)
        step_urban(s, net)
        set_phase(s, net, "n1", 1)
        colors = []
        for _ in range(14):
            step_urban(s, net)
            colors.append(s.current_display["n1"])
        # 3 s of yellow attributed to the outgoing phase, then green
        assert colors[:12] == [(0, YELLOW)] * 12
        assert colors[12] == (1, GREEN)

    def test_no_discharge_during_transition(self):
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        a = s.link_index["A"]
        s.queue[a] = 10.0
        s.totals[a] = 10.0
        set_phase(s, net, "n1", 0)
        step_urban(s, net)
        after_green = float(s.queue[a])
        set_phase(s, net, "n1", 1, force_transition=True)
        for _ in range(12):                   # the whole yellow interval
            step_urban(s, net)
        assert float(s.queue[a]) == after_green

    def test_same_phase_is_noop_without_force(self):
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        set_phase(s, net, "n1", 0)
        step_urban(s, net)
        set_phase(s, net, "n1", 0)
        step_urban(s, net)
        assert s.current_display["n1"] == (0, GREEN)

    def test_force_reenters_through_transition(self):
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        set_phase(s, net, "n1", 0)
        step_urban(s, net)
        set_phase(s, net, "n1", 0, force_transition=True)
        step_urban(s, net)
        assert s.current_display["n1"] == (0, YELLOW)

    def test_command_during_transition_rejected(self):
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        set_phase(s, net, "n1", 0)
        step_urban(s, net)
        set_phase(s, net, "n1", 1)
        step_urban(s, net)
        with pytest.raises(ContractError, match="transition"):
            set_phase(s, net, "n1", 0)

    def test_phase_out_of_range(self):
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        with pytest.raises(ContractError):
            set_phase(s, net, "n1", 5)


class TestReadings:
    def test_pressure_sums_served_queues(self):
        net = one_node_network(
            intersections=(IntersectionSpec(
                node_id="n1",
                phases=(PhaseSpec(served=("A", "C")), PhaseSpec(served=("C",))),
            ),),
        )
        s = init_urban_state(net, seed=1)
        s.queue[s.link_index["A"]] = 4.0
        s.queue[s.link_index["C"]] = 6.0
        # the shared link C counts in both phases
        assert read_pressures(s, net, "n1") == [10.0, 6.0]

    def test_saturation_formula(self):
        # degree = (discharged + residual) / (sat_flow * green):
        # (6 + 1.5) / (0.5 * 20) = 0.75
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        a = s.link_index["A"]
        s.green_time[a] = 20.0
        s.discharged_green[a] = 6.0
        s.residual_green_end[a] = 1.5
        s.was_green[a] = True
        reading = read_saturation(s, net, "n1")["A"]
        assert reading.degree == pytest.approx(0.75)
        assert not reading.degenerate

    def test_saturation_can_exceed_one(self):
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        a = s.link_index["A"]
        s.green_time[a] = 20.0
        s.discharged_green[a] = 9.0
        s.residual_green_end[a] = 6.0
        s.was_green[a] = True
        assert read_saturation(s, net, "n1")["A"].degree == pytest.approx(1.5)

    def test_never_green_is_degenerate_zero(self):
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        reading = read_saturation(s, net, "n1")["A"]
        assert reading.degree == 0.0
        assert reading.degenerate

    def test_read_resets_window(self):
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        a = s.link_index["A"]
        s.green_time[a] = 20.0
        s.discharged_green[a] = 6.0
        s.was_green[a] = True
        read_saturation(s, net, "n1")
        second = read_saturation(s, net, "n1")["A"]
        assert second.degenerate
        assert second.discharged_veh == 0.0

    def test_ongoing_green_uses_current_queue_as_residual(self):
        net = one_node_network()
        s = init_urban_state(net, seed=1)
        a = s.link_index["A"]
        s.queue[a] = 3.0
        s.totals[a] = 3.0
        set_phase(s, net, "n1", 0)
        for _ in range(8):
            step_urban(s, net)
        reading = read_saturation(s, net, "n1")["A"]
        assert reading.residual_veh == pytest.approx(float(s.queue[a]))
        assert reading.green_s == pytest.approx(2.0)


class TestConservationAndDeterminism:
    def _run(self, seed, steps=1200, p=0.6):
        net = one_node_network(sources={"A": ((0.0, p),), "C": ((0.0, p),)})
        s = init_urban_state(net, seed=seed)
        apply_signal_plan(s, net, "n1", greens=[20.0, 34.0], cycle_s=60.0,
                          anchor_s=0.0)
        for _ in range(steps):
            step_urban(s, net)
        return s

    def test_conservation(self):
        for seed in (1, 2, 3):
            s = self._run(seed)
            assert s.conservation_residual() <= 1e-9

    def test_totals_match_queue_plus_line(self):
        s = self._run(4)
        for z in range(len(s.totals)):
            assert s.totals[z] == pytest.approx(
                float(s.queue[z] + s.rings[z].sum()), abs=1e-9
            )

    def test_capacity_never_exceeded(self):
        net = chain_network()
        s = init_urban_state(net, seed=9)
        set_phase(s, net, "n1", 0)
        set_phase(s, net, "n2", 1)
        for _ in range(1200):
            step_urban(s, net)
            assert (s.totals <= s.capacity + 1e-9).all()

    def test_same_seed_bit_identical(self):
        a = self._run(7)
        b = self._run(7)
        assert np.array_equal(a.queue, b.queue)
        assert a.entered.value == b.entered.value
        assert a.exited.value == b.exited.value

    def test_different_seeds_differ(self):
        a = self._run(7)
        b = self._run(8)
        assert a.entered.value != b.entered.value or not np.array_equal(a.queue, b.queue)

    @given(seed=st.integers(0, 10_000), p=st.floats(0.0, 1.0))
    @settings(max_examples=20, deadline=None)
    def test_conservation_property(self, seed, p):
        s = self._run(seed, steps=400, p=p)
        assert s.conservation_residual() <= 1e-9


class TestNetworkValidation:
    def test_turn_ratios_must_sum_to_one(self):
        with pytest.raises(ConfigurationError, match="sum"):
            one_node_network(turn_ratios={"A": {"B": 0.5}, "C": {"B": 0.6, EXIT: 0.4}})

    def test_missing_turn_ratios_rejected(self):
        with pytest.raises(ConfigurationError, match="missing"):
            one_node_network(turn_ratios={"C": {"B": 0.6, EXIT: 0.4}})

    def test_destination_must_leave_node(self):
        with pytest.raises(ConfigurationError):
            one_node_network(turn_ratios={"A": {"A": 1.0},
                                          "C": {"B": 0.6, EXIT: 0.4}})

    def test_phase_link_must_enter_intersection(self):
        with pytest.raises(ConfigurationError, match="enter"):
            one_node_network(
                intersections=(IntersectionSpec(
                    node_id="n1", phases=(PhaseSpec(served=("B",)),),
                ),),
            )

    def test_source_must_start_outside(self):
        with pytest.raises(ConfigurationError, match="outside"):
            one_node_network(sources={"B": ((0.0, 0.5),)})

    def test_dt_must_divide_second(self):
        with pytest.raises(ConfigurationError, match="divide"):
            one_node_network(dt=0.3)
