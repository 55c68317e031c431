"""Replication, calibration, and paired-comparison machinery tests."""

import statistics

import numpy as np
import pytest

from trafficbench.errors import (
    ConfigurationError,
    ContractError,
    DegenerateStatisticsWarning,
)
from trafficbench.experiments import (
    CalibrationReport,
    ControllerConfig,
    ObjectiveSpec,
    RunRecord,
    SeedSet,
    compare_controllers,
    compare_records,
    grid_search,
    run_replications,
)
from trafficbench.scenarios import build_freeway_corridor
from trafficbench.urban import (
    EXIT,
    IntersectionSpec,
    LinkSpec,
    PhaseSpec,
    UrbanNetwork,
)


def tiny_freeway(**kw):
    defaults = dict(demand="peak", warmup_s=60.0, horizon_s=240.0)
    defaults.update(kw)
    return build_freeway_corridor(**defaults)


def tiny_urban(p_arrival=0.4):
    """One intersection fed by two sources; Bernoulli arrivals at p."""
    return UrbanNetwork(
        intersections=(IntersectionSpec(
            node_id="n1",
            phases=(PhaseSpec(served=("A",)), PhaseSpec(served=("C",))),
        ),),
        links=(
            LinkSpec(link_id="A", length_m=150.0, freeflow_tt_s=2.0,
                     to_node="n1"),
            LinkSpec(link_id="C", length_m=150.0, freeflow_tt_s=2.0,
                     to_node="n1"),
            LinkSpec(link_id="B", length_m=150.0, freeflow_tt_s=2.0,
                     from_node="n1"),
        ),
        turn_ratios={"A": {"B": 1.0}, "C": {"B": 0.6, EXIT: 0.4}},
        sources={"A": ((0.0, p_arrival),), "C": ((0.0, p_arrival),)},
        dt=0.25,
        warmup_s=30.0,
        horizon_s=120.0,
    )


class TestSeedSet:
    def test_default_is_twenty_distinct_ordered(self):
        s = SeedSet.default()
        assert s.seeds == tuple(range(20))
        assert len(s) == 20

    def test_order_preserved(self):
        assert SeedSet((3, 1, 2)).seeds == (3, 1, 2)

    def test_duplicates_rejected(self):
        with pytest.raises(ConfigurationError, match="distinct"):
            SeedSet((1, 2, 1))

    def test_empty_rejected(self):
        with pytest.raises(ConfigurationError, match="empty"):
            SeedSet(())


class TestObjectiveSpec:
    def test_default_terms(self):
        spec = ObjectiveSpec()
        assert spec.terms == (("mean_queue_m", 1.0),
                              ("mean_occ_violation_pct", 5.0))

    def test_weighted_sum(self):
        spec = ObjectiveSpec()
        value = spec.value({"mean_queue_m": 3.0,
                            "mean_occ_violation_pct": 2.0})
        assert value == 3.0 + 5.0 * 2.0

    def test_mapping_input_accepted(self):
        spec = ObjectiveSpec({"total_time_spent_veh_s": 2.0})
        assert spec.value({"total_time_spent_veh_s": 10.0}) == 20.0

    def test_missing_term_rejected(self):
        with pytest.raises(ConfigurationError, match="mean_occ_violation"):
            ObjectiveSpec().value({"mean_queue_m": 3.0})

    def test_negative_weight_rejected(self):
        with pytest.raises(ConfigurationError, match=">= 0"):
            ObjectiveSpec((("mean_queue_m", -1.0),))

    def test_empty_rejected(self):
        with pytest.raises(ConfigurationError, match="term"):
            ObjectiveSpec(())

    def test_scaling_weights_scales_value_linearly(self):
        metrics = {"mean_queue_m": 4.0, "mean_occ_violation_pct": 1.5}
        base = ObjectiveSpec()
        for lam in (0.5, 2.0, 10.0):
            scaled = ObjectiveSpec(tuple((k, w * lam) for k, w in base.terms))
            assert scaled.value(metrics) == pytest.approx(
                lam * base.value(metrics))


class TestControllerConfig:
    def test_name_includes_overrides(self):
        cfg = ControllerConfig("alinea", (("k_p", 25.0),))
        assert cfg.name == "alinea[k_p=25]"
        assert ControllerConfig("none").name == "none"

    def test_label_wins(self):
        cfg = ControllerConfig("alinea", (("k_p", 25.0),), label="tuned")
        assert cfg.name == "tuned"

    def test_with_params_merges_and_overrides(self):
        cfg = ControllerConfig("alinea", (("k_p", 25.0),))
        out = cfg.with_params(k_p=30.0, target_occupancy=12.0)
        assert dict(out.params) == {"k_p": 30.0, "target_occupancy": 12.0}

    def test_unknown_controller_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown controller"):
            ControllerConfig("magic")

    def test_duplicate_params_rejected(self):
        with pytest.raises(ConfigurationError, match="duplicate"):
            ControllerConfig("alinea", (("k_p", 5.0), ("k_p", 6.0)))


class TestRunReplications:
    def test_one_record_per_seed_in_order(self):
        records = run_replications(tiny_urban(), ControllerConfig("none"),
                                   seeds=(4, 2, 9))
        assert [r.seed for r in records] == [4, 2, 9]
        assert all(r.config == "none" for r in records)

    def test_records_reproduce_exactly(self):
        scn = tiny_urban()
        cfg = ControllerConfig("none")
        a = run_replications(scn, cfg, seeds=(0, 1))
        b = run_replications(scn, cfg, seeds=(0, 1))
        assert a == b

    def test_objective_matches_metrics(self):
        spec = ObjectiveSpec({"mean_queue_m": 1.0,
                              "total_time_spent_veh_s": 0.01})
        records = run_replications(tiny_urban(), ControllerConfig("none"),
                                   seeds=(0,), objective=spec)
        rec = records[0]
        assert rec.objective == pytest.approx(spec.value(rec.metrics))

    def test_deterministic_scenario_has_zero_spread(self):
        # arrival probability 1: every second brings a vehicle, no
        # stochastic channel is left and seeds cannot matter
        records = run_replications(tiny_urban(p_arrival=1.0),
                                   ControllerConfig("none"),
                                   seeds=(0, 1, 2))
        values = [r.objective for r in records]
        assert statistics.stdev(values) == 0.0

    def test_config_error_names_offender(self):
        bad = ControllerConfig("alinea", (("k_p", 30.0), ("bogus", 1.0)))
        with pytest.raises(ConfigurationError,
                           match=r"alinea\[.*bogus.*seed 0"):
            run_replications(tiny_freeway(), bad, seeds=(0,))

    def test_freeway_metrics_present(self):
        records = run_replications(tiny_freeway(), ControllerConfig("alinea"),
                                   seeds=(0,))
        keys = set(records[0].metrics)
        assert {"mean_queue_m", "mean_occ_violation_pct",
                "total_time_spent_veh_s", "throughput_veh"} <= keys


def synthetic_quadratic(params, seed):
    rng = np.random.default_rng(seed)
    return (params["k_p"] - 10.0) ** 2 + rng.normal(0.0, 2.0)


class TestGridSearchSynthetic:
    def test_recovers_known_minimum(self):
        report = grid_search(
            tiny_freeway(), ControllerConfig("alinea"),
            {"k_p": range(5, 51, 5)}, seeds=SeedSet.default(),
            evaluate=synthetic_quadratic)
        assert len(report.rows) == 10
        assert report.best_params == {"k_p": 10.0}

    def test_rows_keep_grid_order(self):
        report = grid_search(
            tiny_freeway(), ControllerConfig("alinea"),
            {"k_p": (50.0, 5.0, 20.0)}, seeds=(0, 1),
            evaluate=lambda p, s: p["k_p"])
        assert [r.params for r in report.rows] == [
            (("k_p", 50.0),), (("k_p", 5.0),), (("k_p", 20.0),)]
        assert report.best_params == {"k_p": 5.0}

    def test_tie_goes_to_smaller_value(self):
        report = grid_search(
            tiny_freeway(), ControllerConfig("alinea"),
            {"k_p": (50.0, 5.0)}, seeds=(0, 1),
            evaluate=lambda p, s: 7.0)
        assert report.best_params == {"k_p": 5.0}

    def test_multi_axis_tie_lexicographic(self):
        report = grid_search(
            tiny_freeway(), ControllerConfig("pi_alinea"),
            {"k_p": (20.0, 10.0), "k_i": (8.0, 3.0)}, seeds=(0, 1),
            evaluate=lambda p, s: 0.0)
        assert report.best_params == {"k_p": 10.0, "k_i": 3.0}

    def test_single_point_grid(self):
        report = grid_search(
            tiny_freeway(), ControllerConfig("alinea"),
            {"k_p": (30.0,)}, seeds=(0, 1, 2),
            evaluate=synthetic_quadratic)
        assert len(report.rows) == 1
        assert report.best == report.rows[0]
        assert report.rows[0].n == 3

    def test_sd_uses_sample_denominator(self):
        report = grid_search(
            tiny_freeway(), ControllerConfig("alinea"),
            {"k_p": (30.0,)}, seeds=(0, 1, 2, 3),
            evaluate=synthetic_quadratic)
        values = [synthetic_quadratic({"k_p": 30.0}, s) for s in range(4)]
        assert report.rows[0].mean == pytest.approx(statistics.mean(values))
        assert report.rows[0].sd == pytest.approx(statistics.stdev(values))

    def test_empty_grid_rejected(self):
        with pytest.raises(ConfigurationError, match="grid"):
            grid_search(tiny_freeway(), ControllerConfig("alinea"), {})
        with pytest.raises(ConfigurationError, match="axis"):
            grid_search(tiny_freeway(), ControllerConfig("alinea"),
                        {"k_p": ()})

    def test_csv_embeds_seeds_and_reproduces(self):
        def make():
            return grid_search(
                tiny_freeway(), ControllerConfig("alinea"),
                {"k_p": (10.0, 20.0)}, seeds=(3, 1, 4),
                evaluate=synthetic_quadratic)
        a, b = make().to_csv(), make().to_csv()
        assert a == b
        assert "# seeds: 3,1,4" in a
        assert "config,mean,sd,n" in a
        assert len([ln for ln in a.splitlines()
                    if not ln.startswith("#")]) == 3

    def test_table_lists_best(self):
        report = grid_search(
            tiny_freeway(), ControllerConfig("alinea"),
            {"k_p": (10.0, 20.0)}, seeds=(0, 1),
            evaluate=lambda p, s: p["k_p"])
        text = report.to_table()
        assert "best: alinea[k_p=10]" in text
        assert "seeds: 0,1" in text


class TestGridSearchSimulated:
    def test_real_runs_fill_report(self):
        report = grid_search(
            tiny_freeway(), ControllerConfig("alinea"),
            {"k_p": (20.0, 40.0)}, seeds=(0, 1))
        assert len(report.rows) == 2
        for row in report.rows:
            assert row.n == 2
            assert np.isfinite(row.mean) and row.sd >= 0.0
        assert len(report.records) == 4

    def test_parallel_matches_serial(self):
        kw = dict(parameter_grid={"k_p": (20.0, 40.0)}, seeds=(0, 1))
        serial = grid_search(tiny_freeway(), ControllerConfig("alinea"), **kw)
        parallel = grid_search(tiny_freeway(), ControllerConfig("alinea"),
                               jobs=2, **kw)
        assert serial.rows == parallel.rows
        assert serial.records == parallel.records
        assert serial.to_csv() == parallel.to_csv()


def fake_record(config, seed, value):
    return RunRecord(config=config, seed=seed,
                     metrics={"mean_queue_m": value}, objective=value)


class TestCompareRecords:
    def test_hand_checked_paired_t(self):
        a = [fake_record("a", s, v) for s, v in zip((0, 1, 2), (2.0, 4.0, 6.0))]
        b = [fake_record("b", s, v) for s, v in zip((0, 1, 2), (1.0, 2.0, 3.0))]
        report = compare_records(a, b, "mean_queue_m")
        # diffs (1, 2, 3): mean 2, sd 1, t = 2 / (1/sqrt(3))
        assert report.mean_diff == pytest.approx(2.0)
        assert report.test.statistic == pytest.approx(3.464, abs=1e-3)
        assert report.test.df == 2
        assert report.test.p_two_sided == pytest.approx(0.074, abs=1e-3)

    def test_identical_records_flag_degenerate(self):
        a = [fake_record("a", s, 5.0) for s in range(4)]
        b = [fake_record("b", s, 5.0) for s in range(4)]
        with pytest.warns(DegenerateStatisticsWarning):
            report = compare_records(a, b, "mean_queue_m")
        assert report.mean_diff == 0.0
        assert report.test.degenerate

    def test_seed_mismatch_rejected(self):
        a = [fake_record("a", s, 1.0) for s in (0, 1)]
        b = [fake_record("b", s, 1.0) for s in (0, 2)]
        with pytest.raises(ContractError, match="seed"):
            compare_records(a, b, "mean_queue_m")

    def test_wilcoxon_selectable(self):
        a = [fake_record("a", s, v) for s, v in enumerate((5.0, 6.0, 7.0, 8.0))]
        b = [fake_record("b", s, v) for s, v in enumerate((1.0, 2.0, 3.0, 4.0))]
        report = compare_records(a, b, "mean_queue_m", method="wilcoxon")
        assert "wilcoxon" in report.test.method

    def test_unknown_method_rejected(self):
        a = [fake_record("a", s, 1.0) for s in (0, 1)]
        with pytest.raises(ConfigurationError, match="method"):
            compare_records(a, a, "mean_queue_m", method="anova")

    def test_csv_shape(self):
        a = [fake_record("a", s, float(s)) for s in range(5)]
        b = [fake_record("b", s, 0.0) for s in range(5)]
        text = compare_records(a, b, "mean_queue_m").to_csv()
        body = [ln for ln in text.splitlines() if not ln.startswith("#")]
        assert body[0] == "seed,value_a,value_b,diff"
        assert len(body) == 6
        assert "# seeds: 0,1,2,3,4" in text


class TestCompareControllers:
    def test_paired_run_over_shared_seeds(self):
        report = compare_controllers(
            tiny_freeway(), ControllerConfig("none"),
            ControllerConfig("alinea"), seeds=(0, 1, 2),
            metric="total_time_spent_veh_s")
        assert len(report.pairs) == 3
        assert [p[0] for p in report.pairs] == [0, 1, 2]
        assert report.label_a == "none" and report.label_b == "alinea"
        for _, a, b, diff in report.pairs:
            assert diff == pytest.approx(a - b)

    def test_same_config_is_degenerate(self):
        cfg = ControllerConfig("none")
        with pytest.warns(DegenerateStatisticsWarning):
            report = compare_controllers(tiny_urban(), cfg, cfg,
                                         seeds=(0, 1, 2))
        assert all(p[3] == 0.0 for p in report.pairs)
        assert report.test.degenerate
