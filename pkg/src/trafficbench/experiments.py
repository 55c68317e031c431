"""Replication runs, objective scoring, grid calibration, paired comparison.

Everything here treats one seeded closed-loop run as an opaque job that
yields a metric dict, so freeway and arterial scenarios go through the
same machinery. Jobs may fan out to worker processes; results are always
reduced in canonical (configuration, seed) order, so parallelism never
changes a report byte.
"""

from __future__ import annotations

import dataclasses
import itertools
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from . import __version__
from .errors import ConfigurationError, ContractError
from .freeway import FreewayScenario, freeway_metrics
from .ramp_control import HeroParams, RampMeterParams
from .runner import (FREEWAY_CONTROLLERS, URBAN_CONTROLLERS, run_freeway,
                     run_urban)
from .scenarios import ArterialScenario
from .signal_control import ScootScatsParams
from .stats import SampleSummary, TestResult, t_paired, wilcoxon_signed_rank
from .urban import UrbanNetwork, urban_metrics

__all__ = [
    "SeedSet",
    "ObjectiveSpec",
    "ControllerConfig",
    "RunRecord",
    "CalibrationRow",
    "CalibrationReport",
    "ComparisonReport",
    "run_replications",
    "run_trace",
    "freeway_control_setup",
    "grid_search",
    "compare_records",
    "compare_controllers",
]


@dataclass(frozen=True)
class SeedSet:
    """Ordered, distinct seeds reused verbatim across every configuration.

    Paired designs only work when each configuration sees the identical
    random draws, so the list is fixed up front and stamped into every
    report.
    """

    seeds: tuple[int, ...]

    def __post_init__(self):
        seeds = tuple(int(s) for s in self.seeds)
        object.__setattr__(self, "seeds", seeds)
        if not seeds:
            raise ConfigurationError("seed set must not be empty")
        if len(set(seeds)) != len(seeds):
            raise ConfigurationError(f"seeds must be distinct, got {seeds}")

    @classmethod
    def default(cls, n: int = 20, start: int = 0) -> "SeedSet":
        return cls(tuple(range(start, start + n)))

    def __iter__(self):
        return iter(self.seeds)

    def __len__(self) -> int:
        return len(self.seeds)


def _as_seed_set(seeds) -> SeedSet:
    if seeds is None:
        return SeedSet.default()
    if isinstance(seeds, SeedSet):
        return seeds
    return SeedSet(tuple(seeds))


@dataclass(frozen=True)
class ObjectiveSpec:
    """Weighted sum of run metrics, lower is better.

    The default scores mean queue length in metres at weight 1 and mean
    occupancy violation at weight 5, the trade-off used to calibrate
    proportional metering gains. Any metric the run record exposes can
    serve as a term.
    """

    terms: tuple[tuple[str, float], ...] = (
        ("mean_queue_m", 1.0),
        ("mean_occ_violation_pct", 5.0),
    )

    def __post_init__(self):
        terms = self.terms
        if isinstance(terms, Mapping):
            terms = tuple(terms.items())
        terms = tuple((str(k), float(w)) for k, w in terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise ConfigurationError("objective needs at least one term")
        for name, w in terms:
            if w < 0:
                raise ConfigurationError(
                    f"objective weight for {name!r} must be >= 0, got {w}")

    def value(self, metrics: Mapping[str, float]) -> float:
        total = 0.0
        for name, w in self.terms:
            if name not in metrics:
                raise ConfigurationError(
                    f"objective term {name!r} not among metrics "
                    f"{sorted(metrics)}")
            total += w * float(metrics[name])
        return total

    def describe(self) -> str:
        return " + ".join(f"{w:g}*{name}" for name, w in self.terms)


def _default_objective(scenario) -> ObjectiveSpec:
    if isinstance(scenario, FreewayScenario):
        return ObjectiveSpec()
    # arterial runs have no occupancy setpoint; queue length alone
    return ObjectiveSpec((("mean_queue_m", 1.0),))


def _freeze(value):
    """Nested sequences to nested tuples, scalars to float."""
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    return float(value)


# parameter names each controller accepts, used to route grid overrides
_METER_KEYS = frozenset(f.name for f in dataclasses.fields(RampMeterParams))
_HERO_KEYS = frozenset(f.name for f in dataclasses.fields(HeroParams))
_MP_FIXED_KEYS = frozenset({"cycle_s", "g_min", "g_max", "n_samples"})
_MP_FLEX_KEYS = frozenset({"g_min", "g_max", "t_a"})
_SCOOT_KEYS = frozenset(f.name for f in dataclasses.fields(ScootScatsParams))
_SCOOT_INT_KEYS = frozenset(
    f.name for f in dataclasses.fields(ScootScatsParams)
    if isinstance(f.default, int) and not isinstance(f.default, bool))


@dataclass(frozen=True)
class ControllerConfig:
    """One controller choice plus named numeric parameter overrides.

    Overrides apply on top of the controller's own defaults. The name
    identifies the configuration in records and reports; it defaults to
    the controller plus the override list.
    """

    controller: str
    params: tuple[tuple[str, float], ...] = ()
    label: str = ""
    gains: tuple[tuple[str, tuple], ...] = ()   # metaline matrices/targets

    def __post_init__(self):
        params = self.params
        if isinstance(params, Mapping):
            params = tuple(params.items())
        params = tuple((str(k), float(v)) for k, v in params)
        object.__setattr__(self, "params", params)
        gains = self.gains
        if isinstance(gains, Mapping):
            gains = tuple(gains.items())
        gains = tuple((str(k), _freeze(v)) for k, v in gains)
        object.__setattr__(self, "gains", gains)
        if self.controller not in FREEWAY_CONTROLLERS + URBAN_CONTROLLERS:
            raise ConfigurationError(
                f"unknown controller {self.controller!r}; freeway kinds are "
                f"{FREEWAY_CONTROLLERS}, arterial kinds are "
                f"{URBAN_CONTROLLERS}")
        if gains and self.controller != "metaline":
            raise ConfigurationError(
                f"gain matrices only apply to metaline, not "
                f"{self.controller!r}")
        for key, _ in gains:
            if key not in ("k_p", "k_i", "targets"):
                raise ConfigurationError(
                    f"unknown gain entry {key!r}; use k_p, k_i, targets")
        seen = [k for k, _ in params]
        if len(set(seen)) != len(seen):
            raise ConfigurationError(f"duplicate parameter names in {seen}")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        parts = [f"{k}={v:g}" for k, v in self.params]
        parts += [f"{k}=matrix" for k, _ in self.gains]
        if not parts:
            return self.controller
        return f"{self.controller}[{','.join(parts)}]"

    def with_params(self, **overrides) -> "ControllerConfig":
        merged = dict(self.params)
        merged.update({k: float(v) for k, v in overrides.items()})
        return dataclasses.replace(self, params=tuple(merged.items()),
                                   label="")


@dataclass(frozen=True)
class RunRecord:
    """Metrics and objective of one (configuration, seed) run."""

    config: str
    seed: int
    metrics: Mapping[str, float]
    objective: float

    def metric(self, name: str) -> float:
        if name not in self.metrics:
            raise ConfigurationError(
                f"run record has no metric {name!r}; available: "
                f"{sorted(self.metrics)}")
        return float(self.metrics[name])


def _split_params(config: ControllerConfig, allowed_groups):
    """Partition overrides into the given key groups; reject strays."""
    groups = [dict() for _ in allowed_groups]
    for key, value in config.params:
        for group, keys in zip(groups, allowed_groups):
            if key in keys:
                group[key] = value
                break
        else:
            known = sorted(set().union(*allowed_groups))
            raise ConfigurationError(
                f"{config.controller} takes no parameter {key!r}; "
                f"known names: {known}")
    return groups


def freeway_control_setup(config: ControllerConfig):
    """Resolve overrides into (meter, hero, gains) runner arguments."""
    meter_over, hero_over = _split_params(config, (_METER_KEYS, _HERO_KEYS))
    base = (RampMeterParams(k_i=5.0)
            if config.controller in ("pi_alinea", "metaline")
            else RampMeterParams())
    meter = dataclasses.replace(base, **meter_over)
    hero = (dataclasses.replace(HeroParams(period_s=meter.cycle_s),
                                **hero_over)
            if hero_over else None)
    gains = ({k: np.asarray(v) for k, v in config.gains}
             if config.gains else None)
    return meter, hero, gains


def run_trace(scenario, config: ControllerConfig, seed: int, **record):
    """One seeded closed-loop run, returned as the raw trace.

    ``record`` forwards recording switches (record_density for freeway,
    record_link_queues for arterial) to the runner.
    """
    if isinstance(scenario, FreewayScenario):
        if config.controller not in FREEWAY_CONTROLLERS:
            raise ConfigurationError(
                f"{config.controller!r} is a signal controller; freeway "
                f"scenarios take one of {FREEWAY_CONTROLLERS}")
        meter, hero, gains = freeway_control_setup(config)
        return run_freeway(scenario, controller=config.controller, seed=seed,
                           meter_params=meter, hero_params=hero,
                           metaline_gains=gains, **record)
    if isinstance(scenario, (ArterialScenario, UrbanNetwork)):
        if config.controller not in URBAN_CONTROLLERS:
            raise ConfigurationError(
                f"{config.controller!r} is a metering controller; arterial "
                f"scenarios take one of {URBAN_CONTROLLERS}")
        if config.controller == "none":
            (fixed_over,) = _split_params(config, (frozenset({"cycle_s"}),))
            return run_urban(scenario, controller="none", seed=seed,
                             fixed_cycle_s=fixed_over.get("cycle_s", 120.0),
                             **record)
        if config.controller == "mp_fixed":
            (mp,) = _split_params(config, (_MP_FIXED_KEYS,))
            if "n_samples" in mp:
                mp["n_samples"] = int(mp["n_samples"])
            return run_urban(scenario, controller="mp_fixed", seed=seed,
                             mp_params=mp, **record)
        if config.controller == "mp_flex":
            (mp,) = _split_params(config, (_MP_FLEX_KEYS,))
            return run_urban(scenario, controller="mp_flex", seed=seed,
                             mp_params=mp, **record)
        (over,) = _split_params(config, (_SCOOT_KEYS,))
        for key in list(over):
            if key in _SCOOT_INT_KEYS:
                over[key] = int(over[key])
        scoot = dataclasses.replace(ScootScatsParams(), **over)
        return run_urban(scenario, controller="scoot_scats", seed=seed,
                         scoot_params=scoot, **record)
    raise ConfigurationError(
        f"cannot run scenario of type {type(scenario).__name__}")


def _run_one(scenario, config: ControllerConfig, seed: int,
             objective: ObjectiveSpec) -> RunRecord:
    """Execute one seeded run and score it. Must stay picklable."""
    trace = run_trace(scenario, config, seed)
    if isinstance(scenario, FreewayScenario):
        meter, _, _ = freeway_control_setup(config)
        metrics = freeway_metrics(
            trace, target_occupancy=meter.target_occupancy).as_dict()
    else:
        metrics = urban_metrics(trace).as_dict()
    return RunRecord(config=config.name, seed=seed, metrics=metrics,
                     objective=objective.value(metrics))


def _guarded_run(scenario, config, seed, objective,
                 evaluate=None) -> RunRecord:
    try:
        if evaluate is None:
            return _run_one(scenario, config, seed, objective)
        value = float(evaluate(dict(config.params), seed))
        return RunRecord(config=config.name, seed=seed, metrics={},
                         objective=value)
    except (ConfigurationError, ContractError) as exc:
        raise type(exc)(f"{config.name}, seed {seed}: {exc}") from exc


def _job(args) -> RunRecord:
    return _guarded_run(*args)


def _run_many(scenario, tagged: Sequence[tuple], objective: ObjectiveSpec,
              jobs: int, evaluate=None) -> list[RunRecord]:
    """Run (config, seed) jobs, preserving input order in the result."""
    work = [(scenario, cfg, seed, objective, evaluate)
            for cfg, seed in tagged]
    if jobs <= 1 or len(work) <= 1:
        return [_job(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_job, work))


def run_replications(scenario, config: ControllerConfig, seeds=None,
                     objective: Optional[ObjectiveSpec] = None,
                     jobs: int = 1) -> list[RunRecord]:
    """One full run per seed, in seed-set order.

    Each record carries the raw post-warmup metrics plus the scalar
    objective; identical inputs reproduce identical records.
    """
    seed_set = _as_seed_set(seeds)
    objective = objective or _default_objective(scenario)
    tagged = [(config, s) for s in seed_set]
    return _run_many(scenario, tagged, objective, jobs)


@dataclass(frozen=True)
class CalibrationRow:
    config: str
    params: tuple[tuple[str, float], ...]
    mean: float
    sd: float
    n: int


@dataclass(frozen=True)
class CalibrationReport:
    """Per-configuration objective summary over one shared seed set."""

    rows: tuple[CalibrationRow, ...]
    best: CalibrationRow
    seeds: SeedSet
    objective: ObjectiveSpec
    records: tuple[RunRecord, ...] = ()

    @property
    def best_params(self) -> dict:
        return dict(self.best.params)

    def to_csv(self) -> str:
        lines = [
            f"# toolkit_version: {__version__}",
            f"# seeds: {','.join(str(s) for s in self.seeds)}",
            f"# objective: {self.objective.describe()}",
            "config,mean,sd,n",
        ]
        for row in self.rows:
            lines.append(f"{row.config},{row.mean!r},{row.sd!r},{row.n}")
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        header = ("configuration", "mean objective", "sd", "n")
        body = [(row.config, f"{row.mean:.3f}", f"{row.sd:.3f}", str(row.n))
                for row in self.rows]
        widths = [max(len(col), *(len(r[i]) for r in body))
                  for i, col in enumerate(header)]
        def fmt(cells):
            return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
        lines = [fmt(header), fmt(tuple("-" * w for w in widths))]
        lines += [fmt(r) for r in body]
        lines.append(f"best: {self.best.config} "
                     f"(mean objective {self.best.mean:.3f})")
        lines.append(f"seeds: {','.join(str(s) for s in self.seeds)}")
        return "\n".join(lines) + "\n"


def grid_search(scenario, base: ControllerConfig,
                parameter_grid: Mapping[str, Sequence[float]],
                seeds=None, objective: Optional[ObjectiveSpec] = None,
                jobs: int = 1,
                evaluate: Optional[Callable] = None) -> CalibrationReport:
    """Evaluate every grid point over the same seed set and rank them.

    Rows keep grid order (last axis fastest). Best is the smallest mean
    objective; exact ties go to the smaller parameter value tuple.
    ``evaluate(params_dict, seed) -> objective`` replaces the simulation
    when calibrating against a synthetic objective.
    """
    if not parameter_grid:
        raise ConfigurationError("parameter grid must not be empty")
    names = list(parameter_grid)
    axes = []
    for name in names:
        values = tuple(float(v) for v in parameter_grid[name])
        if not values:
            raise ConfigurationError(f"grid axis {name!r} has no values")
        axes.append(values)
    seed_set = _as_seed_set(seeds)
    objective = objective or _default_objective(scenario)

    points = list(itertools.product(*axes))
    configs = [base.with_params(**dict(zip(names, point)))
               for point in points]
    tagged = [(cfg, s) for cfg in configs for s in seed_set]
    records = _run_many(scenario, tagged, objective, jobs, evaluate)

    rows = []
    n = len(seed_set)
    for i, (point, cfg) in enumerate(zip(points, configs)):
        values = [r.objective for r in records[i * n:(i + 1) * n]]
        sd = statistics.stdev(values) if n > 1 else 0.0
        rows.append(CalibrationRow(
            config=cfg.name, params=tuple(zip(names, point)),
            mean=sum(values) / n, sd=sd, n=n))
    best = min(zip(rows, points), key=lambda rp: (rp[0].mean, rp[1]))[0]
    return CalibrationReport(rows=tuple(rows), best=best, seeds=seed_set,
                             objective=objective, records=tuple(records))


@dataclass(frozen=True)
class ComparisonReport:
    """Per-seed paired metric values for two configurations plus the test."""

    metric: str
    label_a: str
    label_b: str
    pairs: tuple[tuple[int, float, float, float], ...]  # seed, a, b, a - b
    summary_a: SampleSummary
    summary_b: SampleSummary
    mean_diff: float
    test: TestResult
    seeds: SeedSet

    def to_csv(self) -> str:
        lines = [
            f"# toolkit_version: {__version__}",
            f"# seeds: {','.join(str(s) for s in self.seeds)}",
            f"# metric: {self.metric}",
            f"# a: {self.label_a}",
            f"# b: {self.label_b}",
            "seed,value_a,value_b,diff",
        ]
        for seed, a, b, diff in self.pairs:
            lines.append(f"{seed},{a!r},{b!r},{diff!r}")
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        t = self.test
        lines = [
            f"metric: {self.metric}",
            f"a: {self.label_a}  mean {self.summary_a.mean:.3f} "
            f"sd {self.summary_a.sd:.3f} n {self.summary_a.n}",
            f"b: {self.label_b}  mean {self.summary_b.mean:.3f} "
            f"sd {self.summary_b.sd:.3f} n {self.summary_b.n}",
            f"mean diff (a - b): {self.mean_diff:.3f}",
            f"{t.method}: statistic {t.statistic:.4f}"
            + (f", df {t.df:g}" if t.df is not None else "")
            + f", p_two_sided {t.p_two_sided:.4f}",
        ]
        if t.degenerate:
            lines.append(f"note: {t.note}")
        lines.append(f"seeds: {','.join(str(s) for s in self.seeds)}")
        return "\n".join(lines) + "\n"


def compare_records(records_a: Sequence[RunRecord],
                    records_b: Sequence[RunRecord], metric: str,
                    method: str = "t") -> ComparisonReport:
    """Pair two record lists seed by seed and test the metric difference."""
    seeds_a = [r.seed for r in records_a]
    seeds_b = [r.seed for r in records_b]
    if seeds_a != seeds_b:
        raise ContractError(
            f"paired comparison needs identical seed lists, got {seeds_a} "
            f"and {seeds_b}")
    if not records_a:
        raise ContractError("paired comparison needs at least one record")
    pairs = tuple((ra.seed, ra.metric(metric), rb.metric(metric),
                   ra.metric(metric) - rb.metric(metric))
                  for ra, rb in zip(records_a, records_b))
    diffs = [p[3] for p in pairs]
    if method == "t":
        test = t_paired(diffs)
    elif method == "wilcoxon":
        test = wilcoxon_signed_rank(diffs)
    else:
        raise ConfigurationError(
            f"unknown comparison method {method!r}; use 't' or 'wilcoxon'")
    return ComparisonReport(
        metric=metric,
        label_a=records_a[0].config, label_b=records_b[0].config,
        pairs=pairs,
        summary_a=SampleSummary.from_sample([p[1] for p in pairs]),
        summary_b=SampleSummary.from_sample([p[2] for p in pairs]),
        mean_diff=sum(diffs) / len(diffs),
        test=test,
        seeds=SeedSet(tuple(seeds_a)))


def compare_controllers(scenario, config_a: ControllerConfig,
                        config_b: ControllerConfig, seeds=None,
                        metric: str = "mean_queue_m", method: str = "t",
                        objective: Optional[ObjectiveSpec] = None,
                        jobs: int = 1) -> ComparisonReport:
    """Run both configurations over the identical seed set and pair them.

    Sharing seeds makes the comparison a paired design: each seed's
    stochastic demand realization hits both controllers, so the per-seed
    difference cancels the demand noise that unpaired designs absorb
    into their variance.
    """
    seed_set = _as_seed_set(seeds)
    objective = objective or _default_objective(scenario)
    tagged = ([(config_a, s) for s in seed_set]
              + [(config_b, s) for s in seed_set])
    records = _run_many(scenario, tagged, objective, jobs)
    n = len(seed_set)
    return compare_records(records[:n], records[n:], metric, method)
