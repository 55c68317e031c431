"""Command-line front end: simulate, calibrate, compare, report.

Every emitted CSV starts with a reproducibility header (toolkit
version, config hash, seed list), so a stored result identifies the
exact inputs that produced it and a rerun is byte-comparable.

Heavy modules load inside each command, not at module import; the
summary-statistics comparison path then answers without paying for the
simulator stack.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

from .errors import (ConfigurationError, ContractError,
                     DegenerateStatisticsWarning)

ALPHA = 0.05


def _verdict(result) -> str:
    if not result.degenerate and result.p_two_sided < ALPHA:
        return f"statistically significant at alpha = {ALPHA}"
    return f"not statistically significant at alpha = {ALPHA}"


def _result_block(label_a, summary_a, label_b, summary_b, result,
                  mean_diff, metric=None) -> list[str]:
    lines = []
    if metric:
        lines.append(f"metric: {metric}")
    lines.append(f"a: {label_a}  mean {summary_a.mean:.3f}  "
                 f"sd {summary_a.sd:.3f}  n {summary_a.n}")
    lines.append(f"b: {label_b}  mean {summary_b.mean:.3f}  "
                 f"sd {summary_b.sd:.3f}  n {summary_b.n}")
    lines.append(f"mean difference (a - b): {mean_diff:.3f}")
    if result.ci_95 is not None:
        lines.append(f"95% CI for the difference: "
                     f"[{result.ci_95[0]:.3f}, {result.ci_95[1]:.3f}]")
    stat = f"{result.method}: statistic {result.statistic:.4f}"
    if result.df is not None:
        stat += f", df {result.df:g}"
    lines.append(stat)
    lines.append(f"p_one_sided {result.p_one_sided:.4f}, "
                 f"p_two_sided {result.p_two_sided:.4f}")
    if result.effect_size is not None:
        lines.append(f"effect size (Cohen's d): {result.effect_size:.3f}")
    if result.exact is not None:
        lines.append(f"exact: {'yes' if result.exact else 'no'}")
    if result.note:
        lines.append(f"note: {result.note}")
    lines.append(f"verdict: {_verdict(result)}")
    return lines


def _headers(cfg, seeds) -> list[str]:
    from . import __version__
    return [
        f"# toolkit_version: {__version__}",
        f"# config_hash: {cfg.hash}",
        f"# config: {cfg.source}",
        f"# controller: {cfg.controller.name}",
        f"# seeds: {','.join(str(s) for s in seeds)}",
    ]


def _write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    print(f"wrote {path}")


def _csv(headers: list[str], columns: str, rows) -> str:
    lines = list(headers)
    lines.append(columns)
    lines.extend(rows)
    return "\n".join(lines) + "\n"


def _metrics_text(metrics: dict, fmt: str, headers: list[str]) -> str:
    if fmt == "csv":
        rows = [f"{k},{float(v)!r}" for k, v in metrics.items()]
        return _csv(headers, "metric,value", rows)
    width = max(len(k) for k in metrics)
    return "\n".join(f"{k.ljust(width)}  {float(v):.3f}"
                     for k, v in metrics.items()) + "\n"


def _parse_seed_list(text: str):
    from .experiments import SeedSet
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if not parts:
        raise ConfigurationError(f"cannot parse seeds from {text!r}")
    if len(parts) == 1 and "," not in text:
        return SeedSet.default(n=int(parts[0]))
    return SeedSet(tuple(int(p) for p in parts))


def _parse_grid(specs, kind: str) -> dict:
    from .config import param_key
    grid: dict = {}
    for chunk in specs:
        for spec in chunk.split(";"):
            spec = spec.strip()
            if not spec:
                continue
            name, eq, body = spec.partition("=")
            if not eq or not body:
                raise ConfigurationError(
                    f"grid spec {spec!r} must look like NAME=START:STOP:STEP "
                    f"or NAME=v1,v2,v3")
            key = param_key(kind, name.strip())
            if ":" in body:
                parts = [float(p) for p in body.split(":")]
                if len(parts) == 2:
                    start, stop, step = parts[0], parts[1], 1.0
                elif len(parts) == 3:
                    start, stop, step = parts
                else:
                    raise ConfigurationError(
                        f"grid range {body!r} needs START:STOP[:STEP]")
                if step <= 0 or stop < start:
                    raise ConfigurationError(
                        f"grid range {body!r} must ascend with step > 0")
                count = int(math.floor((stop - start) / step + 1e-9)) + 1
                grid[key] = [start + i * step for i in range(count)]
            else:
                grid[key] = [float(v) for v in body.split(",")]
    if not grid:
        raise ConfigurationError("no grid axes given")
    return grid


def _stride(n: int, target: int = 800) -> int:
    return max(1, n // target)


def _freeway_outputs(cfg, scenario, trace, out: Path, seed: int,
                     fmt: str, density: bool):
    import numpy as np

    from .experiments import freeway_control_setup
    from .freeway import freeway_metrics
    from .svgplot import Series, line_chart

    meter, _, _ = freeway_control_setup(cfg.controller)
    metrics = freeway_metrics(
        trace, target_occupancy=meter.target_occupancy).as_dict()
    headers = _headers(cfg, (seed,))

    _write_text(out / "metrics.csv",
                _metrics_text(metrics, "csv", headers))
    n_steps, n_ramps = trace.queue_m.shape
    rows = []
    for i in range(n_steps):
        t = float(trace.t[i])
        for r in range(n_ramps):
            rows.append(f"{t!r},{r},{float(trace.queue_m[i, r])!r},"
                        f"{float(trace.rates_pct[i, r])!r},"
                        f"{int(trace.signal_green[i, r])}")
    _write_text(out / "rates.csv",
                _csv(headers, "t,ramp,queue_m,rate_pct,signal", rows))
    rows = []
    for i, t in enumerate(trace.cycle_t):
        for j, det in enumerate(trace.occupancy_det_ids):
            rows.append(f"{float(t)!r},{det},"
                        f"{float(trace.cycle_occupancy[i, j])!r}")
    _write_text(out / "occupancy.csv",
                _csv(headers, "t,detector,occupancy", rows))
    if density:
        rows = []
        for i in range(trace.rho.shape[0]):
            t = float(trace.t[i])
            for c in range(trace.rho.shape[1]):
                rows.append(f"{t!r},{c},{float(trace.rho[i, c])!r}")
        _write_text(out / "density.csv", _csv(headers, "t,cell,rho", rows))

    cyc = [float(t) for t in trace.cycle_t]
    if cyc:
        occ_series = [Series(det, cyc, [float(v) for v in
                                        trace.cycle_occupancy[:, j]])
                      for j, det in enumerate(trace.occupancy_det_ids)]
        _write_text(out / "plots" / "occupancy.svg",
                    line_chart("merge occupancy per control cycle",
                               occ_series, x_label="time (s)",
                               y_label="occupancy (%)",
                               y_ref=meter.target_occupancy))
    stride = _stride(n_steps)
    ts = [float(v) for v in trace.t[::stride]]
    _write_text(out / "plots" / "queues.svg",
                line_chart("ramp queues", [
                    Series(f"ramp {r}", ts,
                           [float(v) for v in trace.queue_m[::stride, r]])
                    for r in range(n_ramps)],
                    x_label="time (s)", y_label="queue (m)"))
    _write_text(out / "plots" / "rates.svg",
                line_chart("metering rates", [
                    Series(f"ramp {r}", ts,
                           [float(v) for v in trace.rates_pct[::stride, r]])
                    for r in range(n_ramps)],
                    x_label="time (s)", y_label="rate (%)", step=True))
    print(_metrics_text(metrics, fmt, headers), end="")


def _spat_rows(network, spat, t0: float, t1: float):
    """Timeline rows (label, segments) for the phase-band plot."""
    by_node: dict = {}
    for sec, node, phase, color in spat:
        if t0 <= sec < t1:
            by_node.setdefault(node, []).append((sec, phase, color))
    rows = []
    for inter in network.intersections:
        shown = by_node.get(inter.node_id, [])
        for p in range(len(inter.phases)):
            segments = []
            for sec, phase, color in shown:
                state = color if phase == p else "r"
                if segments and segments[-1][2] == state and \
                        segments[-1][1] == sec:
                    segments[-1] = (segments[-1][0], sec + 1, state)
                else:
                    segments.append((sec, sec + 1, state))
            rows.append((f"{inter.node_id} p{p}", segments))
    return rows


def _urban_outputs(cfg, scenario, trace, out: Path, seed: int, fmt: str):
    from .svgplot import Series, line_chart, timeline_chart
    from .urban import urban_metrics

    network = trace.network
    metrics = urban_metrics(trace).as_dict()
    headers = _headers(cfg, (seed,))

    _write_text(out / "metrics.csv",
                _metrics_text(metrics, "csv", headers))
    rows = [f"{sec},{node},{phase},{color}"
            for sec, node, phase, color in trace.spat]
    _write_text(out / "spat.csv",
                _csv(headers, "t,intersection,phase,color", rows))
    stride = _stride(len(trace.t))
    rows = [f"{float(trace.t[i])!r},{float(trace.total_queue[i])!r},"
            f"{float(trace.total_veh[i])!r}"
            for i in range(0, len(trace.t), stride)]
    _write_text(out / "queues.csv",
                _csv(headers, "t,total_queue_veh,total_veh", rows))
    if trace.cycle_lengths:
        rows = [f"{float(t)!r},{district},{float(cycle)!r}"
                for t, district, cycle in trace.cycle_lengths]
        _write_text(out / "cycles.csv",
                    _csv(headers, "t,district,cycle_s", rows))

    t0 = network.warmup_s
    t1 = min(network.horizon_s, t0 + 210.0)
    if t1 <= t0:
        t0, t1 = 0.0, min(network.horizon_s, 210.0)
    _write_text(out / "plots" / "spat.svg",
                timeline_chart("signal phases", _spat_rows(
                    network, trace.spat, t0, t1), t0=t0, t1=t1))

    params = dict(cfg.controller.params)
    base_cycle = params.get("initial_cycle_s",
                            params.get("cycle_s", 120.0))
    horizon = float(network.horizon_s)
    if trace.cycle_lengths:
        series = []
        names = sorted({d for _, d, _ in trace.cycle_lengths})
        for name in names:
            xs, ys = [0.0], [base_cycle]
            for t, district, cycle in trace.cycle_lengths:
                if district == name:
                    xs.append(float(t))
                    ys.append(float(cycle))
            xs.append(horizon)
            ys.append(ys[-1])
            series.append(Series(name, xs, ys))
    else:
        series = [Series("cycle", [0.0, horizon], [base_cycle, base_cycle])]
    _write_text(out / "plots" / "cycle_lengths.svg",
                line_chart("cycle length", series, x_label="time (s)",
                           y_label="cycle (s)", step=True))
    ts = [float(v) for v in trace.t[::stride]]
    _write_text(out / "plots" / "queues.svg",
                line_chart("network queue", [
                    Series("queued vehicles", ts,
                           [float(v) for v in trace.total_queue[::stride]])],
                    x_label="time (s)", y_label="vehicles"))
    print(_metrics_text(metrics, fmt, headers), end="")


def cmd_simulate(args) -> int:
    from .config import load_config
    from .experiments import run_trace

    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seeds.seeds[0]
    out = Path(args.out or cfg.out_dir)
    fmt = args.format or (cfg.formats[0] if cfg.formats else "table")
    scenario = cfg.build_scenario()
    if cfg.family == "freeway":
        trace = run_trace(scenario, cfg.controller, seed,
                          record_density=args.density)
        _freeway_outputs(cfg, scenario, trace, out, seed, fmt, args.density)
    else:
        trace = run_trace(scenario, cfg.controller, seed)
        _urban_outputs(cfg, scenario, trace, out, seed, fmt)
    return 0


def cmd_calibrate(args) -> int:
    from .config import load_config
    from .experiments import grid_search

    cfg = load_config(args.config)
    grid = _parse_grid(args.grid, cfg.controller.controller)
    seeds = _parse_seed_list(args.seeds) if args.seeds else cfg.seeds
    scenario = cfg.build_scenario()
    report = grid_search(scenario, cfg.controller, grid, seeds=seeds,
                         objective=cfg.objective, jobs=args.jobs)
    out = Path(args.out or cfg.out_dir)
    extra = [f"# config_hash: {cfg.hash}", f"# config: {cfg.source}"]
    _write_text(out / "calibration.csv",
                "\n".join(extra) + "\n" + report.to_csv())
    fmt = args.format or "table"
    print(report.to_csv() if fmt == "csv" else report.to_table(), end="")
    return 0


def _summary_compare(args) -> int:
    from .stats import SampleSummary, t_two_sample

    def parse(text):
        parts = text.replace(" ", "").split(",")
        if len(parts) != 3:
            raise ConfigurationError(
                f"summary {text!r} must be MEAN,SD,N")
        return SampleSummary(mean=float(parts[0]), sd=float(parts[1]),
                             n=int(parts[2]))

    a, b = (parse(t) for t in args.summary_stats)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateStatisticsWarning)
        result = t_two_sample(a, b)
    for line in _result_block("summary", a, "summary", b, result,
                              a.mean - b.mean):
        print(line)
    if result.degenerate and args.strict:
        return 3
    return 0


def cmd_compare(args) -> int:
    if args.summary_stats:
        if args.config_a or args.config_b:
            raise ConfigurationError(
                "--summary-stats replaces config files; give one or the "
                "other")
        return _summary_compare(args)
    if not args.config_a or not args.config_b:
        raise ConfigurationError(
            "compare needs two config files (or --summary-stats)")

    from .config import load_config
    from .experiments import compare_controllers

    cfg_a = load_config(args.config_a)
    cfg_b = load_config(args.config_b)
    if cfg_a.family != cfg_b.family:
        raise ConfigurationError(
            f"cannot compare across families: {args.config_a} is "
            f"{cfg_a.family}, {args.config_b} is {cfg_b.family}")
    if cfg_a.scenario_kw != cfg_b.scenario_kw:
        raise ConfigurationError(
            "paired comparison needs the identical scenario section; "
            f"{args.config_a} has {dict(cfg_a.scenario_kw)}, "
            f"{args.config_b} has {dict(cfg_b.scenario_kw)}")
    if args.seeds:
        seeds = _parse_seed_list(args.seeds)
    else:
        if cfg_a.seeds != cfg_b.seeds:
            raise ConfigurationError(
                "paired comparison needs identical seed lists; pass --seeds "
                f"to override ({list(cfg_a.seeds)} vs {list(cfg_b.seeds)})")
        seeds = cfg_a.seeds
    method = "t" if args.test == "paired_t" else "wilcoxon"
    scenario = cfg_a.build_scenario()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateStatisticsWarning)
        report = compare_controllers(
            scenario, cfg_a.controller, cfg_b.controller, seeds=seeds,
            metric=args.metric, method=method, objective=cfg_a.objective,
            jobs=args.jobs)
    out = Path(args.out or cfg_a.out_dir)
    extra = [f"# config_hash_a: {cfg_a.hash}",
             f"# config_hash_b: {cfg_b.hash}"]
    _write_text(out / "comparison.csv",
                "\n".join(extra) + "\n" + report.to_csv())
    for line in _result_block(report.label_a, report.summary_a,
                              report.label_b, report.summary_b,
                              report.test, report.mean_diff,
                              metric=report.metric):
        print(line)
    if report.test.degenerate and args.strict:
        return 3
    return 0


def _read_csv(path: Path):
    """Rows of a stored CSV, comments stripped, as column dicts."""
    lines = path.read_text().splitlines()
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    if not body:
        raise ConfigurationError(f"{path} has no header row")
    cols = body[0].split(",")
    return [dict(zip(cols, ln.split(","))) for ln in body[1:]]


def cmd_report(args) -> int:
    from .svgplot import Series, line_chart, timeline_chart

    run_dir = Path(args.run_dir)
    metrics_path = run_dir / "metrics.csv"
    if not metrics_path.exists():
        raise ConfigurationError(
            f"{run_dir} has no metrics.csv; point at a simulate output "
            f"directory")
    metrics = {row["metric"]: float(row["value"])
               for row in _read_csv(metrics_path)}
    width = max(len(k) for k in metrics)
    for k, v in metrics.items():
        print(f"{k.ljust(width)}  {v:.3f}")

    plots = run_dir / "plots"
    rates = run_dir / "rates.csv"
    if rates.exists():
        rows = _read_csv(rates)
        ramps = sorted({r["ramp"] for r in rows})
        for field, fname, label, step in (
                ("queue_m", "queues.svg", "queue (m)", False),
                ("rate_pct", "rates.svg", "rate (%)", True)):
            series = []
            for ramp in ramps:
                pts = [(float(r["t"]), float(r[field]))
                       for r in rows if r["ramp"] == ramp]
                stride = _stride(len(pts))
                pts = pts[::stride]
                series.append(Series(f"ramp {ramp}", [p[0] for p in pts],
                                     [p[1] for p in pts]))
            _write_text(plots / fname,
                        line_chart(fname.removesuffix(".svg"), series,
                                   x_label="time (s)", y_label=label,
                                   step=step))
    occupancy = run_dir / "occupancy.csv"
    if occupancy.exists():
        rows = _read_csv(occupancy)
        series = []
        for det in sorted({r["detector"] for r in rows}):
            pts = [(float(r["t"]), float(r["occupancy"]))
                   for r in rows if r["detector"] == det]
            series.append(Series(det, [p[0] for p in pts],
                                 [p[1] for p in pts]))
        if series:
            _write_text(plots / "occupancy.svg",
                        line_chart("merge occupancy per control cycle",
                                   series, x_label="time (s)",
                                   y_label="occupancy (%)"))
    spat = run_dir / "spat.csv"
    if spat.exists():
        rows = _read_csv(spat)
        nodes: dict = {}
        for r in rows:
            nodes.setdefault(r["intersection"], []).append(
                (int(float(r["t"])), int(r["phase"]), r["color"]))
        t_lo = min(t for shown in nodes.values() for t, _, _ in shown)
        t_hi = min(t_lo + 210, max(
            t for shown in nodes.values() for t, _, _ in shown) + 1)
        tl_rows = []
        for node in sorted(nodes):
            shown = [s for s in nodes[node] if t_lo <= s[0] < t_hi]
            for p in sorted({ph for _, ph, _ in nodes[node]}):
                segments = []
                for sec, phase, color in shown:
                    state = color if phase == p else "r"
                    if segments and segments[-1][2] == state and \
                            segments[-1][1] == sec:
                        segments[-1] = (segments[-1][0], sec + 1, state)
                    else:
                        segments.append((sec, sec + 1, state))
                tl_rows.append((f"{node} p{p}", segments))
        _write_text(plots / "spat.svg",
                    timeline_chart("signal phases", tl_rows,
                                   t0=float(t_lo), t1=float(t_hi)))
    queues = run_dir / "queues.csv"
    if queues.exists():
        rows = _read_csv(queues)
        if rows and "total_queue_veh" in rows[0]:
            xs = [float(r["t"]) for r in rows]
            ys = [float(r["total_queue_veh"]) for r in rows]
            _write_text(plots / "queues.svg",
                        line_chart("network queue",
                                   [Series("queued vehicles", xs, ys)],
                                   x_label="time (s)", y_label="vehicles"))
    cycles = run_dir / "cycles.csv"
    if cycles.exists():
        rows = _read_csv(cycles)
        series = []
        for district in sorted({r["district"] for r in rows}):
            pts = [(float(r["t"]), float(r["cycle_s"]))
                   for r in rows if r["district"] == district]
            series.append(Series(district, [p[0] for p in pts],
                                 [p[1] for p in pts]))
        if series:
            _write_text(plots / "cycle_lengths.svg",
                        line_chart("cycle length", series,
                                   x_label="time (s)", y_label="cycle (s)",
                                   step=True))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trafficbench",
        description="Traffic control benchmarking: seeded closed-loop runs, "
                    "grid calibration, paired comparison.")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simulate", help="one seeded run with CSV and SVG "
                                        "output")
    p.add_argument("config", help="experiment config (TOML or JSON)")
    p.add_argument("--seed", type=int, default=None,
                   help="seed (default: first of the config's seed set)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--format", choices=("csv", "table"), default=None)
    p.add_argument("--density", action="store_true",
                   help="freeway only: also write per-cell density")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="grid search over controller "
                                         "parameters")
    p.add_argument("config")
    p.add_argument("--grid", action="append", required=True,
                   help="axis spec NAME=START:STOP:STEP or NAME=v1,v2,...; "
                        "repeat or join with ';' for more axes")
    p.add_argument("--seeds", default=None,
                   help="count (N) or explicit list (a,b,c)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "table"), default=None)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("compare", help="paired comparison of two "
                                       "configurations")
    p.add_argument("config_a", nargs="?", default=None)
    p.add_argument("config_b", nargs="?", default=None)
    p.add_argument("--seeds", default=None)
    p.add_argument("--test", choices=("paired_t", "wilcoxon"),
                   default="paired_t")
    p.add_argument("--metric", default="mean_queue_m")
    p.add_argument("--summary-stats", nargs=2, metavar=("A", "B"),
                   default=None,
                   help="two MEAN,SD,N triples; two-sample pooled t from "
                        "summaries instead of running simulations")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--strict", action="store_true",
                   help="exit 3 when the test input is degenerate")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="regenerate plots and summary from a "
                                      "stored run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ContractError as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
