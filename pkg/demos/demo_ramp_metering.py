"""
Ramp metering on a congested freeway corridor
=============================================

A freeway merge breaks down when the on-ramp feeds vehicles faster
than the merge area can absorb them: occupancy climbs past the
critical point and mainline speed collapses. A feedback meter watches
the merge detector and adjusts the ramp signal every control cycle to
hold occupancy at a setpoint below breakdown, queueing the surplus on
the ramp instead.

This script uses the deterministic demand profile in which the middle
ramp switches on mid-run, so the congestion pattern is known: the
uncontrolled merge saturates shortly after the ramp activates, while
the metered one settles at the setpoint. The printed metrics make the
trade explicit; the meter protects the mainline and pays for it with
ramp queue.
"""

from pathlib import Path

from trafficbench.experiments import ControllerConfig, run_trace
from trafficbench.freeway import freeway_metrics
from trafficbench.scenarios import build_freeway_corridor
from trafficbench.svgplot import Series, line_chart

OUT = Path(__file__).parent / "out"
SEED = 7
TARGET = 10.0

scenario = build_freeway_corridor(demand="step_onset")

configs = [
    ControllerConfig("none", label="uncontrolled"),
    ControllerConfig("alinea", params={"target_occupancy": TARGET,
                                       "k_p": 30.0}, label="metered"),
]

# Same seed for both runs: identical demand realization, so every
# difference below is a control effect. (This profile is deterministic
# anyway; stochastic profiles make the shared seed essential.)
rows = []
traces = {}
for config in configs:
    trace = run_trace(scenario, config, SEED)
    traces[config.name] = trace
    metrics = freeway_metrics(trace, target_occupancy=TARGET).as_dict()
    # occupancy at the activated merge over the final quarter hour
    tail = trace.cycle_occupancy[-15:, 1].mean()
    metrics["final_occupancy_pct"] = float(tail)
    rows.append((config.name, metrics))

names = [name for name, _ in rows]
print(f"middle ramp switches on at t = 1500 s; setpoint {TARGET:.0f}%\n")
print(f"{''.ljust(26)} " + "  ".join(f"{n:>14}" for n in names))
for key in ("final_occupancy_pct", "mean_occ_violation_pct",
            "mean_queue_m", "throughput_veh"):
    cells = "  ".join(f"{metrics[key]:>14.1f}" for _, metrics in rows)
    print(f"{key.ljust(26)} {cells}")
print("\nThe uncontrolled merge runs far above the critical occupancy "
      "once the ramp\nactivates; the metered one tracks the setpoint. "
      "The metered ramp queue is\nlonger, which is the point: vehicles "
      "wait on the ramp, not in the merge.")

# The per-cycle occupancy trace at the activated merge tells the story
# in one picture.
series = [Series(name, [float(t) for t in traces[name].cycle_t],
                 [float(v) for v in traces[name].cycle_occupancy[:, 1]])
          for name in names]
OUT.mkdir(exist_ok=True)
path = OUT / "ramp_metering_occupancy.svg"
path.write_text(line_chart("occupancy at the activated merge", series,
                           x_label="time (s)", y_label="occupancy (%)",
                           y_ref=TARGET))
print(f"\nwrote {path}")
print("Coordinated metering (queue-aware master/slave balancing across "
      "ramps) runs\nthe same way: see configs/freeway_hero.toml.")
