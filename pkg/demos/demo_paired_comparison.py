"""
Deciding between two controllers with a paired test
===================================================

"Controller A beat controller B on my run" is weak evidence: a single
seed decides which demand realization both faced, and another seed can
flip the sign. The comparison harness runs both configurations on the
same seed set, differences the metric seed by seed, and tests whether
the paired differences are distinguishable from noise. Pairing removes
the between-seed demand variance from the comparison, which is usually
the largest variance component by far.

This script compares uncontrolled ramps against occupancy feedback on
ten seeds, with the parametric paired t-test and the rank-based exact
test side by side. The command-line equivalent:

    trafficbench compare configs/freeway_none.toml \\
        configs/freeway_alinea.toml --metric mean_occ_violation_pct
"""

from trafficbench.experiments import (ControllerConfig, SeedSet,
                                      compare_controllers)
from trafficbench.scenarios import build_freeway_corridor

scenario = build_freeway_corridor(demand="peak", warmup_s=300.0,
                                  horizon_s=1500.0)

uncontrolled = ControllerConfig("none", label="uncontrolled")
metered = ControllerConfig("alinea", params={"target_occupancy": 10.0,
                                             "k_p": 30.0},
                           label="metered")
seeds = SeedSet.default(n=10)

for method in ("t", "wilcoxon"):
    report = compare_controllers(scenario, uncontrolled, metered,
                                 seeds=seeds,
                                 metric="mean_occ_violation_pct",
                                 method=method)
    test = report.test
    print(f"== {test.method} ==")
    print(f"per-seed differences (uncontrolled - metered), "
          f"mean {report.mean_diff:+.3f}:")
    print("  " + "  ".join(f"{d:+.2f}" for _, _, _, d in report.pairs))
    line = f"statistic {test.statistic:.3f}"
    if test.df is not None:
        line += f", df {test.df:g}"
    if test.exact is not None:
        line += f", exact {'yes' if test.exact else 'no'}"
    print(line)
    print(f"p_one_sided {test.p_one_sided:.4f}, "
          f"p_two_sided {test.p_two_sided:.4f}")
    if test.ci_95 is not None:
        print(f"95% CI for the mean difference: "
              f"[{test.ci_95[0]:.3f}, {test.ci_95[1]:.3f}]")
    print()

print("Both tests agree here. When they disagree, look at the pair "
      "list: a few\nextreme seeds move the t statistic but not the "
      "ranks, and the honest claim\nis the rank-based one.")
