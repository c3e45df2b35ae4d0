#!/usr/bin/env python3
"""Penalty-parameter sweep on the bundled ball-and-plate-like benchmark.

Runs the random-initial-state benchmark for several penalty values against
the reachable and unreachable references and prints iteration/time
statistics as one table row per (rho, reference) pair. Smaller penalties
tend to win on reachable references; unreachable references, where the
solution rides the position bound, favor stiffer ones.
"""

import argparse
from dataclasses import replace
from importlib import resources

from mpct_admm import load_scenario, run_benchmark

REACHABLE_RHOS = (0.1, 0.6, 2.0)
UNREACHABLE_RHOS = (4.0, 6.0, 10.0)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=100, help="random initial states per row")
    parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    args = parser.parse_args()

    scenario = load_scenario(str(resources.files("mpct_admm") / "models" / "scenario_ball_plate.json"))
    scenario = replace(scenario, trials=args.trials)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)

    header = (
        f"{'rho':>6} {'reference':>12} {'conv':>5} "
        f"{'it avg':>8} {'it med':>8} {'it max':>8} {'it min':>8} "
        f"{'ms avg':>8} {'ms med':>8} {'ms max':>8} {'ms min':>8}"
    )
    print(header)
    print("-" * len(header))
    for label, rhos in (("reachable", REACHABLE_RHOS), ("unreachable", UNREACHABLE_RHOS)):
        refs = tuple(r for r in scenario.references if r.label == label)
        sc_ref = replace(scenario, references=refs)
        for rho in rhos:
            sc = replace(sc_ref, params=replace(scenario.params, rho=rho))
            (stats,) = run_benchmark(sc)
            it = stats.iteration_stats()
            ms = stats.time_stats_ms()
            print(
                f"{rho:>6.2f} {label:>12} {stats.converged:>4}/{stats.completed:<4}"
                f"{it['average']:>7.1f} {it['median']:>8.1f} {it['max']:>8.0f} {it['min']:>8.0f} "
                f"{ms['average']:>8.2f} {ms['median']:>8.2f} {ms['max']:>8.2f} {ms['min']:>8.2f}"
            )


if __name__ == "__main__":
    main()
