"""Compare the compiled kernel against the pure-Python fallback.

Times the two hot paths on a representative workload: batched field
evaluation (grid initialization, symmetry scans) and full trajectory
integration through the interfering crossing region.

Usage: python benchmarks/bench_backends.py [n_trajectories]
"""

import math
import sys
import time

import numpy as np

from mzbohm._backend import COMPILED, get_kernels
from mzbohm import trajectories as tj
from mzbohm.scenario import ScenarioConfig, ScenarioKind, build_scenario


def field_args(scn, t):
    field = scn.timeline.field_at(t)
    c, k, s, b, a, l = field._packed
    return (c, k, s, b, a, l, 0, scn.constants.hbar, scn.constants.mass)


def bench_eval_many(kern, scn, n_points=65536, repeats=3):
    args = field_args(scn, scn.t_cross)
    rng = np.random.default_rng(0)
    xs = rng.normal(size=n_points) * 3 + scn.geometry.region_I.center[0]
    ys = rng.normal(size=n_points) * 3
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        kern.eval_many(*args, xs, ys, scn.t_cross)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_trajectories(kern, scn, starts):
    args = field_args(scn, scn.t_cross)
    t0 = time.perf_counter()
    steps = 0
    for x0 in starts:
        status, ts, xy, vs, nn = kern.integrate_leg(
            *args, 1e-10, float(x0[0]), float(x0[1]), 2.6, 6.4,
            1e-8, 1e-8, 1e-12, 400_000,
        )
        steps += len(ts)
    return time.perf_counter() - t0, steps


def main():
    n_traj = int(sys.argv[1]) if len(sys.argv) > 1 else 20
    cfg = ScenarioConfig(scenario=ScenarioKind.SIMPLE, seed=42, oracle=False)
    scn = build_scenario(cfg)
    starts = tj.born_sample(scn.timeline.segments[0][2], 0.0, n_traj, seed=42)
    # transport the Born samples to the post-mirror leg start (pure drift scale)
    starts = starts + np.array([2.6 * scn.speed / math.sqrt(2), 0.0])

    rows = []
    for name in ("python", "compiled") if COMPILED else ("python",):
        kern = get_kernels(name)
        t_eval = bench_eval_many(kern, scn, repeats=2 if name == "python" else 5)
        t_traj, steps = bench_trajectories(kern, scn, starts)
        rows.append((name, t_eval, t_traj, steps))

    print(f"workload: 65536-point field evaluation; {n_traj} trajectories through "
          f"the crossing leg")
    print(f"{'backend':<10} {'eval_many':>12} {'trajectories':>14} {'steps':>9}")
    for name, t_eval, t_traj, steps in rows:
        print(f"{name:<10} {t_eval * 1e3:>10.1f}ms {t_traj * 1e3:>12.1f}ms {steps:>9}")
    if len(rows) == 2:
        print(f"{'speedup':<10} {rows[0][1] / rows[1][1]:>11.1f}x "
              f"{rows[0][2] / rows[1][2]:>13.1f}x")
    if not COMPILED:
        print("note: compiled extension not built; showing the fallback only")


if __name__ == "__main__":
    main()
