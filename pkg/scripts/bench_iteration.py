"""Planning-iteration wall time on a scenario, per thread count.

    python scripts/bench_iteration.py [scenario] --steps 40 --threads 1 2 4

Thread counts above NUMBA_NUM_THREADS (the core count by default) are skipped.
"""
import argparse
import warnings

import numba
import numpy as np

from ecut_mppi.harness import simulate_episode
from ecut_mppi.scenario import load_scenario

warnings.filterwarnings("ignore")

p = argparse.ArgumentParser()
p.add_argument("scenario", nargs="?", default="scenario_sec5a")
p.add_argument("--steps", type=int, default=40)
p.add_argument("--threads", type=int, nargs="+", default=[numba.config.NUMBA_NUM_THREADS])
p.add_argument("--kind", choices=["ecut", "mc_baseline"], default=None)
p.add_argument("--mc-k", type=int, default=None)
args = p.parse_args()

sc = load_scenario(args.scenario)
if args.kind or args.mc_k:
    sc = sc.with_planner(kind=args.kind, mc_samples=args.mc_k)
simulate_episode(sc.with_episode(steps=2), 0, record_timing=False)  # compile
cfg = sc.planner_config()
print(f"{sc.name}: M={cfg.samples} H={cfg.horizon} agents={len(sc.agents)} planner={sc.planner.kind}")
for n in args.threads:
    if n > numba.config.NUMBA_NUM_THREADS:
        print(f"threads {n}: skipped (NUMBA_NUM_THREADS={numba.config.NUMBA_NUM_THREADS})")
        continue
    numba.set_num_threads(n)
    t = simulate_episode(sc.with_episode(steps=args.steps), 0).iter_time_ms
    print(f"threads {n}: mean {np.mean(t):.1f} ms, median {np.median(t):.1f} ms, max {np.max(t):.1f} ms")
