"""Quick look at how the planner variants behave on a scenario.

    python scripts/probe_variants.py scenario_sec5a --runs 8 --variants aware,unaware
    python scripts/probe_variants.py my.yaml --set temperature=5 --set agent_gain=3

Variant names are those of ``ecut-mppi compare``: aware, unaware, mean-based
and mc_baseline_k<K>.
"""
import argparse
import time
import warnings

import numpy as np
import yaml

from ecut_mppi.export import safety_margin
from ecut_mppi.harness import run_monte_carlo, variant_scenarios
from ecut_mppi.scenario import load_scenario

warnings.filterwarnings("ignore")

p = argparse.ArgumentParser()
p.add_argument("scenario")
p.add_argument("--runs", type=int, default=8)
p.add_argument("--seed0", type=int, default=0)
p.add_argument("--variants", default="aware,unaware,mean-based")
p.add_argument("--mc-k", type=int, nargs="+", default=[20, 100])
p.add_argument("--set", action="append", default=[], help="<planner field>=<yaml value>")
args = p.parse_args()

overrides = {}
for item in args.set:
    key, val = item.split("=", 1)
    overrides[key] = yaml.safe_load(val)
base = load_scenario(args.scenario)
if overrides:
    base = base.with_planner(**overrides)
variants = variant_scenarios(base, mc_k=args.mc_k)

for name in args.variants.split(","):
    t0 = time.time()
    st = run_monte_carlo(variants[name], args.runs, args.seed0)
    lb = st.lower_band("min_agent_dist").min()
    print(f"{name:16s} cost {st.mean['cum_cost'][-1]:9.1f} +- {st.half_width['cum_cost'][-1]:7.1f} "
          f"coll {st.collision_rate:.2f} goal {st.goal_rate:.2f} "
          f"minA {np.min(st.min_agent_dist):6.2f} lbA {lb:6.2f} margin {safety_margin(st):6.3f} "
          f"minO {np.min(st.min_obs_dist):6.2f} it {st.mean_iter_ms:6.1f}ms  [{time.time() - t0:.0f}s]",
          flush=True)
