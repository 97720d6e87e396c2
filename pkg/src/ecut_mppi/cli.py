"""Command line entry point: ``ecut-mppi {run,mc,compare,validate}``."""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from . import export
from .harness import run_monte_carlo, simulate_episode, variant_scenarios
from .scenario import builtin_scenarios, load_scenario

OUTDIR_ENV = "ECUT_MPPI_OUTDIR"
DEFAULT_SCENARIO = "scenario_sec5a"


def _outdir(arg) -> Path:
    path = Path(arg or os.environ.get(OUTDIR_ENV) or "runs")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _set_threads(n):
    if n is None:
        return
    import numba

    if not 1 <= n <= numba.config.NUMBA_NUM_THREADS:
        raise ValueError(f"--threads must be in [1, {numba.config.NUMBA_NUM_THREADS}]")
    numba.set_num_threads(n)


def _cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    print(f"ok: {sc.name}: {len(sc.agents)} agents, {len(sc.obstacles)} obstacles, "
          f"H={sc.planner_config().horizon}, dt={sc.episode.dt}, M={sc.planner_config().samples}, "
          f"planner={sc.planner.kind}")
    return 0


def _cmd_run(args) -> int:
    _set_threads(args.threads)
    sc = load_scenario(args.scenario)
    log = simulate_episode(sc, args.seed, record_timing=args.timing)
    out = _outdir(args.out)
    stem = f"{sc.name}_seed{args.seed}"
    csv_path = export.export_metrics(log, out / f"{stem}.csv")
    export.export_metrics(log, out / f"{stem}.json", fmt="json")
    print(f"wrote {csv_path}: {log.steps} steps, final cost {log.cum_cost[-1]:.3f}, "
          f"collision={log.collision}, goal={log.goal_reached}")
    if log.failure:
        print(f"error: episode aborted: {log.failure}", file=sys.stderr)
        return 1
    return 0


def _cmd_mc(args) -> int:
    _set_threads(args.threads)
    sc = load_scenario(args.scenario)
    stats = run_monte_carlo(sc, args.runs, args.seed0, workers=args.workers,
                            record_timing=args.timing)
    out = _outdir(args.out)
    stem = f"{sc.name}_mc{args.runs}_seed{args.seed0}"
    export.export_metrics(stats, out / f"{stem}.csv")
    export.export_metrics(stats, out / f"{stem}.json", fmt="json")
    s = export.stats_summary(stats)
    print(f"wrote {out / stem}.csv: runs={stats.n_runs} collision_rate={s['collision_rate']:.3f} "
          f"final_cost={s['final_cum_cost_mean']:.2f}+-{s['final_cum_cost_half_width']:.2f}")
    return 0 if not stats.failures else 1


def format_table(rows: dict) -> str:
    head = (f"{'variant':<18} {'runs':>4} {'coll':>6} {'goal':>6} {'final_cost':>11} {'+-':>8} "
            f"{'lb_agent':>9} {'margin':>7} {'worst':>7} {'iter_ms':>8}")
    lines = [head, "-" * len(head)]
    for name, s in rows.items():
        lines.append(
            f"{name:<18} {s['n_runs']:>4d} {s['collision_rate']:>6.3f} {s['goal_rate']:>6.3f} "
            f"{s['final_cum_cost_mean']:>11.2f} {s['final_cum_cost_half_width']:>8.2f} "
            f"{s['min_agent_dist_lower_band']:>9.3f} {s['safety_margin']:>7.3f} "
            f"{s['min_agent_dist_worst_run']:>7.3f} {s['mean_iter_ms']:>8.1f}")
    return "\n".join(lines)


def _cmd_compare(args) -> int:
    _set_threads(args.threads)
    sc = load_scenario(args.scenario)
    out = _outdir(args.out)
    rows = {}
    for name, variant in variant_scenarios(sc, args.mc_k).items():
        t0 = time.perf_counter()
        stats = run_monte_carlo(variant, args.runs, args.seed0, workers=args.workers,
                                record_timing=args.timing)
        export.export_metrics(stats, out / f"{sc.name}_{name}.csv")
        rows[name] = export.stats_summary(stats)
        rows[name]["config"] = variant.echo()["planner"]
        print(f"[{name}: {time.perf_counter() - t0:.0f}s]", file=sys.stderr, flush=True)
    export.write_json({"scenario": sc.name, "runs": args.runs, "seed0": args.seed0,
                       "variants": rows}, out / f"{sc.name}_compare.json")
    print(format_table(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecut-mppi", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_flag):
        sp.add_argument("--scenario", default=DEFAULT_SCENARIO,
                        help=f"scenario file or packaged name ({', '.join(builtin_scenarios())})")
        sp.add_argument(seed_flag, type=int, default=0)
        sp.add_argument("--out", default=None, help=f"output directory (default ${OUTDIR_ENV} or ./runs)")
        sp.add_argument("--threads", type=int, default=None, help="rollout threads")
        sp.add_argument("--timing", action="store_true",
                        help="record wall-clock iteration times (makes CSVs non-reproducible)")

    run = sub.add_parser("run", help="one closed-loop episode")
    common(run, "--seed")
    run.set_defaults(func=_cmd_run)

    mc = sub.add_parser("mc", help="seeded Monte-Carlo aggregate")
    common(mc, "--seed0")
    mc.add_argument("--runs", type=int, default=50)
    mc.add_argument("--workers", type=int, default=1, help="episode processes")
    mc.set_defaults(func=_cmd_mc)

    cmp_ = sub.add_parser("compare", help="aware / unaware / mean-based / Monte-Carlo table")
    common(cmp_, "--seed0")
    cmp_.add_argument("--runs", type=int, default=50)
    cmp_.add_argument("--workers", type=int, default=1, help="episode processes")
    cmp_.add_argument("--mc-k", type=int, nargs="+", default=[20],
                      help="replica counts for the Monte-Carlo baseline")
    cmp_.set_defaults(func=_cmd_compare)

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("scenario", nargs="?", default=DEFAULT_SCENARIO)
    val.set_defaults(func=_cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors exit 2, --help exits 0
        return int(exc.code or 0)
    try:
        return args.func(args)
    except Exception as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
