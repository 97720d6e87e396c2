"""Plot-ready CSV and JSON outputs.

Floats are written with ``repr`` (shortest round-trip form), so identical
inputs give identical bytes and a re-read recovers every value exactly.
A missing wall-clock measurement is written as an empty cell.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .harness import AGGREGATE_METRICS, AggregateStats, EpisodeLog

LOG_COLUMNS = ("step", "time_s", "robot_x", "robot_y", "robot_theta", "u1", "u2", "q_c",
               "cum_cost", "min_agent_dist_m", "min_obs_dist_m", "iter_time_ms")
STATS_COLUMNS = ("metric", "step", "time_s", "mean", "half_width", "ci_low", "ci_high")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def log_columns(log: EpisodeLog) -> tuple:
    """Header for an episode log; the heading column only exists for unicycles."""
    if log.robot.shape[1] >= 3:
        return LOG_COLUMNS
    return tuple(c for c in LOG_COLUMNS if c != "robot_theta")


def log_rows(log: EpisodeLog):
    has_theta = log.robot.shape[1] >= 3
    for k in range(log.steps):
        row = [k + 1, (k + 1) * log.dt, log.robot[k, 0], log.robot[k, 1]]
        if has_theta:
            row.append(log.robot[k, 2])
        row += [log.controls[k, 0], log.controls[k, 1], log.q_c[k], log.cum_cost[k],
                log.min_agent_dist[k], log.min_obs_dist[k], log.iter_time_ms[k]]
        yield row


def write_log_csv(log: EpisodeLog, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(log_columns(log))
        for row in log_rows(log):
            w.writerow([_fmt(v) for v in row])
    return path


def write_stats_csv(stats: AggregateStats, path) -> Path:
    """Long format: one block of ``steps`` rows per metric."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_COLUMNS)
        for name in AGGREGATE_METRICS:
            mean, half = stats.mean[name], stats.half_width[name]
            for k in range(stats.steps):
                w.writerow([name, k + 1, _fmt((k + 1) * stats.dt), _fmt(mean[k]), _fmt(half[k]),
                            _fmt(mean[k] - half[k]), _fmt(mean[k] + half[k])])
    return path


def read_csv(path) -> dict:
    """Column name -> list of parsed cells (int for ``step``, float or NaN otherwise)."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in body]
        if name == "metric":
            out[name] = col
        elif name == "step":
            out[name] = [int(c) for c in col]
        else:
            out[name] = [float(c) if c else math.nan for c in col]
    return out


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def safety_margin(stats: AggregateStats) -> float:
    """Lower 95% band of the per-run minimum agent distance."""
    d = stats.min_agent_dist
    if d.size == 0:
        return math.nan
    half = 1.96 * d.std(ddof=1) / math.sqrt(d.size) if d.size > 1 else 0.0
    return float(d.mean() - half)


def stats_summary(stats: AggregateStats) -> dict:
    lb = stats.lower_band("min_agent_dist")
    return {
        "n_runs": stats.n_runs,
        "steps": stats.steps,
        "collision_rate": stats.collision_rate,
        "goal_rate": stats.goal_rate,
        "mean_iter_ms": stats.mean_iter_ms,
        "final_cum_cost_mean": float(stats.mean["cum_cost"][-1]),
        "final_cum_cost_half_width": float(stats.half_width["cum_cost"][-1]),
        "min_agent_dist_lower_band": float(np.min(lb)) if lb.size else math.nan,
        "min_agent_dist_worst_run": float(stats.min_agent_dist.min()) if stats.n_runs else math.nan,
        "safety_margin": safety_margin(stats),
        "min_obs_dist_worst_run": float(stats.min_obs_dist.min()) if stats.n_runs else math.nan,
        "failures": [list(f) for f in stats.failures],
    }


def write_json(data: dict, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_json_safe(data), indent=2, sort_keys=True) + "\n")
    return path


def export_metrics(obj, path, fmt: str = "csv") -> Path:
    """Write an episode log or aggregate as ``csv`` or ``json``."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    if isinstance(obj, EpisodeLog):
        if fmt == "csv":
            return write_log_csv(obj, path)
        return write_json({
            "seed": obj.seed, "steps": obj.steps, "goal_reached": obj.goal_reached,
            "collision": obj.collision, "failure": obj.failure,
            "final_cum_cost": float(obj.cum_cost[-1]) if obj.steps else None,
            "config": obj.config,
        }, path)
    if isinstance(obj, AggregateStats):
        if fmt == "csv":
            return write_stats_csv(obj, path)
        return write_json({**stats_summary(obj), "config": obj.config}, path)
    raise TypeError(f"cannot export {type(obj).__name__}")
