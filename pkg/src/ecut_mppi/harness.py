"""Closed-loop episodes with ground-truth agents, and seeded Monte-Carlo sweeps."""

from __future__ import annotations

import math
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .hybrid_dynamics import (
    ROBOT_STEPS,
    active_mode,
    agent_conditional_moments,
    distance_to_agent,
    distance_to_obstacle,
)
from .mppi_planner import Planner, barrier, stage_cost_convergence
from .scenario import Scenario
from .sigma_transform import GaussianMoments

CI_Z = 1.96
AGGREGATE_METRICS = ("cum_cost", "min_agent_dist", "min_obs_dist")


@dataclass
class EpisodeLog:
    seed: int
    dt: float
    robot: np.ndarray  # (T, n_r) state after each applied control
    controls: np.ndarray  # (T, 2)
    agents: np.ndarray  # (T, A, 2)
    q_c: np.ndarray
    stage_cost: np.ndarray
    cum_cost: np.ndarray
    min_agent_dist: np.ndarray
    min_obs_dist: np.ndarray
    iter_time_ms: np.ndarray  # NaN when timing is not recorded
    beta: np.ndarray
    ess: np.ndarray
    goal_reached: bool = False
    collision: bool = False
    failure: Optional[str] = None
    config: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return len(self.q_c)


@dataclass
class AggregateStats:
    steps: int
    dt: float
    n_runs: int
    mean: dict  # metric -> (T,) mean over completed runs
    half_width: dict  # metric -> (T,) 95% CI half width
    collision_rate: float
    goal_rate: float
    mean_iter_ms: float
    final_cum_cost: np.ndarray  # per completed run
    min_agent_dist: np.ndarray  # per completed run, minimum over time
    min_obs_dist: np.ndarray
    failures: list = field(default_factory=list)  # (seed, message)
    config: dict = field(default_factory=dict)
    logs: list = field(default_factory=list, repr=False)  # only with keep_logs

    def lower_band(self, metric: str) -> np.ndarray:
        return self.mean[metric] - self.half_width[metric]


def build_planner(scenario: Scenario, seed: int) -> Planner:
    return Planner(
        scenario.planner_config(seed),
        scenario.robot.goal,
        scenario.agent_models(),
        scenario.obstacles,
        robot_kind=scenario.robot.kind,
        predictor="mc" if scenario.planner.kind == "mc_baseline" else "ecut",
        mc_samples=scenario.planner.mc_samples,
    )


def _min_distances(x_r, agents, scenario, radii):
    da = min((distance_to_agent(x_r, p, radii) for p in agents), default=math.inf)
    do = min((distance_to_obstacle(x_r, o, scenario.robot.radius) for o in scenario.obstacles),
             default=math.inf)
    return da, do


def simulate_episode(scenario: Scenario, seed: int, record_timing: bool = True) -> EpisodeLog:
    """Run one closed-loop episode. Deterministic in (scenario, seed) apart
    from the wall-clock column."""
    ep = scenario.episode
    T, dt = ep.steps, ep.dt
    planner = build_planner(scenario, seed)
    cfg = planner.config
    truth_rng = np.random.default_rng([seed, 1])
    models = scenario.agent_models()
    step = ROBOT_STEPS[scenario.robot.kind]
    belief_cov = ep.belief_std**2 * np.eye(2)
    goal = np.asarray(scenario.robot.goal)

    x_r = np.asarray(scenario.robot.initial_state, dtype=float)
    agents = np.array([a.position for a in scenario.agents], dtype=float).reshape(-1, 2)
    rows = {k: [] for k in ("robot", "controls", "agents", "q_c", "stage", "cum", "da", "do",
                            "time", "beta", "ess")}
    cum = 0.0
    failure = None
    for k in range(T):
        beliefs = [GaussianMoments(p, belief_cov) for p in agents]
        t0 = time.perf_counter()
        try:
            u = planner.receding_horizon_step(x_r, beliefs)
        except Exception as exc:  # keep the partial log
            failure = f"step {k}: {type(exc).__name__}: {exc}"
            break
        elapsed = (time.perf_counter() - t0) * 1e3

        moved = np.empty_like(agents)
        for a, (model, p) in enumerate(zip(models, agents)):
            mom = agent_conditional_moments(model, active_mode(model, p, x_r), p, x_r, dt)
            z = truth_rng.standard_normal(2)
            moved[a] = mom.mean + (math.sqrt(mom.covariance[0, 0]) * z if ep.truth_noise else 0.0)
        x_r = step(x_r, u, dt)
        agents = moved

        q_c = stage_cost_convergence(x_r, goal, cfg.goal_gain)
        da, do = _min_distances(x_r, agents, scenario, cfg.body_radii)
        q_h = 0.0
        if len(agents):
            q_h += barrier(cfg.agent_gain, da, cfg.barrier_floor)
        if scenario.obstacles:
            q_h += barrier(cfg.obstacle_gain, do, cfg.barrier_floor)
        cum += q_c + q_h
        for key, val in (("robot", x_r), ("controls", u), ("agents", agents.copy()), ("q_c", q_c),
                         ("stage", q_c + q_h), ("cum", cum), ("da", da), ("do", do),
                         ("time", elapsed if record_timing else math.nan),
                         ("beta", planner.last["beta"]), ("ess", planner.last["ess"])):
            rows[key].append(val)

    n_r = len(scenario.robot.initial_state)
    da_arr = np.array(rows["da"], dtype=float)
    do_arr = np.array(rows["do"], dtype=float)
    robot = np.array(rows["robot"], dtype=float).reshape(-1, n_r)
    reached = bool(len(robot)) and float(np.linalg.norm(robot[-1, :2] - goal)) <= ep.goal_tolerance
    return EpisodeLog(
        seed=seed,
        dt=dt,
        robot=robot,
        controls=np.array(rows["controls"], dtype=float).reshape(-1, 2),
        agents=np.array(rows["agents"], dtype=float).reshape(len(rows["q_c"]), len(scenario.agents), 2),
        q_c=np.array(rows["q_c"], dtype=float),
        stage_cost=np.array(rows["stage"], dtype=float),
        cum_cost=np.array(rows["cum"], dtype=float),
        min_agent_dist=da_arr,
        min_obs_dist=do_arr,
        iter_time_ms=np.array(rows["time"], dtype=float),
        beta=np.array(rows["beta"], dtype=float),
        ess=np.array(rows["ess"], dtype=float),
        goal_reached=reached,
        collision=bool(np.any(da_arr <= 0.0) or np.any(do_arr <= 0.0)),
        failure=failure,
        config=scenario.echo(),
    )


def mean_ci(samples: np.ndarray, z: float = CI_Z) -> tuple:
    """Per-column mean and normal-approximation CI half width (rows are runs)."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean)
    half = z * samples.std(axis=0, ddof=1) / math.sqrt(n)
    # identical runs: the summed mean can differ from the value by an ulp
    return mean, np.where(np.ptp(samples, axis=0) == 0.0, 0.0, half)


def _episode_job(args):
    scenario, seed, record_timing = args
    return simulate_episode(scenario, seed, record_timing)


def run_monte_carlo(scenario: Scenario, n_runs: int, seed0: int = 0, workers: int = 1,
                    record_timing: bool = True, keep_logs: bool = False) -> AggregateStats:
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    jobs = [(scenario, seed0 + i, record_timing) for i in range(n_runs)]
    if workers > 1:
        # fork is unsafe once the OpenMP runtime is live
        with ProcessPoolExecutor(workers, mp_context=multiprocessing.get_context("spawn")) as pool:
            logs = list(pool.map(_episode_job, jobs))
    else:
        logs = [_episode_job(j) for j in jobs]
    return aggregate(logs, scenario, keep_logs)


def aggregate(logs, scenario: Scenario, keep_logs: bool = False) -> AggregateStats:
    T = scenario.episode.steps
    done = [lg for lg in logs if lg.failure is None and lg.steps == T]
    failures = [(lg.seed, lg.failure or "incomplete log") for lg in logs if lg not in done]
    mean, half = {}, {}
    series = {
        "cum_cost": [lg.cum_cost for lg in done],
        "min_agent_dist": [lg.min_agent_dist for lg in done],
        "min_obs_dist": [lg.min_obs_dist for lg in done],
    }
    for name in AGGREGATE_METRICS:
        if done:
            mean[name], half[name] = mean_ci(np.array(series[name]))
        else:
            mean[name] = np.full(T, np.nan)
            half[name] = np.full(T, np.nan)
    n = len(done)
    times = np.array([lg.iter_time_ms for lg in done]).ravel()
    times = times[np.isfinite(times)]
    # failed episodes count against both rates
    total = len(logs)
    return AggregateStats(
        steps=T,
        dt=scenario.episode.dt,
        n_runs=n,
        mean=mean,
        half_width=half,
        collision_rate=(sum(lg.collision for lg in done) + len(failures)) / total,
        goal_rate=sum(lg.goal_reached for lg in done) / total,
        mean_iter_ms=float(times.mean()) if times.size else math.nan,
        final_cum_cost=np.array([lg.cum_cost[-1] for lg in done]),
        min_agent_dist=np.array([lg.min_agent_dist.min() for lg in done]),
        min_obs_dist=np.array([lg.min_obs_dist.min() for lg in done]),
        failures=failures,
        config=scenario.echo(),
        logs=list(logs) if keep_logs else [],
    )


# The ECUT variants differ from "aware" in exactly one planner field.
ECUT_VARIANTS = {
    "aware": dict(kind="ecut", switching="sigma", awareness="aware"),
    "unaware": dict(kind="ecut", switching="sigma", awareness="unaware"),
    "mean-based": dict(kind="ecut", switching="mean", awareness="aware"),
}


def variant_scenarios(scenario: Scenario, mc_k=(20,)) -> dict:
    """Ordered name -> scenario for the comparison study."""
    out = {name: scenario.with_planner(**kw) for name, kw in ECUT_VARIANTS.items()}
    for k in mc_k:
        out[f"mc_baseline_k{k}"] = scenario.with_planner(
            kind="mc_baseline", mc_samples=k, switching="sigma", awareness="aware")
    return out
