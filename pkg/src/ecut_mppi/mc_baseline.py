"""Monte-Carlo agent prediction for the risk-aware MPPI comparison planner.

Instead of sigma points, each control sample gets K random replicas of every
agent. Replicas start from draws of the belief Gaussian and switch modes
individually against the robot trajectory. Risk uses the unweighted sample
mean and standard deviation of the safety distance over the replicas.

The compiled planner path (``Planner(predictor="mc")``) gives every control
sample its own seeded normal stream and draws in the same order as
:func:`mc_agent_rollout`, so the two agree draw for draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .hybrid_dynamics import (
    ROBOT_STEPS,
    UNCOOPERATIVE,
    HybridAgentModel,
    Obstacle,
    active_mode,
    agent_conditional_moments,
    distance_to_agent,
)
from .mppi_planner import (
    AgentBelief,
    PlannerConfig,
    agent_risk_from_stats,
    control_cost,
    obstacle_risk,
    stage_cost_convergence,
)
from ._rng import next_normal, seed_state
from .sigma_transform import psd_sqrt


class McConfigError(ValueError):
    pass


@dataclass
class McPredictionBundle:
    """``positions`` has shape (H+1, A, K, 2); index 0 holds the initial draws."""

    positions: np.ndarray
    seed: int

    @property
    def replicas(self) -> int:
        return self.positions.shape[2]


def mc_agent_rollout(
    x_r_traj: np.ndarray,
    beliefs: Sequence[AgentBelief],
    models: Sequence[HybridAgentModel],
    K: int,
    seed: int,
    dt: float,
    aware: bool = True,
) -> McPredictionBundle:
    """Propagate K random replicas of every agent along a robot trajectory.

    ``x_r_traj`` holds H+1 robot states; the agents move H steps.
    """
    if K < 1:
        raise McConfigError(f"K must be >= 1, got {K}")
    state = np.empty(2, dtype=np.uint64)
    seed_state(np.uint64(seed), state)
    H = len(x_r_traj) - 1
    A = len(beliefs)
    pos = np.empty((H + 1, A, K, 2))
    for a, b in enumerate(beliefs):
        L = psd_sqrt(b.covariance)
        for k in range(K):
            z0 = next_normal(state)
            z1 = next_normal(state)
            pos[0, a, k, 0] = b.mean[0] + L[0, 0] * z0 + L[0, 1] * z1
            pos[0, a, k, 1] = b.mean[1] + L[1, 0] * z0 + L[1, 1] * z1
    for t in range(H):
        x_r = x_r_traj[t]
        for a, model in enumerate(models):
            for k in range(K):
                p = pos[t, a, k]
                mode = active_mode(model, p, x_r) if aware else UNCOOPERATIVE
                mom = agent_conditional_moments(model, mode, p, x_r, dt)
                sd = math.sqrt(mom.covariance[0, 0])
                z0 = next_normal(state)
                z1 = next_normal(state)
                pos[t + 1, a, k, 0] = mom.mean[0] + sd * z0
                pos[t + 1, a, k, 1] = mom.mean[1] + sd * z1
    return McPredictionBundle(pos, seed)


def replica_distance_stats(x_r, replicas: np.ndarray, radii: float) -> tuple:
    """Sample mean and (ddof=1) standard deviation of distances to K replicas."""
    if replicas.shape[0] < 2:
        raise McConfigError("need at least two replicas for a standard deviation")
    d = np.array([distance_to_agent(x_r, p, radii) for p in replicas])
    return float(d.mean()), float(d.std(ddof=1))


def mc_stage_cost_risk(
    x_r: np.ndarray,
    replicas_per_agent: Sequence[np.ndarray],
    obstacles: Sequence[Obstacle],
    config: PlannerConfig,
) -> float:
    """Same barrier as the sigma-point risk, with sample statistics over replicas."""
    stats = [replica_distance_stats(x_r, r, config.body_radii) for r in replicas_per_agent]
    return agent_risk_from_stats(stats, config) + obstacle_risk(x_r, obstacles, config)


def mc_rollout_cost(
    x_r0: np.ndarray,
    beliefs: Sequence[AgentBelief],
    controls: np.ndarray,
    mean_controls: np.ndarray,
    models: Sequence[HybridAgentModel],
    obstacles: Sequence[Obstacle],
    goal: np.ndarray,
    config: PlannerConfig,
    K: int,
    seed: int,
    robot_kind: str = "single_integrator",
) -> float:
    """Reference cost of one control sample under the Monte-Carlo predictor."""
    step = ROBOT_STEPS[robot_kind]
    traj = [np.asarray(x_r0, dtype=float)]
    for t in range(config.horizon):
        traj.append(step(traj[-1], controls[t], config.dt))
    bundle = mc_agent_rollout(traj, beliefs, models, K, seed, config.dt,
                              aware=config.awareness == "aware")
    cost = 0.0
    for t in range(config.horizon):
        x = traj[t]
        cost += stage_cost_convergence(x, goal, config.goal_gain)
        cost += mc_stage_cost_risk(x, list(bundle.positions[t]), obstacles, config)
        cost += control_cost(mean_controls[t], controls[t], config)
    return cost + stage_cost_convergence(traj[-1], goal, config.goal_gain)
