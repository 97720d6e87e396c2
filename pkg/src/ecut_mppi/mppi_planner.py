"""ECUT-MPPI: path-integral control with sigma-point agent prediction.

Each sampled control sequence is rolled out against per-agent sigma-point
sets. Every sigma point picks its own hybrid mode from the robot's predicted
position, so a robot grazing an agent's sensing radius influences only part
of the agent's predicted distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .hybrid_dynamics import (
    COOPERATIVE,
    ROBOT_STEPS,
    UNCOOPERATIVE,
    HybridAgentModel,
    Obstacle,
    active_mode,
    agent_conditional_moments,
    distance_to_agent,
    distance_to_obstacle,
)
from .sigma_transform import (
    GaussianMoments,
    SigmaPointError,
    SigmaPointSet,
    default_kappa,
    ecut_step,
    empirical_moments,
    generate_ut_points,
    psd_sqrt,
)

AgentBelief = GaussianMoments

SWITCHING = ("sigma", "mean")
AWARENESS = ("aware", "unaware")


class RolloutError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 40
    samples: int = 500
    dt: float = 0.05
    noise_cov: tuple = ((4.0, 0.0), (0.0, 4.0))
    temperature: float = 1.0
    control_blend: Optional[float] = None  # gamma; None -> 0.1 * temperature
    goal_gain: float = 1.0
    agent_gain: float = 1.0
    obstacle_gain: float = 1.0
    risk_alpha: float = 1.96
    safety_margin: float = 0.0
    barrier_floor: float = 0.01
    switching: str = "sigma"
    awareness: str = "aware"
    control_bounds: Optional[tuple] = None  # ((u1_lo, u1_hi), (u2_lo, u2_hi))
    robot_radius: float = 0.3
    agent_radius: float = 0.3
    kappa: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        cov = np.asarray(self.noise_cov, dtype=float)
        if cov.shape != (2, 2):
            raise ValueError(f"noise_cov must be 2x2, got shape {cov.shape}")
        object.__setattr__(self, "noise_cov", tuple(tuple(float(v) for v in row) for row in cov))
        if self.control_blend is None:
            object.__setattr__(self, "control_blend", 0.1 * self.temperature)
        if self.horizon < 1 or self.samples < 1:
            raise ValueError("horizon and samples must be >= 1")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not 0.0 <= self.control_blend <= self.temperature:
            raise ValueError("control_blend must lie in [0, temperature]")
        if min(self.goal_gain, self.agent_gain, self.obstacle_gain) <= 0:
            raise ValueError("cost gains must be positive")
        if self.risk_alpha < 0:
            raise ValueError("risk_alpha must be >= 0")
        if self.switching not in SWITCHING:
            raise ValueError(f"switching must be one of {SWITCHING}")
        if self.awareness not in AWARENESS:
            raise ValueError(f"awareness must be one of {AWARENESS}")
        try:
            psd_sqrt(cov)
        except SigmaPointError as exc:
            raise ValueError(f"noise_cov: {exc}") from None

    @property
    def sigma(self) -> np.ndarray:
        return np.asarray(self.noise_cov)

    @property
    def sigma_inv(self) -> np.ndarray:
        return np.linalg.pinv(self.sigma)

    @property
    def body_radii(self) -> float:
        return self.robot_radius + self.agent_radius


@dataclass
class RolloutResult:
    index: int
    robot: np.ndarray  # (H+1, n_r)
    agents: list  # per agent: list of H+1 SigmaPointSet
    cost: float
    modes: np.ndarray  # (H, A, N) active mode id per sigma point


def sample_perturbations(config: PlannerConfig, rng: np.random.Generator) -> np.ndarray:
    """(M, H, 2) draws from N(0, noise_cov)."""
    z = rng.standard_normal((config.samples, config.horizon, 2))
    return z @ psd_sqrt(config.sigma).T


def stage_cost_convergence(x_r: np.ndarray, goal: np.ndarray, gain: float) -> float:
    dx = float(x_r[0]) - float(goal[0])
    dy = float(x_r[1]) - float(goal[1])
    return gain * (dx * dx + dy * dy)


def distance_stats(x_r: np.ndarray, sps: SigmaPointSet, radii: float) -> tuple:
    """Weighted mean and standard deviation of the safety distance."""
    d = np.array([distance_to_agent(x_r, p, radii) for p in sps.points])
    mean = float(sps.weights @ d)
    var = float(sps.weights @ (d - mean) ** 2)
    return mean, math.sqrt(max(var, 0.0))


def barrier(gain: float, h: float, floor: float) -> float:
    return gain / max(h, floor)


def obstacle_risk(x_r, obstacles: Sequence[Obstacle], config: PlannerConfig) -> float:
    if not obstacles:
        return 0.0
    h = min(distance_to_obstacle(x_r, o, config.robot_radius) for o in obstacles)
    return barrier(config.obstacle_gain, h - config.safety_margin, config.barrier_floor)


def agent_risk_from_stats(stats: Sequence[tuple], config: PlannerConfig) -> float:
    """Barrier on the smallest lower confidence bound mean - alpha * std."""
    if not stats:
        return 0.0
    r = min(mu - config.risk_alpha * sd for mu, sd in stats)
    return barrier(config.agent_gain, r - config.safety_margin, config.barrier_floor)


def stage_cost_risk(
    x_r: np.ndarray,
    agent_sets: Sequence[SigmaPointSet],
    obstacles: Sequence[Obstacle],
    config: PlannerConfig,
) -> float:
    stats = [distance_stats(x_r, s, config.body_radii) for s in agent_sets]
    return agent_risk_from_stats(stats, config) + obstacle_risk(x_r, obstacles, config)


def control_cost(v: np.ndarray, u: np.ndarray, config: PlannerConfig) -> float:
    return config.control_blend * float(v @ config.sigma_inv @ u)


def _point_modes(model, sps, x_r, config):
    if config.awareness == "unaware":
        return [UNCOOPERATIVE] * len(sps)
    if config.switching == "mean":
        mode = active_mode(model, empirical_moments(sps).mean, x_r)
        return [mode] * len(sps)
    return [active_mode(model, p, x_r) for p in sps.points]


def rollout(
    m: int,
    x_r0: np.ndarray,
    beliefs: Sequence[AgentBelief],
    controls: np.ndarray,
    mean_controls: np.ndarray,
    models: Sequence[HybridAgentModel],
    obstacles: Sequence[Obstacle],
    goal: np.ndarray,
    config: PlannerConfig,
    robot_kind: str = "single_integrator",
) -> RolloutResult:
    """Reference rollout of one control sample, one sigma point at a time."""
    step = ROBOT_STEPS[robot_kind]
    H = config.horizon
    x = np.asarray(x_r0, dtype=float)
    try:
        sets = [generate_ut_points(b, config.kappa) for b in beliefs]
    except SigmaPointError as exc:
        raise RolloutError(f"sample {m}: {exc}") from exc
    robot = [x]
    history = [[s] for s in sets]
    n_pts = len(sets[0]) if sets else 0
    modes = np.zeros((H, len(sets), n_pts), dtype=int)
    cost = 0.0
    for t in range(H):
        cost += stage_cost_convergence(x, goal, config.goal_gain)
        cost += stage_cost_risk(x, sets, obstacles, config)
        cost += control_cost(mean_controls[t], controls[t], config)
        new_sets = []
        for a, (model, sps) in enumerate(zip(models, sets)):
            point_modes = _point_modes(model, sps, x, config)
            modes[t, a] = point_modes
            lookup = {tuple(p): q for p, q in zip(sps.points, point_modes)}

            def fmap(p, model=model, lookup=lookup, x=x):
                return agent_conditional_moments(model, lookup[tuple(p)], p, x, config.dt)

            try:
                new_sets.append(ecut_step(fmap, sps, config.kappa))
            except SigmaPointError as exc:
                raise RolloutError(f"sample {m}, step {t}, agent {a}: {exc}") from exc
        sets = new_sets
        for a, s in enumerate(sets):
            history[a].append(s)
        x = step(x, controls[t], config.dt)
        robot.append(x)
    cost += stage_cost_convergence(x, goal, config.goal_gain)
    return RolloutResult(m, np.array(robot), history, cost, modes)


def mppi_weights(costs: np.ndarray, temperature: float) -> np.ndarray:
    costs = np.asarray(costs, dtype=float)
    return np.exp(-(costs - costs.min()) / temperature)


def update_control(weights: np.ndarray, sequences: np.ndarray, costs=None) -> np.ndarray:
    """Weighted average of the sampled sequences, shape (H, 2)."""
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if not total > 0:
        best = int(np.argmin(costs)) if costs is not None else int(np.argmax(weights))
        return np.array(sequences[best], dtype=float)
    return np.tensordot(weights, sequences, axes=1) / total


def _agent_table(models: Sequence[HybridAgentModel]) -> np.ndarray:
    table = np.empty((len(models), K.N_AGENT_PARAMS))
    for a, md in enumerate(models):
        table[a, K.P_UX], table[a, K.P_UY] = md.u_nom
        table[a, K.P_DS] = md.sensing_radius
        table[a, K.P_ALPHA] = md.alpha_dist
        table[a, K.P_BETA] = md.beta_dist
        table[a, K.P_GAIN] = md.pf.gain
        table[a, K.P_CUTOFF] = md.pf.cutoff
        table[a, K.P_VMAX] = md.pf.max_speed
    return table


def obstacle_array(obstacles: Sequence[Obstacle]) -> np.ndarray:
    arr = np.array([[o.center[0], o.center[1], o.radius] for o in obstacles], dtype=float)
    return arr.reshape(len(obstacles), 3)


class Planner:
    """Receding-horizon MPPI. ``predictor`` is "ecut" or "mc" (K random replicas)."""

    def __init__(
        self,
        config: PlannerConfig,
        goal,
        models: Sequence[HybridAgentModel],
        obstacles: Sequence[Obstacle] = (),
        robot_kind: str = "single_integrator",
        predictor: str = "ecut",
        mc_samples: int = 20,
    ):
        if predictor not in ("ecut", "mc"):
            raise ValueError(f"unknown predictor {predictor!r}")
        if predictor == "mc" and mc_samples < 2:
            raise ValueError("the Monte-Carlo predictor needs mc_samples >= 2")
        if robot_kind not in ROBOT_STEPS:
            raise ValueError(f"unknown robot kind {robot_kind!r}")
        for md in models:
            if tuple(md.obstacles) != tuple(obstacles):
                raise ValueError("agent models must see the planner's obstacle set")
        if len({md.noise_scaling for md in models}) > 1:
            raise ValueError("all agent models must share one noise_scaling policy")
        self.config = config
        self.goal = np.asarray(goal, dtype=float)
        self.models = list(models)
        self.obstacles = list(obstacles)
        self.robot_kind = robot_kind
        self.predictor = predictor
        self.mc_samples = mc_samples
        self.rng = np.random.default_rng(config.seed)
        self.mean_seq = np.zeros((config.horizon, 2))
        self._obs = obstacle_array(self.obstacles)
        self._agents = _agent_table(self.models)
        self._cost_params = self._pack_costs()
        self.last = {}

    def _pack_costs(self) -> np.ndarray:
        c = self.config
        cp = np.empty(K.N_COST_PARAMS)
        cp[K.C_BLEND] = c.control_blend
        cp[K.C_GOAL] = c.goal_gain
        cp[K.C_AGENT] = c.agent_gain
        cp[K.C_OBS] = c.obstacle_gain
        cp[K.C_RISK] = c.risk_alpha
        cp[K.C_FLOOR] = c.barrier_floor
        cp[K.C_MARGIN] = c.safety_margin
        cp[K.C_RADII] = c.body_radii
        cp[K.C_ROBOT_R] = c.robot_radius
        cp[K.C_DT] = c.dt
        cp[K.C_KAPPA] = default_kappa(2) if c.kappa is None else c.kappa
        cp[K.C_NOISE] = self.models[0].noise_factor(c.dt) if self.models else 0.0
        return cp

    def reset(self, seed: Optional[int] = None):
        self.rng = np.random.default_rng(self.config.seed if seed is None else seed)
        self.mean_seq = np.zeros((self.config.horizon, 2))

    def evaluate(self, x_r, beliefs: Sequence[AgentBelief], controls: np.ndarray,
                 seeds: Optional[np.ndarray] = None) -> np.ndarray:
        """Costs S_m of the (M, H, 2) control samples."""
        c = self.config
        x0 = np.asarray(x_r, dtype=float)
        kind = K.SINGLE_INTEGRATOR if self.robot_kind == "single_integrator" else K.UNICYCLE
        aware = c.awareness == "aware"
        controls = np.ascontiguousarray(controls, dtype=float)
        if self.predictor == "ecut":
            if beliefs:
                sets = [generate_ut_points(b, c.kappa) for b in beliefs]
                sigma0 = np.stack([s.points for s in sets])
                w = sets[0].weights
            else:
                sigma0 = np.zeros((0, 5, 2))
                w = np.zeros(5)
            switching = K.SWITCH_MEAN if c.switching == "mean" else K.SWITCH_SIGMA
            return K.ecut_costs(x0, kind, controls, self.mean_seq, c.sigma_inv, self.goal,
                                self._cost_params, self._obs, sigma0, w, self._agents,
                                switching, aware)
        mu0 = np.array([b.mean for b in beliefs]).reshape(len(beliefs), 2)
        chol0 = np.array([psd_sqrt(b.covariance) for b in beliefs]).reshape(len(beliefs), 2, 2)
        if seeds is None:
            seeds = self.rng.integers(0, np.iinfo(np.uint64).max, size=controls.shape[0], dtype=np.uint64)
        return K.mc_costs(x0, kind, controls, self.mean_seq, c.sigma_inv, self.goal,
                          self._cost_params, self._obs, mu0, chol0, self._agents,
                          self.mc_samples, np.asarray(seeds, dtype=np.uint64), aware)

    def receding_horizon_step(self, x_r, beliefs: Sequence[AgentBelief]) -> np.ndarray:
        """Plan once, return the first control and warm-start the next call."""
        c = self.config
        eps = sample_perturbations(c, self.rng)
        controls = self.mean_seq[None] + eps
        costs = self.evaluate(x_r, beliefs, controls)
        if not np.all(np.isfinite(costs)):
            raise RolloutError(f"non-finite rollout cost at samples {np.flatnonzero(~np.isfinite(costs))}")
        weights = mppi_weights(costs, c.temperature)
        v_plus = update_control(weights, controls, costs)
        if c.control_bounds is not None:
            lo, hi = np.asarray(c.control_bounds, dtype=float).T
            v_plus = np.clip(v_plus, lo, hi)
        self.last = {
            "beta": float(costs.min()),
            "ess": float(weights.sum() / weights.max()),
            "plan": v_plus,
        }
        self.mean_seq = np.concatenate([v_plus[1:], v_plus[-1:]], axis=0)
        return v_plus[0].copy()
