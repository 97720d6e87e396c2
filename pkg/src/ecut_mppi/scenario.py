"""Scenario files: YAML with a ``schema_version`` and strict key checking.

See ``docs/scenario_schema.md`` for the layout. Every default that the
loader fills in shows up in :meth:`Scenario.echo`, which the harness writes
next to its outputs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .hybrid_dynamics import (
    ROBOT_STATE_DIM,
    ROBOT_STEPS,
    HybridAgentModel,
    Obstacle,
    PotentialFieldParams,
)
from .mppi_planner import PlannerConfig

SCHEMA_VERSION = 1
PLANNER_KINDS = ("ecut", "mc_baseline")

# PlannerConfig fields that come from elsewhere in the file or from the run
_DERIVED_PLANNER_FIELDS = {"dt", "robot_radius", "agent_radius", "seed"}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class RobotSpec:
    kind: str = "single_integrator"
    initial_state: tuple = (0.0, 0.0)
    goal: tuple = (0.0, 0.0)
    radius: float = 0.3


@dataclass(frozen=True)
class AgentDefaults:
    radius: float = 0.3
    sensing_radius: float = 2.0
    u_nom: tuple = (3.0, 0.0)
    alpha_dist: float = 80.0
    beta_dist: float = 1.0
    noise_scaling: str = "step"
    potential_field: PotentialFieldParams = field(default_factory=PotentialFieldParams)


@dataclass(frozen=True)
class AgentSpec:
    position: tuple
    u_nom: Optional[tuple] = None
    sensing_radius: Optional[float] = None


@dataclass(frozen=True)
class EpisodeSpec:
    steps: int = 100
    dt: float = 0.05
    goal_tolerance: float = 0.3
    belief_std: float = 0.05
    truth_noise: bool = True


@dataclass(frozen=True)
class PlannerSpec:
    kind: str = "ecut"
    mc_samples: int = 20
    settings: dict = field(default_factory=dict)  # PlannerConfig overrides


@dataclass(frozen=True)
class Scenario:
    name: str
    robot: RobotSpec
    agents: tuple
    obstacles: tuple
    episode: EpisodeSpec
    planner: PlannerSpec
    agent_defaults: AgentDefaults = field(default_factory=AgentDefaults)
    description: str = ""
    schema_version: int = SCHEMA_VERSION

    def planner_config(self, seed: int = 0) -> PlannerConfig:
        return PlannerConfig(
            dt=self.episode.dt,
            robot_radius=self.robot.radius,
            agent_radius=self.agent_defaults.radius,
            seed=seed,
            **self.planner.settings,
        )

    def agent_models(self) -> list:
        d = self.agent_defaults
        return [
            HybridAgentModel(
                sensing_radius=d.sensing_radius if a.sensing_radius is None else a.sensing_radius,
                u_nom=d.u_nom if a.u_nom is None else a.u_nom,
                alpha_dist=d.alpha_dist,
                beta_dist=d.beta_dist,
                pf=d.potential_field,
                noise_scaling=d.noise_scaling,
                obstacles=self.obstacles,
            )
            for a in self.agents
        ]

    def with_planner(self, kind: Optional[str] = None, mc_samples: Optional[int] = None,
                     **settings) -> "Scenario":
        """Copy with planner kind / K / PlannerConfig fields replaced."""
        allowed = set(_fields(PlannerConfig)) - _DERIVED_PLANNER_FIELDS
        _check_keys(settings, allowed, "planner")
        merged = dict(self.planner.settings)
        merged.update(settings)
        spec = PlannerSpec(
            kind=self.planner.kind if kind is None else kind,
            mc_samples=self.planner.mc_samples if mc_samples is None else mc_samples,
            settings=merged,
        )
        out = dataclasses.replace(self, planner=spec)
        validate(out)
        return out

    def with_episode(self, **settings) -> "Scenario":
        """Copy with episode fields (steps, dt, ...) replaced."""
        episode = _parse_episode({**dataclasses.asdict(self.episode), **settings})
        out = dataclasses.replace(self, episode=episode)
        validate(out)
        return out

    def echo(self) -> dict:
        """Fully resolved settings, defaults included, as plain data."""
        cfg = dataclasses.asdict(self.planner_config())
        cfg.pop("seed")
        d = self.agent_defaults
        return {
            "schema_version": self.schema_version,
            "name": self.name,
            "robot": _plain(dataclasses.asdict(self.robot)),
            "agent_defaults": _plain(dataclasses.asdict(d)),
            "agents": [_plain(dataclasses.asdict(a)) for a in self.agents],
            "obstacles": [{"center": list(o.center), "radius": o.radius} for o in self.obstacles],
            "episode": _plain(dataclasses.asdict(self.episode)),
            "planner": {
                "kind": self.planner.kind,
                "mc_samples": self.planner.mc_samples,
                "config": _plain(cfg),
            },
        }


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _check_keys(data, allowed, path):
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: expected a mapping, got {type(data).__name__}")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ScenarioError(f"{path}.{unknown[0]}: unknown key")


def _fields(cls):
    return [f.name for f in dataclasses.fields(cls)]


def _vector(value, n, path):
    try:
        arr = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{path}: expected a list of {n} numbers") from None
    if len(arr) != n or not all(np.isfinite(arr)):
        raise ScenarioError(f"{path}: expected {n} finite numbers, got {list(value)}")
    return arr


def _number(value, path, positive=False, nonneg=False):
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{path}: expected a number, got {value!r}") from None
    if not np.isfinite(x) or (positive and x <= 0) or (nonneg and x < 0):
        req = "positive" if positive else "non-negative" if nonneg else "finite"
        raise ScenarioError(f"{path}: must be {req}, got {value!r}")
    return x


def _parse_robot(data, path="robot"):
    _check_keys(data, _fields(RobotSpec), path)
    kind = data.get("kind", "single_integrator")
    if kind not in ROBOT_STEPS:
        raise ScenarioError(f"{path}.kind: must be one of {sorted(ROBOT_STEPS)}, got {kind!r}")
    n = ROBOT_STATE_DIM[kind]
    if "initial_state" not in data or "goal" not in data:
        raise ScenarioError(f"{path}: initial_state and goal are required")
    return RobotSpec(
        kind=kind,
        initial_state=_vector(data["initial_state"], n, f"{path}.initial_state"),
        goal=_vector(data["goal"], 2, f"{path}.goal"),
        radius=_number(data.get("radius", 0.3), f"{path}.radius", nonneg=True),
    )


def _parse_defaults(data, path="agent_defaults"):
    data = data or {}
    _check_keys(data, _fields(AgentDefaults), path)
    base = AgentDefaults()
    pf_data = data.get("potential_field", {}) or {}
    _check_keys(pf_data, _fields(PotentialFieldParams), f"{path}.potential_field")
    pf = PotentialFieldParams(
        **{k: _number(v, f"{path}.potential_field.{k}", positive=True) for k, v in pf_data.items()}
    )
    noise = data.get("noise_scaling", base.noise_scaling)
    if noise not in ("step", "sqrt_step"):
        raise ScenarioError(f"{path}.noise_scaling: must be 'step' or 'sqrt_step'")
    return AgentDefaults(
        radius=_number(data.get("radius", base.radius), f"{path}.radius", nonneg=True),
        sensing_radius=_number(data.get("sensing_radius", base.sensing_radius),
                               f"{path}.sensing_radius", nonneg=True),
        u_nom=_vector(data.get("u_nom", base.u_nom), 2, f"{path}.u_nom"),
        alpha_dist=_number(data.get("alpha_dist", base.alpha_dist), f"{path}.alpha_dist", positive=True),
        beta_dist=_number(data.get("beta_dist", base.beta_dist), f"{path}.beta_dist", positive=True),
        noise_scaling=noise,
        potential_field=pf,
    )


def _parse_agent(data, path):
    _check_keys(data, _fields(AgentSpec), path)
    if "position" not in data:
        raise ScenarioError(f"{path}.position: required")
    return AgentSpec(
        position=_vector(data["position"], 2, f"{path}.position"),
        u_nom=None if data.get("u_nom") is None else _vector(data["u_nom"], 2, f"{path}.u_nom"),
        sensing_radius=None if data.get("sensing_radius") is None
        else _number(data["sensing_radius"], f"{path}.sensing_radius", nonneg=True),
    )


def _parse_obstacle(data, path):
    _check_keys(data, ("center", "radius"), path)
    if "center" not in data or "radius" not in data:
        raise ScenarioError(f"{path}: center and radius are required")
    return Obstacle(_vector(data["center"], 2, f"{path}.center"),
                    _number(data["radius"], f"{path}.radius", positive=True))


def _parse_episode(data, path="episode"):
    data = data or {}
    _check_keys(data, _fields(EpisodeSpec), path)
    base = EpisodeSpec()
    steps = data.get("steps", base.steps)
    if not isinstance(steps, int) or isinstance(steps, bool) or steps < 1:
        raise ScenarioError(f"{path}.steps: must be an integer >= 1, got {steps!r}")
    truth_noise = data.get("truth_noise", base.truth_noise)
    if not isinstance(truth_noise, bool):
        raise ScenarioError(f"{path}.truth_noise: must be true or false")
    return EpisodeSpec(
        steps=steps,
        dt=_number(data.get("dt", base.dt), f"{path}.dt", positive=True),
        goal_tolerance=_number(data.get("goal_tolerance", base.goal_tolerance),
                               f"{path}.goal_tolerance", nonneg=True),
        belief_std=_number(data.get("belief_std", base.belief_std), f"{path}.belief_std", nonneg=True),
        truth_noise=truth_noise,
    )


def _parse_planner(data, path="planner"):
    data = dict(data or {})
    config_keys = [k for k in _fields(PlannerConfig) if k not in _DERIVED_PLANNER_FIELDS]
    _check_keys(data, ["kind", "mc_samples", *config_keys], path)
    kind = data.pop("kind", "ecut")
    if kind not in PLANNER_KINDS:
        raise ScenarioError(f"{path}.kind: must be one of {PLANNER_KINDS}, got {kind!r}")
    mc_samples = data.pop("mc_samples", 20)
    if not isinstance(mc_samples, int) or mc_samples < 2:
        raise ScenarioError(f"{path}.mc_samples: must be an integer >= 2")
    for key in ("noise_cov", "control_bounds"):
        if data.get(key) is not None:
            data[key] = tuple(tuple(float(v) for v in row) for row in data[key])
    return PlannerSpec(kind=kind, mc_samples=mc_samples, settings=data)


def validate(sc: Scenario) -> Scenario:
    try:
        sc.planner_config()
        sc.agent_models()
    except ValueError as exc:
        raise ScenarioError(f"planner: {exc}") from None
    x0 = np.asarray(sc.robot.initial_state[:2])
    for i, a in enumerate(sc.agents):
        if np.array_equal(np.asarray(a.position), x0):
            raise ScenarioError(f"agents[{i}].position: coincides with the robot's initial position")
    return sc


def parse_scenario(data: dict, default_name: str = "scenario") -> Scenario:
    allowed = [f for f in _fields(Scenario)]
    _check_keys(data, allowed, "<root>")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
    if "robot" not in data:
        raise ScenarioError("robot: required section")
    agents = data.get("agents") or []
    obstacles = data.get("obstacles") or []
    if not isinstance(agents, list) or not isinstance(obstacles, list):
        raise ScenarioError("agents and obstacles must be lists")
    sc = Scenario(
        name=str(data.get("name", default_name)),
        description=str(data.get("description", "")),
        robot=_parse_robot(data["robot"]),
        agent_defaults=_parse_defaults(data.get("agent_defaults")),
        agents=tuple(_parse_agent(a, f"agents[{i}]") for i, a in enumerate(agents)),
        obstacles=tuple(_parse_obstacle(o, f"obstacles[{i}]") for i, o in enumerate(obstacles)),
        episode=_parse_episode(data.get("episode")),
        planner=_parse_planner(data.get("planner")),
    )
    return validate(sc)


def builtin_scenarios() -> list:
    root = resources.files("ecut_mppi") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_path(name_or_path) -> Path:
    path = Path(name_or_path)
    if path.exists():
        return path
    packaged = resources.files("ecut_mppi") / "scenarios" / f"{name_or_path}.yaml"
    if packaged.is_file():
        return Path(str(packaged))
    raise FileNotFoundError(f"scenario file not found: {name_or_path}")


def load_scenario(name_or_path) -> Scenario:
    """Load a scenario file, or a packaged scenario by name."""
    path = resolve_path(name_or_path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: parse error: {exc}") from None
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: top level must be a mapping")
    return parse_scenario(data, default_name=path.stem)
