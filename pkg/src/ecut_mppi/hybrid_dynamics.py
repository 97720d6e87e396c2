"""Robot motion models and the two-mode attention model for non-ego agents.

Agents drift at a nominal velocity and are pushed by a repulsive potential
field. While the robot sits inside an agent's sensing radius the agent is
cooperative and treats the robot as a repulsion source; otherwise it ignores
the robot. Velocity noise shrinks as the agent moves faster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .sigma_transform import GaussianMoments

UNCOOPERATIVE = 1
COOPERATIVE = 2

PF_MIN_DISTANCE = 1e-6


class PartitionError(RuntimeError):
    """Zero or several modes claim the same (agent, robot) configuration."""


def wrap_angle(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    return math.pi - (math.pi - theta) % (2.0 * math.pi)


def single_integrator_step(x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    return x + np.asarray(u, dtype=float) * dt


def unicycle_step(x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    rx, ry, th = (float(v) for v in x)
    v, w = float(u[0]), float(u[1])
    return np.array(
        [rx + v * math.cos(th) * dt, ry + v * math.sin(th) * dt, wrap_angle(th + w * dt)]
    )


ROBOT_STEPS = {"single_integrator": single_integrator_step, "unicycle": unicycle_step}
ROBOT_STATE_DIM = {"single_integrator": 2, "unicycle": 3}


@dataclass(frozen=True)
class Obstacle:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"obstacle radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclass(frozen=True)
class PotentialFieldParams:
    gain: float = 0.5  # eta
    cutoff: float = 2.0  # d0 [m]
    max_speed: float = 2.0  # clip on the PF velocity [m/s]


def _norm2(dx: float, dy: float) -> float:
    # same arithmetic as the compiled kernels, so mode tests agree bit for bit
    return math.sqrt(dx * dx + dy * dy)


def _repulsion(px, py, sx, sy, surface, pf: PotentialFieldParams, out):
    dx, dy = px - sx, py - sy
    dc = _norm2(dx, dy)
    d = dc - surface
    if d >= pf.cutoff:
        return
    d = max(d, PF_MIN_DISTANCE)
    if dc > 0.0:
        ex, ey = dx / dc, dy / dc
    else:
        ex, ey = 1.0, 0.0
    mag = pf.gain * (1.0 / d - 1.0 / pf.cutoff) / (d * d)
    out[0] += mag * ex
    out[1] += mag * ey


def potential_field(
    x_p: np.ndarray,
    x_r: np.ndarray | None,
    others: Sequence[np.ndarray] = (),
    obstacles: Sequence[Obstacle] = (),
    params: PotentialFieldParams = PotentialFieldParams(),
) -> np.ndarray:
    """Repulsive velocity on an agent at ``x_p``.

    Point sources (robot, other agents) use centre distance; obstacles use
    distance to their boundary. Pass ``x_r=None`` to leave the robot out.
    """
    px, py = float(x_p[0]), float(x_p[1])
    out = [0.0, 0.0]
    if x_r is not None:
        _repulsion(px, py, float(x_r[0]), float(x_r[1]), 0.0, params, out)
    for q in others:
        _repulsion(px, py, float(q[0]), float(q[1]), 0.0, params, out)
    for o in obstacles:
        _repulsion(px, py, o.center[0], o.center[1], o.radius, params, out)
    mag = _norm2(out[0], out[1])
    if mag > params.max_speed:
        s = params.max_speed / mag
        out[0] *= s
        out[1] *= s
    return np.array(out)


def disturbance_variance(speed: float, alpha: float, beta: float) -> float:
    if speed <= 0.0:
        return alpha
    return alpha * math.tanh(beta / speed)


def disturbance_covariance(velocity: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """Isotropic velocity-noise covariance, larger for slower agents."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("disturbance parameters must be positive")
    v = np.asarray(velocity, dtype=float)
    return disturbance_variance(_norm2(v[0], v[1]), alpha, beta) * np.eye(2)


Activation = Callable[[np.ndarray, np.ndarray], float]
ModeDynamics = Callable[[np.ndarray, np.ndarray, float], GaussianMoments]


@dataclass(frozen=True)
class ModeSpec:
    """A mode is active where every activation function is <= 0."""

    id: int
    activations: tuple
    dynamics: ModeDynamics

    def is_active(self, x_p: np.ndarray, x_r: np.ndarray) -> bool:
        return all(g(x_p, x_r) <= 0.0 for g in self.activations)


@dataclass(frozen=True)
class HybridAgentModel:
    sensing_radius: float = 2.0
    u_nom: tuple = (3.0, 0.0)
    alpha_dist: float = 80.0
    beta_dist: float = 1.0
    pf: PotentialFieldParams = field(default_factory=PotentialFieldParams)
    noise_scaling: str = "step"  # "step": cov*dt^2, "sqrt_step": cov*dt
    obstacles: tuple = ()

    def __post_init__(self):
        if self.noise_scaling not in ("step", "sqrt_step"):
            raise ValueError(f"unknown noise_scaling {self.noise_scaling!r}")
        object.__setattr__(self, "u_nom", tuple(float(v) for v in self.u_nom))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    @property
    def modes(self) -> tuple:
        d_s = self.sensing_radius
        # strict '>' for the uncooperative region, '<=' for the cooperative one
        outside = np.nextafter(d_s, np.inf)
        return (
            ModeSpec(
                UNCOOPERATIVE,
                (lambda xp, xr: outside - _norm2(xp[0] - xr[0], xp[1] - xr[1]),),
                lambda xp, xr, dt: agent_conditional_moments(self, UNCOOPERATIVE, xp, xr, dt),
            ),
            ModeSpec(
                COOPERATIVE,
                (lambda xp, xr: _norm2(xp[0] - xr[0], xp[1] - xr[1]) - d_s,),
                lambda xp, xr, dt: agent_conditional_moments(self, COOPERATIVE, xp, xr, dt),
            ),
        )

    def noise_factor(self, dt: float) -> float:
        return dt * dt if self.noise_scaling == "step" else dt


def active_mode(model: HybridAgentModel, x_p: np.ndarray, x_r: np.ndarray) -> int:
    active = [m.id for m in model.modes if m.is_active(x_p, x_r)]
    if len(active) != 1:
        raise PartitionError(
            f"expected exactly one active mode at x_p={x_p}, x_r={x_r}, got {active}"
        )
    return active[0]


def agent_drift(
    model: HybridAgentModel, mode: int, x_p: np.ndarray, x_r: np.ndarray, others=()
) -> np.ndarray:
    if mode not in (UNCOOPERATIVE, COOPERATIVE):
        raise ValueError(f"unknown mode {mode}")
    source = x_r if mode == COOPERATIVE else None
    pf = potential_field(x_p, source, others, model.obstacles, model.pf)
    return np.asarray(model.u_nom) + pf


def agent_conditional_moments(
    model: HybridAgentModel,
    mode: int,
    x_p: np.ndarray,
    x_r: np.ndarray,
    dt: float,
    others=(),
) -> GaussianMoments:
    u_det = agent_drift(model, mode, x_p, x_r, others)
    var = disturbance_variance(_norm2(u_det[0], u_det[1]), model.alpha_dist, model.beta_dist)
    mean = np.asarray(x_p, dtype=float)[:2] + u_det * dt
    return GaussianMoments(mean, var * model.noise_factor(dt) * np.eye(2))


def distance_to_agent(x_r: np.ndarray, x_p: np.ndarray, radii: float) -> float:
    return _norm2(float(x_r[0]) - float(x_p[0]), float(x_r[1]) - float(x_p[1])) - radii


def distance_to_obstacle(x_r: np.ndarray, o: Obstacle, robot_radius: float) -> float:
    return distance_to_agent(x_r, o.center, o.radius + robot_radius)
