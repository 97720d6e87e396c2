import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import mc_agent_steps
from ecut_mppi.hybrid_dynamics import (
    COOPERATIVE,
    UNCOOPERATIVE,
    HybridAgentModel,
    Obstacle,
    PartitionError,
    PotentialFieldParams,
    active_mode,
    agent_conditional_moments,
    disturbance_covariance,
    disturbance_variance,
    distance_to_agent,
    distance_to_obstacle,
    potential_field,
    single_integrator_step,
    unicycle_step,
    wrap_angle,
)

coords = st.floats(-20, 20, allow_nan=False)


# ---- robot models ----------------------------------------------------------

@pytest.mark.parametrize("x, u, dt, expected", [
    ((0, 0), (0, 0), 0.05, (0, 0)),
    ((1, 2), (3, 0), 0.05, (1.15, 2)),
    ((0, 0), (2, -2), 0.5, (1, -1)),
])
def test_single_integrator_examples(x, u, dt, expected):
    np.testing.assert_allclose(single_integrator_step(np.array(x, float), u, dt), expected, atol=1e-15)


@pytest.mark.parametrize("x, u, dt, expected", [
    ((0, 0, 0), (1, 0), 1.0, (1, 0, 0)),
    ((0, 0, math.pi / 2), (1, 0), 1.0, (0, 1, math.pi / 2)),
    ((0, 0, 0), (0, 1), 0.1, (0, 0, 0.1)),
])
def test_unicycle_examples(x, u, dt, expected):
    np.testing.assert_allclose(unicycle_step(np.array(x, float), u, dt), expected, atol=1e-15)


def test_nonpositive_dt_rejected():
    with pytest.raises(ValueError):
        single_integrator_step(np.zeros(2), np.zeros(2), 0.0)
    with pytest.raises(ValueError):
        unicycle_step(np.zeros(3), np.zeros(2), -0.1)


def test_unicycle_euler_converges_to_arc_at_first_order():
    v, w, T = 1.0, 1.0, 1.0
    exact = np.array([v / w * math.sin(w * T), v / w * (1 - math.cos(w * T))])
    errs = []
    for n in (100, 200, 400):
        x = np.zeros(3)
        for _ in range(n):
            x = unicycle_step(x, (v, w), T / n)
        errs.append(np.linalg.norm(x[:2] - exact))
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.05)


@given(st.floats(-100, 100))
def test_wrap_angle_range(theta):
    w = wrap_angle(theta)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(theta), abs_tol=1e-9)


# ---- modes -------------------------------------------------------------------

@pytest.mark.parametrize("dist, mode", [(3.0, UNCOOPERATIVE), (1.0, COOPERATIVE), (2.0, COOPERATIVE)])
def test_mode_examples(dist, mode):
    model = HybridAgentModel(sensing_radius=2.0)
    assert active_mode(model, np.array([dist, 0.0]), np.zeros(2)) == mode


def test_mode_just_outside_boundary():
    model = HybridAgentModel(sensing_radius=2.0)
    assert active_mode(model, np.array([np.nextafter(2.0, 3.0), 0.0]), np.zeros(2)) == UNCOOPERATIVE


def test_partition_over_random_pairs():
    rng = np.random.default_rng(0)
    model = HybridAgentModel(sensing_radius=2.0)
    xp = rng.uniform(-4, 4, size=(100_000, 2))
    xr = rng.uniform(-4, 4, size=(100_000, 2))
    # put a slice of the pairs exactly on the boundary
    xp[:1000] = xr[:1000] + np.array([2.0, 0.0])
    q1, q2 = model.modes
    for a, b in zip(xp, xr):
        assert q1.is_active(a, b) + q2.is_active(a, b) == 1


def test_partition_violation_raises():
    model = HybridAgentModel()

    class Broken(HybridAgentModel):
        @property
        def modes(self):
            q1, q2 = HybridAgentModel.modes.fget(self)
            return (q1, q1)

    with pytest.raises(PartitionError):
        active_mode(Broken(), np.array([3.0, 0.0]), np.zeros(2))
    assert active_mode(model, np.array([3.0, 0.0]), np.zeros(2)) == UNCOOPERATIVE


@given(coords, coords, coords, coords)
def test_mode_is_stable_under_reevaluation(a, b, c, d):
    model = HybridAgentModel()
    xp, xr = np.array([a, b]), np.array([c, d])
    assert active_mode(model, xp, xr) == active_mode(model, xp.copy(), xr.copy())


# ---- potential field -----------------------------------------------------------

def test_pf_zero_beyond_cutoff():
    pf = PotentialFieldParams(gain=1.0, cutoff=2.0)
    out = potential_field(np.zeros(2), np.array([3.0, 0.0]), [np.array([0.0, 5.0])],
                          [Obstacle((0.0, -4.0), 1.0)], pf)
    assert np.all(out == 0.0)


def test_pf_direction_points_away_from_west_source():
    pf = PotentialFieldParams(gain=1.0, cutoff=2.0, max_speed=1e9)
    out = potential_field(np.zeros(2), np.array([-1.0, 0.0]), params=pf)
    assert out[0] > 0 and out[1] == 0.0


def test_pf_magnitude_by_hand():
    pf = PotentialFieldParams(gain=1.0, cutoff=2.0, max_speed=1e9)
    out = potential_field(np.zeros(2), np.array([0.0, 1.0]), params=pf)
    np.testing.assert_allclose(out, [0.0, -0.5], atol=1e-15)


def test_pf_clipped_to_max_speed():
    pf = PotentialFieldParams(gain=1.0, cutoff=2.0, max_speed=0.2)
    out = potential_field(np.zeros(2), np.array([0.0, 1.0]), params=pf)
    assert np.linalg.norm(out) == pytest.approx(0.2, abs=1e-15)


def test_pf_obstacle_uses_boundary_distance():
    pf = PotentialFieldParams(gain=1.0, cutoff=2.0, max_speed=1e9)
    out = potential_field(np.zeros(2), None, obstacles=[Obstacle((2.0, 0.0), 1.0)], params=pf)
    np.testing.assert_allclose(out, [-0.5, 0.0], atol=1e-15)


# ---- disturbance ------------------------------------------------------------------

def test_disturbance_values():
    assert disturbance_variance(0.0, 80.0, 1.0) == 80.0
    # 80 * tanh(1), evaluated independently
    assert disturbance_variance(1.0, 80.0, 1.0) == pytest.approx(60.92753247646119, rel=1e-14)
    assert disturbance_variance(1e9, 80.0, 1.0) < 1e-6


@given(st.floats(0.0, 50.0), st.floats(1e-3, 10.0))
def test_disturbance_strictly_decreasing(s, ds):
    a = disturbance_covariance(np.array([s, 0.0]), 80.0, 1.0)[0, 0]
    b = disturbance_covariance(np.array([s + ds, 0.0]), 80.0, 1.0)[0, 0]
    assert b <= a
    # tanh rounds to exactly 1.0 above ~19, so strictness is only observable below that
    if 1.0 / (s + ds) < 18.0 and (s + ds) < 1e3:
        assert b < a


def test_disturbance_parameters_validated():
    with pytest.raises(ValueError):
        disturbance_covariance(np.ones(2), -1.0, 1.0)


# ---- conditional moments -------------------------------------------------------------

def test_uncooperative_mean_step():
    model = HybridAgentModel()
    mom = agent_conditional_moments(model, UNCOOPERATIVE, np.array([1.0, 2.0]), np.zeros(2), 0.05)
    np.testing.assert_allclose(mom.mean, [1.15, 2.0], atol=1e-15)
    var = 80.0 * math.tanh(1.0 / 3.0) * 0.05**2
    np.testing.assert_allclose(mom.covariance, var * np.eye(2), rtol=1e-14)


def test_modes_agree_when_robot_beyond_cutoff():
    model = HybridAgentModel(sensing_radius=5.0)  # cooperative but outside the PF cutoff
    xp, xr = np.array([0.0, 0.0]), np.array([3.0, 0.0])
    a = agent_conditional_moments(model, UNCOOPERATIVE, xp, xr, 0.05)
    b = agent_conditional_moments(model, COOPERATIVE, xp, xr, 0.05)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.covariance, b.covariance)


def test_cooperative_moments_against_monte_carlo():
    model = HybridAgentModel(obstacles=(Obstacle((0.5, 1.5), 0.3),))
    xp, xr = np.array([0.0, 0.0]), np.array([1.0, -0.5])
    mom = agent_conditional_moments(model, COOPERATIVE, xp, xr, 0.05)
    rng = np.random.default_rng(11)
    n = 10**6
    x = mc_agent_steps(rng, np.tile(xp, (n, 1)), 1, 0.05, (3.0, 0.0), 80.0, 1.0,
                       obstacles=[((0.5, 1.5), 0.3)], robot=xr)
    se = x.std(axis=0) / math.sqrt(n)
    assert np.all(np.abs(x.mean(axis=0) - mom.mean) < 3 * se)
    # off-diagonal sampling error is about var * sqrt(2/n) ~ 1e-4
    np.testing.assert_allclose(np.cov(x.T), mom.covariance, rtol=0.01, atol=5e-4)


def test_unknown_mode_rejected():
    with pytest.raises(ValueError):
        agent_conditional_moments(HybridAgentModel(), 7, np.zeros(2), np.zeros(2), 0.05)


def test_sqrt_step_scaling():
    m = HybridAgentModel(noise_scaling="sqrt_step")
    assert m.noise_factor(0.05) == 0.05
    assert HybridAgentModel().noise_factor(0.05) == 0.05**2


# ---- distances --------------------------------------------------------------------------

def test_distance_examples():
    assert distance_to_agent(np.zeros(2), np.zeros(2), 0.0) == 0.0
    assert distance_to_agent(np.zeros(2), np.array([3.0, 0.0]), 1.0) == 2.0
    assert distance_to_obstacle(np.array([3.0, 0.0]), Obstacle((0.0, 0.0), 2.5), 0.5) == 0.0
    assert distance_to_obstacle(np.array([5.0, 0.0]), Obstacle((0.0, 0.0), 2.0), 0.0) == 3.0


@given(coords, coords, coords, coords, st.floats(0, 2))
def test_distance_symmetric(a, b, c, d, r):
    p, q = np.array([a, b]), np.array([c, d])
    assert distance_to_agent(p, q, r) == distance_to_agent(q, p, r)


def test_obstacle_distance_continuous():
    o = Obstacle((0.0, 0.0), 1.0)
    xs = np.linspace(-3, 3, 601)
    d = np.array([distance_to_obstacle(np.array([x, 0.5]), o, 0.2) for x in xs])
    assert np.max(np.abs(np.diff(d))) <= (xs[1] - xs[0]) + 1e-12
