import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ecut_mppi.hybrid_dynamics import (
    COOPERATIVE,
    UNCOOPERATIVE,
    HybridAgentModel,
    Obstacle,
    PotentialFieldParams,
    agent_conditional_moments,
)
from ecut_mppi.mc_baseline import mc_rollout_cost
from ecut_mppi.mppi_planner import (
    Planner,
    PlannerConfig,
    agent_risk_from_stats,
    mppi_weights,
    rollout,
    sample_perturbations,
    stage_cost_convergence,
    stage_cost_risk,
    update_control,
)
from ecut_mppi.sigma_transform import (
    GaussianMoments,
    ecut_step,
    empirical_moments,
    generate_ut_points,
)

finite_costs = arrays(float, st.integers(1, 30), elements=st.floats(-1e3, 1e3))


# ---- perturbations ---------------------------------------------------------

def test_zero_noise_gives_zero_perturbations():
    cfg = PlannerConfig(samples=10, horizon=5, noise_cov=((0, 0), (0, 0)))
    assert np.all(sample_perturbations(cfg, np.random.default_rng(0)) == 0.0)


def test_perturbations_deterministic_and_scaled():
    cfg = PlannerConfig(samples=2500, horizon=40, noise_cov=((4.0, 1.0), (1.0, 2.0)))
    a = sample_perturbations(cfg, np.random.default_rng(5))
    b = sample_perturbations(cfg, np.random.default_rng(5))
    assert np.array_equal(a, b)
    emp = np.cov(a.reshape(-1, 2).T)  # 1e5 draws
    np.testing.assert_allclose(emp, cfg.sigma, rtol=0.05, atol=0.05)


# ---- stage costs -------------------------------------------------------------

def test_convergence_cost_examples():
    assert stage_cost_convergence(np.array([1.0, 2.0]), np.array([1.0, 2.0]), 1.0) == 0.0
    assert stage_cost_convergence(np.array([3.0, 4.0]), np.zeros(2), 1.0) == 25.0
    assert stage_cost_convergence(np.array([3.0, 4.0]), np.zeros(2), 2.5) == 62.5


def test_risk_single_agent_by_hand():
    cfg = PlannerConfig(agent_gain=1.0, risk_alpha=0.0, robot_radius=0.3, agent_radius=0.3)
    sps = generate_ut_points(GaussianMoments([2.6, 0.0], np.zeros((2, 2))))
    assert stage_cost_risk(np.zeros(2), [sps], [], cfg) == pytest.approx(0.5, abs=1e-15)


def test_risk_uses_lower_confidence_bound():
    cfg = PlannerConfig(agent_gain=1.0, risk_alpha=1.96)
    assert agent_risk_from_stats([(3.0, 0.5), (5.0, 0.1)], cfg) == pytest.approx(1 / (3.0 - 0.98))


def test_risk_decays_far_away():
    cfg = PlannerConfig()
    far = generate_ut_points(GaussianMoments([1e6, 0.0], 0.1 * np.eye(2)))
    assert 0 < stage_cost_risk(np.zeros(2), [far], [Obstacle((0.0, 1e6), 1.0)], cfg) < 1e-5


def test_risk_floor():
    cfg = PlannerConfig(agent_gain=2.0, barrier_floor=0.01)
    assert agent_risk_from_stats([(0.1, 1.0)], cfg) == pytest.approx(200.0)


# ---- weights and update --------------------------------------------------------

def test_weights_examples():
    lam = 3.7
    np.testing.assert_allclose(mppi_weights([0.0, lam], lam), [1.0, math.exp(-1)], rtol=1e-15)
    assert np.all(mppi_weights([5.0, 5.0, 5.0], 1.0) == 1.0)


@given(finite_costs, st.floats(1e-2, 1e3))
def test_property_weights_bounded(costs, lam):
    w = mppi_weights(costs, lam)
    assert np.all(w <= 1.0) and np.all(w >= 0.0)
    assert w[np.argmin(costs)] == 1.0
    gap = (costs - costs.min()) / lam
    assert np.all(w[gap == 0] == 1.0)
    # exp(-x) rounds to exactly 1.0 for x below half an ulp of 1
    assert np.all(w[gap > 2.3e-16] < 1.0)


def test_update_examples():
    u = np.arange(12.0).reshape(1, 6, 2)
    assert np.array_equal(update_control(np.ones(1), u), u[0])
    seqs = np.stack([np.zeros((4, 2)), np.ones((4, 2)) * 2.0])
    np.testing.assert_allclose(update_control(np.ones(2), seqs), np.ones((4, 2)))
    w = np.array([1.0, math.exp(-1)])
    seqs = np.random.default_rng(0).normal(size=(2, 5, 2))
    np.testing.assert_allclose(update_control(w, seqs), (seqs[0] + math.exp(-1) * seqs[1]) / (1 + math.exp(-1)),
                               rtol=1e-14)


def test_update_falls_back_to_best_sample_on_underflow():
    seqs = np.random.default_rng(0).normal(size=(3, 4, 2))
    out = update_control(np.zeros(3), seqs, costs=np.array([3.0, 1.0, 2.0]))
    assert np.array_equal(out, seqs[1])


@st.composite
def samples(draw):
    m = draw(st.integers(1, 12))
    costs = draw(arrays(float, m, elements=st.floats(0, 100)))
    seqs = draw(arrays(float, (m, 3, 2), elements=st.floats(-10, 10)))
    return costs, seqs


@given(samples(), st.floats(-1e3, 1e3), st.floats(0.1, 50))
def test_property_shift_invariance(s, c, lam):
    costs, seqs = s
    a = update_control(mppi_weights(costs, lam), seqs)
    b = update_control(mppi_weights(costs + c, lam), seqs)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@given(samples(), st.floats(0.1, 50))
def test_property_convex_hull(s, lam):
    costs, seqs = s
    v = update_control(mppi_weights(costs, lam), seqs)
    assert np.all(v >= seqs.min(axis=0) - 1e-12)
    assert np.all(v <= seqs.max(axis=0) + 1e-12)


@given(samples(), st.floats(0.1, 50), st.randoms())
def test_property_permutation_invariance(s, lam, rnd):
    costs, seqs = s
    perm = list(range(len(costs)))
    rnd.shuffle(perm)
    a = update_control(mppi_weights(costs, lam), seqs)
    b = update_control(mppi_weights(costs[perm], lam), seqs[perm])
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


# ---- rollouts --------------------------------------------------------------------

def _world(n_agents=3, ds=2.0):
    obstacles = (Obstacle((1.0, 1.5), 0.4), Obstacle((-1.5, 0.5), 0.3))
    pf = PotentialFieldParams(gain=1.0, cutoff=2.5, max_speed=3.0)
    models = [HybridAgentModel(sensing_radius=ds, u_nom=(3.0 - a, 0.5 * a), pf=pf, obstacles=obstacles)
              for a in range(n_agents)]
    beliefs = [GaussianMoments([-1.0 + a, -0.8 + 0.7 * a], np.array([[0.05, 0.01], [0.01, 0.08]]))
               for a in range(n_agents)]
    return obstacles, models, beliefs


def test_rollout_without_agents_is_quadratic_only():
    cfg = PlannerConfig(horizon=6, samples=1, temperature=2.0)
    v = np.random.default_rng(1).normal(size=(6, 2))
    goal = np.array([0.5, -0.5])
    res = rollout(0, goal, [], v, v, [], [], goal, cfg)
    x, expected = goal.copy(), 0.0
    for t in range(6):
        expected += np.sum((x - goal) ** 2) + cfg.control_blend * v[t] @ np.linalg.inv(cfg.sigma) @ v[t]
        x = x + v[t] * cfg.dt
    expected += np.sum((x - goal) ** 2)
    assert res.cost == pytest.approx(expected, rel=1e-13)


def test_aware_equals_unaware_when_never_sensed():
    obstacles, models, beliefs = _world(1, ds=0.5)
    controls = np.zeros((5, 2))
    kw = dict(mean_controls=controls, models=models, obstacles=obstacles, goal=np.zeros(2))
    x0 = np.array([0.0, -6.0])
    a = rollout(0, x0, beliefs, controls, config=PlannerConfig(horizon=5), **kw)
    b = rollout(0, x0, beliefs, controls, config=PlannerConfig(horizon=5, awareness="unaware"), **kw)
    assert np.all(a.modes == UNCOOPERATIVE)
    for sa, sb in zip(a.agents[0], b.agents[0]):
        assert np.array_equal(sa.points, sb.points)
    assert a.cost == b.cost


def _fig2_setup():
    """Robot within d_s of two off-centre sigma points but not of the mean."""
    model = HybridAgentModel(sensing_radius=2.0, pf=PotentialFieldParams(gain=1.0, cutoff=3.0, max_speed=5.0))
    belief = GaussianMoments([0.0, 0.0], np.diag([0.09, 0.09]))
    sps = generate_ut_points(belief)
    # sigma points sit at +-0.52 on each axis; put the robot on the diagonal
    x_r = np.array([1.5, 1.5])
    return model, sps, x_r


def test_fig2_modes_follow_individual_points():
    model, sps, x_r = _fig2_setup()
    cfg = PlannerConfig(horizon=1)
    res = rollout(0, x_r, [sps_to_belief(sps)], np.zeros((1, 2)), np.zeros((1, 2)), [model], [],
                  np.zeros(2), cfg)
    dist = np.linalg.norm(sps.points - x_r, axis=1)
    expected = np.where(dist <= 2.0, COOPERATIVE, UNCOOPERATIVE)
    assert list(expected) == [UNCOOPERATIVE, COOPERATIVE, COOPERATIVE, UNCOOPERATIVE, UNCOOPERATIVE]
    assert np.array_equal(res.modes[0, 0], expected)
    assert len(res.agents[0][1]) == 5


def sps_to_belief(sps):
    return empirical_moments(sps)


def _one_step(model, sps, x_r, per_point):
    mean_mode = COOPERATIVE if np.linalg.norm(empirical_moments(sps).mean - x_r) <= 2.0 else UNCOOPERATIVE

    def fmap(p):
        mode = (COOPERATIVE if np.linalg.norm(p - x_r) <= 2.0 else UNCOOPERATIVE) if per_point else mean_mode
        return agent_conditional_moments(model, mode, p, x_r, 0.05)

    return empirical_moments(ecut_step(fmap, sps))


def test_fig2_switching_policies_differ_then_agree():
    model, sps, x_r = _fig2_setup()
    a, b = _one_step(model, sps, x_r, True), _one_step(model, sps, x_r, False)
    assert np.linalg.norm(a.mean - b.mean) > 1e-6
    far = np.array([30.0, 30.0])
    a, b = _one_step(model, sps, far, True), _one_step(model, sps, far, False)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.covariance, b.covariance)


# ---- compiled kernels against the reference --------------------------------------------

@pytest.mark.parametrize("switching, awareness", [("sigma", "aware"), ("mean", "aware"), ("sigma", "unaware")])
@pytest.mark.parametrize("robot_kind, x0", [("single_integrator", [0.3, -1.0]), ("unicycle", [0.3, -1.0, 0.7])])
def test_ecut_kernel_matches_reference(switching, awareness, robot_kind, x0):
    obstacles, models, beliefs = _world()
    cfg = PlannerConfig(horizon=8, samples=6, temperature=3.0, agent_gain=1.5, obstacle_gain=0.7,
                        switching=switching, awareness=awareness, seed=2)
    planner = Planner(cfg, (0.0, 3.0), models, obstacles, robot_kind=robot_kind)
    planner.mean_seq = np.random.default_rng(0).normal(size=(8, 2))
    controls = planner.mean_seq + sample_perturbations(cfg, planner.rng)
    fast = planner.evaluate(np.array(x0), beliefs, controls)
    ref = [rollout(m, np.array(x0), beliefs, controls[m], planner.mean_seq, models, obstacles,
                   planner.goal, cfg, robot_kind).cost for m in range(6)]
    np.testing.assert_allclose(fast, ref, rtol=1e-12)


def test_mc_kernel_matches_reference():
    obstacles, models, beliefs = _world()
    cfg = PlannerConfig(horizon=6, samples=4, temperature=3.0, seed=4)
    planner = Planner(cfg, (0.0, 3.0), models, obstacles, predictor="mc", mc_samples=7)
    controls = sample_perturbations(cfg, planner.rng)
    seeds = np.array([11, 12, 13, 2**63 + 5], dtype=np.uint64)
    x0 = np.array([0.3, -1.0])
    fast = planner.evaluate(x0, beliefs, controls, seeds=seeds)
    ref = [mc_rollout_cost(x0, beliefs, controls[m], planner.mean_seq, models, obstacles, planner.goal,
                           cfg, 7, int(seeds[m])) for m in range(4)]
    np.testing.assert_allclose(fast, ref, rtol=1e-12)


# ---- receding horizon --------------------------------------------------------------------

def test_single_noiseless_sample_applies_mean():
    cfg = PlannerConfig(horizon=5, samples=1, noise_cov=((0, 0), (0, 0)))
    planner = Planner(cfg, (1.0, 1.0), [])
    planner.mean_seq = np.arange(10.0).reshape(5, 2)
    u = planner.receding_horizon_step(np.zeros(2), [])
    assert np.array_equal(u, [0.0, 1.0])
    # shifted with the last entry repeated
    assert np.array_equal(planner.mean_seq[-2:], [[8.0, 9.0], [8.0, 9.0]])


def test_planner_deterministic_given_seed():
    obstacles, models, beliefs = _world()
    outs = []
    for _ in range(2):
        p = Planner(PlannerConfig(horizon=10, samples=50, seed=9), (0.0, 3.0), models, obstacles)
        outs.append([p.receding_horizon_step(np.array([0.0, -2.0]), beliefs) for _ in range(3)])
    assert np.array_equal(np.array(outs[0]), np.array(outs[1]))


def test_policies_identical_far_from_agents():
    obstacles, models, beliefs = _world()
    far = [GaussianMoments(b.mean + np.array([0.0, 60.0]), b.covariance) for b in beliefs]
    results = []
    for kw in (dict(), dict(awareness="unaware"), dict(switching="mean")):
        p = Planner(PlannerConfig(horizon=10, samples=40, seed=1, **kw), (0.0, 3.0), models, obstacles)
        results.append([p.receding_horizon_step(np.array([0.0, -2.0]), far) for _ in range(2)])
    assert np.array_equal(results[0], results[1]) and np.array_equal(results[0], results[2])


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(dt=-0.1)
    with pytest.raises(ValueError):
        PlannerConfig(switching="median")
    with pytest.raises(ValueError):
        PlannerConfig(noise_cov=((1.0, 0.0), (0.0, -1.0)))
    with pytest.raises(ValueError):
        Planner(PlannerConfig(), (0, 0), [], predictor="mc", mc_samples=1)
