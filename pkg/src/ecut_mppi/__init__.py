"""Risk-aware MPPI navigation among agents with hybrid, state-dependent dynamics."""

from .harness import (
    AggregateStats,
    EpisodeLog,
    run_monte_carlo,
    simulate_episode,
    variant_scenarios,
)
from .hybrid_dynamics import (
    COOPERATIVE,
    UNCOOPERATIVE,
    HybridAgentModel,
    Obstacle,
    PotentialFieldParams,
    active_mode,
    agent_conditional_moments,
)
from .mc_baseline import mc_agent_rollout, mc_rollout_cost
from .mppi_planner import Planner, PlannerConfig, mppi_weights, update_control
from .scenario import Scenario, ScenarioError, load_scenario
from .sigma_transform import (
    GaussianMoments,
    SigmaPointSet,
    compress,
    ecut_step,
    empirical_moments,
    expand_sigma_points,
    generate_ut_points,
)

__version__ = "0.1.0"
