"""Hierarchical game-theoretic highway planning.

A long-horizon feedback Stackelberg game over simplified dynamics is
solved on a grid; its value guides a short-horizon receding-horizon
trajectory optimizer as a terminal reward term.
"""

from .dynamics import (
    JointState,
    Strat3State,
    Strat4State,
    StratActionA,
    StratActionH,
    VehicleControl,
    VehicleState,
    project_3d,
    project_4d,
    step_bicycle,
    step_joint,
    step_strategic_3d,
    step_strategic_4d,
)
from .game import ActionGrid, SolverParams, boltzmann, default_actions, solve
from .grid import GridDim, GridSpec, default_grid_3d, default_grid_4d
from .harness import (
    EpisodeLog,
    Metrics,
    ScenarioConfig,
    evaluate,
    make_scenario,
    run_scenario,
    sweep_beta,
)
from .humans import HumanModel, HumanModelConfig, human_act
from .planner import (
    PlannerConfig,
    PlanResult,
    TacticalPlanner,
    Trajectory,
    objective,
    optimize_own,
    plan,
    plan_long_horizon,
    plan_with_influence,
)
from .rewards import (
    RewardConfig,
    strategic_reward_A,
    strategic_reward_H,
    tactical_reward_A,
    tactical_reward_H,
)
from .table import (
    ValueTable,
    export_heatmap_slice,
    load,
    lookup_value,
    save,
    value_gradient,
)

__version__ = "0.1.0"
