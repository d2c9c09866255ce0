"""Closed-loop scenarios, episode logging, metrics, and beta sweeps.

Episodes step at the tactical rate: the AV planner produces a plan and
executes its first control; the simulated human acts given the AV's
committed control prefix; the joint state advances.  An episode halts
early only on collision.  Logs are self-describing (config snapshot plus
per-step records) and replay exactly through the dynamics module.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import game
from .dynamics import (
    LEFT_LANE_CENTER,
    RIGHT_LANE_CENTER,
    JointState,
    VehicleControl,
    VehicleState,
    joint_to_array,
    project_3d,
    project_4d,
    step_joint,
)
from .grid import GridSpec, default_grid_3d, default_grid_4d
from .humans import HumanModel, HumanModelConfig
from .planner import PlannerConfig, make_planner
from .rewards import RewardConfig, tactical_reward_A, tactical_reward_H
from .table import ValueTable, load as load_table, lookup_value, save as save_table

# Hard collision geometry: both vehicles share one footprint (length x width).
VEHICLE_LENGTH = 4.5   # m
VEHICLE_WIDTH = 1.8    # m
COLLISION_DISTANCE = math.hypot(VEHICLE_LENGTH, VEHICLE_WIDTH)

SUCCESS_GAP = 10.0     # m ahead of the human required for a completed maneuver
LANE_BAND = 1.0        # m around a lane center that counts as occupying the lane

SCENARIOS = ("easy_merge", "hard_merge", "overtaking")
PLANNER_KINDS = ("tactical", "hier3d", "hier4d", "long_horizon")


@dataclass(frozen=True)
class StepRecord:
    t: float
    state: JointState
    u_A: VehicleControl
    u_H: VehicleControl
    r_A: float
    r_H: float
    objective: float
    v_A: float | None
    v_H: float | None


@dataclass
class EpisodeLog:
    config: dict
    steps: list[StepRecord]
    final_state: JointState
    collision: bool


@dataclass(frozen=True)
class Metrics:
    success: bool
    collision: bool
    min_distance: float
    time_to_merge: float | None
    max_av_speed: float
    final_gap: float


@dataclass
class ScenarioConfig:
    name: str
    initial: JointState
    planner_kind: str
    human: HumanModelConfig
    episode_length: float = 15.0
    dt: float = 0.1
    seed: int = 0
    rewards: RewardConfig = field(default_factory=RewardConfig)
    av_table: ValueTable | None = None
    value_path: str | None = None
    influence: bool = False

    def __post_init__(self):
        if self.planner_kind not in PLANNER_KINDS:
            raise ValueError(f"unknown planner kind {self.planner_kind!r}")
        if self.planner_kind in ("hier3d", "hier4d") and self.av_table is None:
            raise ValueError(
                f"planner {self.planner_kind} requires a value table")


def initial_state(name: str) -> JointState:
    """Documented default initial conditions; human at 30 m/s in the left lane."""
    human = VehicleState(0.0, LEFT_LANE_CENTER, 0.0, 30.0)
    if name == "easy_merge":
        av = VehicleState(15.0, RIGHT_LANE_CENTER, 0.0, 32.0)
    elif name == "hard_merge":
        av = VehicleState(-15.0, RIGHT_LANE_CENTER, 0.0, 32.0)
    elif name == "overtaking":
        av = VehicleState(-20.0, LEFT_LANE_CENTER, 0.0, 32.0)
    else:
        raise ValueError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")
    return JointState(av=av, human=human, t=0.0)


def make_scenario(name: str, planner_kind: str = "tactical",
                  av_table: ValueTable | None = None,
                  rewards: RewardConfig | None = None,
                  human_kind: str = "optimizer",
                  human_uses_value: bool | None = None,
                  episode_length: float = 15.0,
                  human_preview: float = 0.5,
                  constant_speed: float = 24.0,
                  influence: bool = False,
                  value_path: str | None = None,
                  seed: int = 0) -> ScenarioConfig:
    """Scenario with the paper-style defaults.

    The simulated human carries her strategic value exactly when the AV
    plans hierarchically, unless human_uses_value overrides it.
    """
    rewards = rewards if rewards is not None else RewardConfig()
    if human_uses_value is None:
        human_uses_value = planner_kind in ("hier3d", "hier4d")
    human = HumanModelConfig(
        kind=human_kind,
        constant_speed=constant_speed,
        rewards=rewards,
        preview_horizon=human_preview,
        value=av_table if (human_uses_value and human_kind == "optimizer") else None,
    )
    return ScenarioConfig(
        name=name, initial=initial_state(name), planner_kind=planner_kind,
        human=human, episode_length=episode_length, rewards=rewards,
        av_table=av_table, value_path=value_path, influence=influence, seed=seed)


def _planner_config(cfg: ScenarioConfig) -> PlannerConfig:
    kind = cfg.planner_kind
    return PlannerConfig(
        M=20 if kind == "long_horizon" else 5,
        dt=cfg.dt,
        rewards=cfg.rewards,
        use_value=kind in ("hier3d", "hier4d"),
        av_value=cfg.av_table,
        human_value=cfg.av_table if kind in ("hier3d", "hier4d") else None,
        influence_term=cfg.influence,
    )


def footprints_overlap(s: JointState) -> bool:
    """Axis-aligned footprint overlap (headings stay small on a highway)."""
    return (abs(s.av.x - s.human.x) < VEHICLE_LENGTH
            and abs(s.av.y - s.human.y) < VEHICLE_WIDTH)


def _config_snapshot(cfg: ScenarioConfig) -> dict:
    return {
        "scenario": cfg.name,
        "planner": cfg.planner_kind,
        "episode_length": cfg.episode_length,
        "dt": cfg.dt,
        "seed": cfg.seed,
        "influence": cfg.influence,
        "initial": list(joint_to_array(cfg.initial)),
        "human_kind": cfg.human.kind,
        "human_constant_speed": cfg.human.constant_speed,
        "human_preview": cfg.human.preview_horizon,
        "human_uses_value": cfg.human.value is not None,
        "reward_hash": cfg.rewards.digest().hex(),
        "value_path": cfg.value_path,
        "value_beta": cfg.av_table.beta if cfg.av_table is not None else None,
        "value_model": cfg.av_table.model if cfg.av_table is not None else None,
    }


def run_scenario(cfg: ScenarioConfig) -> EpisodeLog:
    """Execute one closed-loop episode; halts early only on collision."""
    pcfg = _planner_config(cfg)
    if cfg.human.preview_steps > pcfg.M:
        raise ValueError(
            f"human preview ({cfg.human.preview_steps} steps) exceeds the "
            f"planner horizon M={pcfg.M}")
    planner = make_planner(pcfg, long_horizon=cfg.planner_kind == "long_horizon")
    human = HumanModel(cfg.human)
    table = cfg.av_table
    n_steps = int(round(cfg.episode_length / cfg.dt))

    x = cfg.initial
    steps: list[StepRecord] = []
    collision = footprints_overlap(x)
    if not collision:
        for _ in range(n_steps):
            result = planner.plan(x)
            u_A = VehicleControl(float(result.controls_A[0, 0]),
                                 float(result.controls_A[0, 1]))
            committed = result.controls_A[:cfg.human.preview_steps]
            u_H = human.act(x, committed)
            if table is not None:
                s_proj = project_3d(x) if table.model == "3d" else project_4d(x)
                v_A = lookup_value(table, s_proj, 0, "A")
                v_H = lookup_value(table, s_proj, 0, "H")
            else:
                v_A = v_H = None
            steps.append(StepRecord(
                t=x.t, state=x, u_A=u_A, u_H=u_H,
                r_A=tactical_reward_A(x, u_A, u_H, cfg.rewards),
                r_H=tactical_reward_H(x, u_H, u_A, cfg.rewards),
                objective=result.objective, v_A=v_A, v_H=v_H))
            x = step_joint(x, u_A, u_H, cfg.dt)
            if footprints_overlap(x):
                collision = True
                break
    return EpisodeLog(config=_config_snapshot(cfg), steps=steps,
                      final_state=x, collision=collision)


def _all_states(log: EpisodeLog):
    for rec in log.steps:
        yield rec.t, rec.state
    yield log.final_state.t, log.final_state


def _merged(s: JointState) -> bool:
    return (abs(s.av.y - LEFT_LANE_CENTER) <= LANE_BAND
            and s.av.x - s.human.x >= SUCCESS_GAP)


def evaluate(log: EpisodeLog) -> Metrics:
    """Success: merged ahead of the human at episode end without collision."""
    if not log.steps and log.final_state is None:
        raise ValueError("cannot evaluate an empty episode log")
    states = list(_all_states(log))
    collision = log.collision or any(footprints_overlap(s) for _, s in states)
    min_distance = min(math.hypot(s.av.x - s.human.x, s.av.y - s.human.y)
                       for _, s in states)
    max_av_speed = max(s.av.v for _, s in states)
    final = log.final_state
    success = _merged(final) and not collision
    time_to_merge = None
    if success:
        time_to_merge = states[-1][0]
        for t, s in reversed(states):
            if _merged(s):
                time_to_merge = t
            else:
                break
    return Metrics(success=success, collision=collision,
                   min_distance=min_distance, time_to_merge=time_to_merge,
                   max_av_speed=max_av_speed,
                   final_gap=final.av.x - final.human.x)


# --- serialization ---

def _state_list(s: JointState) -> list[float]:
    return [s.av.x, s.av.y, s.av.psi, s.av.v,
            s.human.x, s.human.y, s.human.psi, s.human.v]


def episode_to_jsonl(log: EpisodeLog) -> str:
    lines = [json.dumps({"type": "config", **log.config}, sort_keys=True)]
    for r in log.steps:
        lines.append(json.dumps({
            "type": "step", "t": r.t, "state": _state_list(r.state),
            "u_av": [r.u_A.steer, r.u_A.accel],
            "u_human": [r.u_H.steer, r.u_H.accel],
            "r_av": r.r_A, "r_human": r.r_H, "objective": r.objective,
            "v_av": r.v_A, "v_human": r.v_H}, sort_keys=True))
    lines.append(json.dumps({
        "type": "final", "t": log.final_state.t,
        "state": _state_list(log.final_state),
        "collision": log.collision}, sort_keys=True))
    return "\n".join(lines) + "\n"


def save_episode(log: EpisodeLog, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(episode_to_jsonl(log))


def _joint_from_list(vals, t) -> JointState:
    return JointState(av=VehicleState(*vals[:4]), human=VehicleState(*vals[4:8]), t=t)


def load_episode(path) -> EpisodeLog:
    config = None
    steps = []
    final_state = None
    collision = False
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            kind = rec.pop("type")
            if kind == "config":
                config = rec
            elif kind == "step":
                steps.append(StepRecord(
                    t=rec["t"], state=_joint_from_list(rec["state"], rec["t"]),
                    u_A=VehicleControl(*rec["u_av"]),
                    u_H=VehicleControl(*rec["u_human"]),
                    r_A=rec["r_av"], r_H=rec["r_human"],
                    objective=rec["objective"],
                    v_A=rec["v_av"], v_H=rec["v_human"]))
            elif kind == "final":
                final_state = _joint_from_list(rec["state"], rec["t"])
                collision = rec["collision"]
            else:
                raise ValueError(f"unknown record type {kind!r}")
    if config is None or final_state is None:
        raise ValueError("episode log missing config or final record")
    return EpisodeLog(config=config, steps=steps, final_state=final_state,
                      collision=collision)


EPISODE_CSV_FIELDS = (
    "t,x_av,y_av,psi_av,v_av,x_human,y_human,psi_human,v_human,"
    "steer_av,accel_av,steer_human,accel_human,r_av,r_human,objective,"
    "value_av,value_human")


def episode_to_csv(log: EpisodeLog) -> str:
    rows = [EPISODE_CSV_FIELDS]
    for r in log.steps:
        cells = ([r.t] + _state_list(r.state)
                 + [r.u_A.steer, r.u_A.accel, r.u_H.steer, r.u_H.accel,
                    r.r_A, r.r_H, r.objective,
                    r.v_A if r.v_A is not None else "",
                    r.v_H if r.v_H is not None else ""])
        rows.append(",".join(repr(c) if isinstance(c, float) else str(c)
                             for c in cells))
    return "\n".join(rows) + "\n"


def metrics_to_csv(rows: list[tuple]) -> str:
    """rows: (label, Metrics) pairs."""
    out = ["label,success,collision,min_distance,time_to_merge,max_av_speed,final_gap"]
    for label, m in rows:
        ttm = "" if m.time_to_merge is None else repr(m.time_to_merge)
        out.append(f"{label},{m.success},{m.collision},{m.min_distance!r},"
                   f"{ttm},{m.max_av_speed!r},{m.final_gap!r}")
    return "\n".join(out) + "\n"


# --- beta sweeps ---

@dataclass(frozen=True)
class SweepRow:
    beta: float
    metrics: Metrics
    solve_seconds: float
    cached: bool


def table_cache_key(model: str, grid: GridSpec, actions: game.ActionGrid,
                    rewards: RewardConfig, params: game.SolverParams) -> str:
    h = hashlib.sha256()
    h.update(model.encode())
    h.update(np.array([params.beta, params.alpha, grid.dk], dtype="<f8").tobytes())
    h.update(np.array([grid.K], dtype="<i8").tobytes())
    for d in grid.dims:
        h.update(d.name.encode())
        h.update(np.array([d.lo, d.hi, d.count], dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(actions.leader, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(actions.follower, dtype="<f8").tobytes())
    h.update(rewards.digest())
    return h.hexdigest()


def solve_cached(model: str, beta: float, rewards: RewardConfig, cache_dir,
                 grid: GridSpec | None = None,
                 actions: game.ActionGrid | None = None,
                 alpha: float | None = None, threads: int = 1):
    """Solve the strategic game or load it from the cache.

    Returns (table, solve_seconds, cached).
    """
    import os

    grid = grid if grid is not None else (
        default_grid_3d() if model == "3d" else default_grid_4d())
    actions = actions if actions is not None else game.default_actions(model)
    params = game.SolverParams(
        beta=beta, K=grid.K,
        alpha=alpha if alpha is not None else game.SolverParams().alpha,
        dk=grid.dk)
    os.makedirs(cache_dir, exist_ok=True)
    key = table_cache_key(model, grid, actions, rewards, params)
    path = os.path.join(cache_dir, f"{key}.vt")
    t0 = time.perf_counter()
    if os.path.exists(path):
        return load_table(path), time.perf_counter() - t0, True
    table = game.solve(model, grid, actions, rewards, params, threads=threads)
    save_table(table, path)
    return table, time.perf_counter() - t0, False


def sweep_beta(scenario_name: str, betas, rewards: RewardConfig, cache_dir,
               model: str = "3d", planner_kind: str | None = None,
               grid: GridSpec | None = None,
               actions: game.ActionGrid | None = None,
               threads: int = 1, episode_length: float = 15.0) -> list[SweepRow]:
    """Solve (or load) one value table per beta and run the scenario with it."""
    planner_kind = planner_kind or ("hier3d" if model == "3d" else "hier4d")
    rows = []
    for beta in betas:
        if beta < 0:
            raise ValueError(f"beta must be >= 0, got {beta}")
        table, seconds, cached = solve_cached(
            model, beta, rewards, cache_dir, grid=grid, actions=actions,
            threads=threads)
        cfg = make_scenario(scenario_name, planner_kind=planner_kind,
                            av_table=table, rewards=rewards,
                            episode_length=episode_length)
        rows.append(SweepRow(beta=beta, metrics=evaluate(run_scenario(cfg)),
                             solve_seconds=seconds, cached=cached))
    return rows


def sweep_to_csv(rows: list[SweepRow]) -> str:
    out = ["beta,success,collision,min_distance,time_to_merge,max_av_speed,"
           "final_gap,solve_seconds,cached"]
    for r in rows:
        m = r.metrics
        ttm = "" if m.time_to_merge is None else repr(m.time_to_merge)
        out.append(f"{r.beta!r},{m.success},{m.collision},{m.min_distance!r},"
                   f"{ttm},{m.max_av_speed!r},{m.final_gap!r},"
                   f"{r.solve_seconds!r},{r.cached}")
    return "\n".join(out) + "\n"
