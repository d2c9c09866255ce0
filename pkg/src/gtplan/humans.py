"""Simulated human drivers for closed-loop experiments.

Two kinds: an optimizer human who plans a short trajectory against the
AV's committed control prefix (reusing the tactical optimizer with the
roles swapped), and a constant-speed human who regulates a fixed speed on
her lane center and never reacts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    ACCEL_MAX,
    ACCEL_MIN,
    LEFT_LANE_CENTER,
    STEER_MAX,
    JointState,
    VehicleControl,
)
from .planner import PlannerConfig, _as_controls, optimize_own
from .rewards import RewardConfig
from .table import ValueTable

# Constant-speed human: proportional regulation gains.
_SPEED_GAIN = 1.0      # (m/s^2) per (m/s) of speed error
_LANE_GAIN = 0.05      # rad per m of lateral offset
_HEADING_GAIN = 0.6    # rad per rad of heading error


@dataclass
class HumanModelConfig:
    kind: str = "optimizer"              # "optimizer" | "constant_speed"
    constant_speed: float = 24.0         # m/s, used by the constant kind
    lane_center: float = LEFT_LANE_CENTER
    rewards: RewardConfig = field(default_factory=RewardConfig)
    preview_horizon: float = 0.5         # s of committed AV controls she sees
    dt: float = 0.1
    value: ValueTable | None = None      # her strategic value, if she uses one

    def __post_init__(self):
        if self.kind not in ("optimizer", "constant_speed"):
            raise ValueError(f"unknown human model kind {self.kind!r}")
        steps = self.preview_horizon / self.dt
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            raise ValueError("preview_horizon must be a positive multiple of dt")

    @property
    def preview_steps(self) -> int:
        return int(round(self.preview_horizon / self.dt))


class HumanModel:
    """Stateful per-episode driver; the optimizer kind warm-starts."""

    def __init__(self, cfg: HumanModelConfig):
        self.cfg = cfg
        self._prev: np.ndarray | None = None
        self._planner_cfg = PlannerConfig(
            M=cfg.preview_steps, dt=cfg.dt, rewards=cfg.rewards,
            use_value=cfg.value is not None, human_value=cfg.value)

    def act(self, x: JointState, av_committed) -> VehicleControl:
        if self.cfg.kind == "constant_speed":
            return self._track_setpoint(x)
        committed = _as_controls(av_committed, self.cfg.preview_steps, "av_committed")
        if self._prev is None:
            init = np.zeros((self.cfg.preview_steps, 2))
        else:
            init = np.zeros((self.cfg.preview_steps, 2))
            init[:-1] = self._prev[1:]
        u = optimize_own(x, committed, "H", self._planner_cfg, init=init)
        self._prev = u.copy()
        return VehicleControl(float(u[0, 0]), float(u[0, 1]))

    def _track_setpoint(self, x: JointState) -> VehicleControl:
        s = x.human
        accel = np.clip(_SPEED_GAIN * (self.cfg.constant_speed - s.v),
                        ACCEL_MIN, ACCEL_MAX)
        steer = np.clip(-_HEADING_GAIN * s.psi
                        - _LANE_GAIN * (s.y - self.cfg.lane_center),
                        -STEER_MAX, STEER_MAX)
        return VehicleControl(float(steer), float(accel))


def human_act(x: JointState, av_committed, cfg: HumanModelConfig) -> VehicleControl:
    """One-shot human decision (no warm start across calls)."""
    return HumanModel(cfg).act(x, av_committed)
