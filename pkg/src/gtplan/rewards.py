"""Reward features shared by the tactical and strategic planning levels.

One feature family, two restrictions: tactical rewards act on the full
joint state and bicycle controls; strategic rewards act on the simplified
grid state and coarse actions.  Every feature weight lives in
RewardConfig, which serializes to a plain key=value file so a run's exact
reward is always recorded alongside its results.

All functions broadcast over numpy arrays; scalars work transparently.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

import numpy as np

from .dynamics import (
    ACCEL_MAX,
    ACCEL_MIN,
    LANE_WIDTH,
    LEFT_LANE_CENTER,
    RIGHT_LANE_CENTER,
    ROAD_Y_MAX,
    STEER_MAX,
    STRAT_ACCEL_MAX,
    LAT_VEL_MAX,
    JointState,
    Strat3State,
    Strat4State,
    StratActionA,
    StratActionH,
    VehicleControl,
)

# Fixed feature shape parameters (not weights): widths of the smooth
# lane-center bumps, the left-lane sigmoid, the ahead-of-other sigmoid,
# the road-edge margin, and the control normalization scales.
LANE_SIGMA = 1.0          # m
LEFT_LANE_SCALE = 0.5     # m
AHEAD_SCALE = 5.0         # m
ROAD_MARGIN = 0.9         # m (half vehicle width)
TACTICAL_ACCEL_SCALE = max(abs(ACCEL_MIN), ACCEL_MAX)   # 8 m/s^2
NOMINAL_HUMAN_SPEED = 30.0  # m/s, assumed human average in the strategic model


@dataclass(frozen=True)
class RewardConfig:
    """Feature weights and scales for both players and both levels.

    collision_avoidance must be <= 0 (it multiplies a positive Gaussian
    proximity feature); the remaining weights multiply features that are
    already signed as bonuses or penalties.
    """

    collision_avoidance: float = -60.0
    lane_center: float = 1.0
    left_lane_preference: float = 2.0
    target_speed: float = 0.05
    ahead_of_other: float = 3.0
    control_effort: float = 0.5
    road_bounds: float = 10.0
    target_speed_av: float = 35.0
    target_speed_human: float = 30.0
    collision_scale_x: float = 6.0
    collision_scale_y: float = 1.5

    def __post_init__(self):
        if self.collision_avoidance > 0.0:
            raise ValueError(
                f"collision_avoidance must be <= 0, got {self.collision_avoidance}")
        if self.collision_scale_x <= 0.0 or self.collision_scale_y <= 0.0:
            raise ValueError("collision length scales must be positive")

    def to_text(self) -> str:
        lines = ["# gtplan reward config"]
        for f in fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)!r}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "RewardConfig":
        known = {f.name for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in known:
                raise ValueError(f"line {lineno}: unknown reward field {key!r}")
            values[key] = float(val.strip())
        return cls(**values)

    @classmethod
    def load(cls, path) -> "RewardConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def digest(self) -> bytes:
        """32-byte hash identifying this configuration."""
        canonical = ",".join(
            f"{f.name}={float(getattr(self, f.name))!r}" for f in fields(self))
        return hashlib.sha256(canonical.encode()).digest()


# --- feature primitives ---

def collision_feature(dx, dy, sx, sy):
    """Gaussian proximity in relative position; 1 at overlap, ~0 when far."""
    return np.exp(-np.square(dx / sx) - np.square(dy / sy))


def lane_center_feature(y):
    """Smooth bumps at each lane center."""
    return (np.exp(-np.square((y - RIGHT_LANE_CENTER) / LANE_SIGMA))
            + np.exp(-np.square((y - LEFT_LANE_CENTER) / LANE_SIGMA)))


def left_lane_feature(y):
    """Sigmoid that is ~0 in the right lane and ~1 in the left lane."""
    return 1.0 / (1.0 + np.exp(-(y - LANE_WIDTH) / LEFT_LANE_SCALE))


def ahead_feature(dx):
    """Sigmoid bonus for being ahead; dx = x_self - x_other."""
    return 1.0 / (1.0 + np.exp(-dx / AHEAD_SCALE))


def speed_feature(v, target):
    return -np.square(v - target)


def tactical_effort_feature(steer, accel):
    return -(np.square(steer / STEER_MAX)
             + np.square(accel / TACTICAL_ACCEL_SCALE))


def strategic_effort_feature(w, a):
    return -(np.square(w / LAT_VEL_MAX) + np.square(a / STRAT_ACCEL_MAX))


def road_bound_feature(y):
    """Quadratic barrier outside the drivable band; 0 well inside the road."""
    low = np.maximum(ROAD_MARGIN - y, 0.0)
    high = np.maximum(y - (ROAD_Y_MAX - ROAD_MARGIN), 0.0)
    return -(np.square(low) + np.square(high))


# --- tactical rewards ---

def tactical_reward_arrays(cfg: RewardConfig, x_self, y_self, v_self,
                           x_other, y_other, steer, accel,
                           target_speed, ahead_weight):
    """Per-step tactical reward from one vehicle's perspective (vectorized)."""
    r = cfg.collision_avoidance * collision_feature(
        x_self - x_other, y_self - y_other,
        cfg.collision_scale_x, cfg.collision_scale_y)
    r = r + cfg.lane_center * lane_center_feature(y_self)
    r = r + cfg.left_lane_preference * left_lane_feature(y_self)
    r = r + cfg.target_speed * speed_feature(v_self, target_speed)
    r = r + ahead_weight * ahead_feature(x_self - x_other)
    r = r + cfg.control_effort * tactical_effort_feature(steer, accel)
    r = r + cfg.road_bounds * road_bound_feature(y_self)
    return r


def tactical_reward_A(x: JointState, uA: VehicleControl, uH: VehicleControl,
                      cfg: RewardConfig) -> float:
    """The autonomous car's per-step reward, including the ahead-of-human bonus."""
    return float(tactical_reward_arrays(
        cfg, x.av.x, x.av.y, x.av.v, x.human.x, x.human.y,
        uA.steer, uA.accel, cfg.target_speed_av, cfg.ahead_of_other))


def tactical_reward_H(x: JointState, uH: VehicleControl, uA: VehicleControl,
                      cfg: RewardConfig) -> float:
    """The human's per-step reward: same safety and lane features, no ahead bonus."""
    return float(tactical_reward_arrays(
        cfg, x.human.x, x.human.y, x.human.v, x.av.x, x.av.y,
        uH.steer, uH.accel, cfg.target_speed_human, 0.0))


# --- strategic rewards ---

def strategic_reward_arrays_A(cfg: RewardConfig, x_rel, y_A, v_rel, w_A, a_A,
                              y_H=None):
    """Vectorized strategic leader reward; y_H defaults to the left lane center."""
    if y_H is None:
        y_H = LEFT_LANE_CENTER
    r = cfg.collision_avoidance * collision_feature(
        x_rel, y_A - y_H, cfg.collision_scale_x, cfg.collision_scale_y)
    r = r + cfg.lane_center * lane_center_feature(y_A)
    r = r + cfg.left_lane_preference * left_lane_feature(y_A)
    r = r + cfg.target_speed * speed_feature(
        v_rel, cfg.target_speed_av - NOMINAL_HUMAN_SPEED)
    r = r + cfg.ahead_of_other * ahead_feature(x_rel)
    r = r + cfg.control_effort * strategic_effort_feature(w_A, a_A)
    r = r + cfg.road_bounds * road_bound_feature(y_A)
    return r


def strategic_reward_arrays_H(cfg: RewardConfig, x_rel, y_A, v_rel, a_H,
                              w_H=0.0, y_H=None):
    """Vectorized strategic follower reward.

    Her own speed is not part of the simplified state (it is assumed to
    stay near the nominal highway speed), so speed regulation enters only
    through the acceleration effort penalty.
    """
    if y_H is None:
        y_H = LEFT_LANE_CENTER
    r = cfg.collision_avoidance * collision_feature(
        x_rel, y_A - y_H, cfg.collision_scale_x, cfg.collision_scale_y)
    r = r + cfg.lane_center * lane_center_feature(y_H)
    r = r + cfg.left_lane_preference * left_lane_feature(y_H)
    r = r + cfg.control_effort * strategic_effort_feature(w_H, a_H)
    r = r + cfg.road_bounds * road_bound_feature(y_H)
    return r


def _strat_parts(s):
    if isinstance(s, Strat4State):
        return s.x_rel, s.y_A, s.v_rel, s.y_H
    return s.x_rel, s.y_A, s.v_rel, None


def strategic_reward_A(s, aA: StratActionA, aH: StratActionH,
                       cfg: RewardConfig) -> float:
    x_rel, y_A, v_rel, y_H = _strat_parts(s)
    return float(strategic_reward_arrays_A(
        cfg, x_rel, y_A, v_rel, aA.w_A, aA.a_A, y_H=y_H))


def strategic_reward_H(s, aA: StratActionA, aH: StratActionH,
                       cfg: RewardConfig) -> float:
    x_rel, y_A, v_rel, y_H = _strat_parts(s)
    return float(strategic_reward_arrays_H(
        cfg, x_rel, y_A, v_rel, aH.a_H, w_H=aH.w_H, y_H=y_H))


def pack_weights(cfg: RewardConfig, player: str) -> np.ndarray:
    """Flatten the per-player tactical weights for the jitted rollout kernel.

    Layout: [w_col, w_lane, w_left, w_speed, w_ahead, w_eff, w_road,
    target_speed, scale_x, scale_y].  The human gets a zero ahead weight.
    """
    if player == "A":
        ahead, tgt = cfg.ahead_of_other, cfg.target_speed_av
    elif player == "H":
        ahead, tgt = 0.0, cfg.target_speed_human
    else:
        raise ValueError(f"player must be 'A' or 'H', got {player!r}")
    return np.array([
        cfg.collision_avoidance, cfg.lane_center, cfg.left_lane_preference,
        cfg.target_speed, ahead, cfg.control_effort, cfg.road_bounds,
        tgt, cfg.collision_scale_x, cfg.collision_scale_y,
    ], dtype=np.float64)
