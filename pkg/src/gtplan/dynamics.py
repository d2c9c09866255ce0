"""Vehicle dynamics at both planning levels.

Tactical level: kinematic bicycle per vehicle, Euler-integrated at a fine
time step (0.1 s).  Strategic level: simplified relative dynamics on a
coarse time step (0.5 s) where lateral velocity is treated as an input.
Also provides the projection from the full joint state to the simplified
strategic state.

All step functions are pure: they take immutable states and return new
ones, so they are safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Road geometry: two straight lanes.  y=0 is the right road edge.
LANE_WIDTH = 3.7          # m
ROAD_Y_MIN = 0.0          # m
ROAD_Y_MAX = 2 * LANE_WIDTH
RIGHT_LANE_CENTER = 0.5 * LANE_WIDTH      # 1.85 m
LEFT_LANE_CENTER = 1.5 * LANE_WIDTH       # 5.55 m

# Kinematic bicycle parameters (standard passenger car).
WHEELBASE = 2.7           # m
STEER_MAX = 0.5           # rad
ACCEL_MIN = -8.0          # m/s^2
ACCEL_MAX = 4.0           # m/s^2

# Strategic action bounds.  Lateral velocity limit 2.5 m/s is consistent
# with a typical 1.5 s lane change over a 3.7 m lane.
LAT_VEL_MAX = 2.5         # m/s
STRAT_ACCEL_MAX = 4.0     # m/s^2 (symmetric bound on strategic accelerations)

DEFAULT_FRICTION = 0.1    # 1/s, damping on v_rel in the strategic dynamics


class InvalidStateError(ValueError):
    """Raised when a dynamics function receives a non-finite state."""


@dataclass(frozen=True)
class VehicleState:
    """Single-vehicle tactical state.

    x: longitudinal position (m), y: lateral position (m),
    psi: heading (rad, 0 = road direction), v: forward speed (m/s).
    """

    x: float
    y: float
    psi: float
    v: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.psi, self.v)


@dataclass(frozen=True)
class JointState:
    """Full joint state of both vehicles at a common time stamp."""

    av: VehicleState
    human: VehicleState
    t: float = 0.0


@dataclass(frozen=True)
class VehicleControl:
    """Steering angle (rad) and longitudinal acceleration (m/s^2)."""

    steer: float
    accel: float


@dataclass(frozen=True)
class Strat3State:
    """Simplified state [x_rel, y_A, v_rel] with the human pinned to the left lane."""

    x_rel: float
    y_A: float
    v_rel: float


@dataclass(frozen=True)
class Strat4State:
    """Simplified state [x_rel, y_A, y_H, v_rel] with a mobile human lateral position."""

    x_rel: float
    y_A: float
    y_H: float
    v_rel: float


@dataclass(frozen=True)
class StratActionA:
    """Leader action: lateral velocity w_A (m/s) and acceleration a_A (m/s^2)."""

    w_A: float
    a_A: float


@dataclass(frozen=True)
class StratActionH:
    """Follower action: acceleration a_H, plus lateral velocity w_H in the 4-D model."""

    a_H: float
    w_H: float = 0.0


def _wrap_angle(psi: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = (psi + math.pi) % (2.0 * math.pi) - math.pi
    if wrapped <= -math.pi:
        wrapped = math.pi
    return wrapped


def _check_finite(s: VehicleState) -> None:
    if not (math.isfinite(s.x) and math.isfinite(s.y)
            and math.isfinite(s.psi) and math.isfinite(s.v)):
        raise InvalidStateError(f"non-finite vehicle state: {s}")


def step_bicycle(s: VehicleState, u: VehicleControl, dt: float) -> VehicleState:
    """One Euler step of the kinematic bicycle.

    Speed is clamped at zero (no reverse) and the lateral position is
    clamped to the road.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    _check_finite(s)
    x = s.x + s.v * math.cos(s.psi) * dt
    y = s.y + s.v * math.sin(s.psi) * dt
    psi = _wrap_angle(s.psi + (s.v / WHEELBASE) * math.tan(u.steer) * dt)
    v = s.v + u.accel * dt
    if v < 0.0:
        v = 0.0
    if y < ROAD_Y_MIN:
        y = ROAD_Y_MIN
    elif y > ROAD_Y_MAX:
        y = ROAD_Y_MAX
    return VehicleState(x, y, psi, v)


def step_joint(x: JointState, u_A: VehicleControl, u_H: VehicleControl,
               dt: float) -> JointState:
    """Advance both vehicles independently by one tactical step."""
    return JointState(
        av=step_bicycle(x.av, u_A, dt),
        human=step_bicycle(x.human, u_H, dt),
        t=x.t + dt,
    )


def _clamp_road(y):
    return np.minimum(np.maximum(y, ROAD_Y_MIN), ROAD_Y_MAX)


def strat_step_arrays(x_rel, y_A, v_rel, w_A, a_A, a_H, dk, alpha,
                      y_H=None, w_H=None):
    """Vectorized strategic Euler step; scalars or numpy arrays.

    Returns (x_rel', y_A', v_rel') for the 3-D model, or
    (x_rel', y_A', y_H', v_rel') when y_H/w_H are given.
    """
    x_rel_n = x_rel + v_rel * dk
    y_A_n = _clamp_road(y_A + w_A * dk)
    v_rel_n = v_rel + (a_A - a_H - alpha * v_rel) * dk
    if y_H is None:
        return x_rel_n, y_A_n, v_rel_n
    y_H_n = _clamp_road(y_H + w_H * dk)
    return x_rel_n, y_A_n, y_H_n, v_rel_n


def step_strategic_3d(s: Strat3State, aA: StratActionA, aH: StratActionH,
                      dk: float, alpha: float = DEFAULT_FRICTION) -> Strat3State:
    """One coarse Euler step of the 3-D strategic dynamics."""
    if dk <= 0.0:
        raise ValueError(f"dk must be positive, got {dk}")
    x_rel, y_A, v_rel = strat_step_arrays(
        s.x_rel, s.y_A, s.v_rel, aA.w_A, aA.a_A, aH.a_H, dk, alpha)
    return Strat3State(float(x_rel), float(y_A), float(v_rel))


def step_strategic_4d(s: Strat4State, aA: StratActionA, aH: StratActionH,
                      dk: float, alpha: float = DEFAULT_FRICTION) -> Strat4State:
    """One coarse Euler step of the 4-D strategic dynamics."""
    if dk <= 0.0:
        raise ValueError(f"dk must be positive, got {dk}")
    x_rel, y_A, y_H, v_rel = strat_step_arrays(
        s.x_rel, s.y_A, s.v_rel, aA.w_A, aA.a_A, aH.a_H, dk, alpha,
        y_H=s.y_H, w_H=aH.w_H)
    return Strat4State(float(x_rel), float(y_A), float(y_H), float(v_rel))


def project_3d(x: JointState) -> Strat3State:
    """Project the full joint state onto [x_rel, y_A, v_rel]."""
    return Strat3State(
        x_rel=x.av.x - x.human.x,
        y_A=x.av.y,
        v_rel=x.av.v * math.cos(x.av.psi) - x.human.v * math.cos(x.human.psi),
    )


def project_4d(x: JointState) -> Strat4State:
    """Project the full joint state onto [x_rel, y_A, y_H, v_rel]."""
    return Strat4State(
        x_rel=x.av.x - x.human.x,
        y_A=x.av.y,
        y_H=x.human.y,
        v_rel=x.av.v * math.cos(x.av.psi) - x.human.v * math.cos(x.human.psi),
    )


def joint_to_array(x: JointState) -> np.ndarray:
    """Pack a joint state as [xA, yA, psiA, vA, xH, yH, psiH, vH]."""
    return np.array(x.av.as_tuple() + x.human.as_tuple(), dtype=np.float64)


def joint_from_array(arr, t: float = 0.0) -> JointState:
    a = np.asarray(arr, dtype=np.float64)
    return JointState(
        av=VehicleState(float(a[0]), float(a[1]), float(a[2]), float(a[3])),
        human=VehicleState(float(a[4]), float(a[5]), float(a[6]), float(a[7])),
        t=t,
    )
