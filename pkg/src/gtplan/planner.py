"""Receding-horizon trajectory optimization with a strategic terminal value.

The autonomous car plans M short steps of bicycle-model controls by
iterated local best response: the predicted human trajectory is optimized
against the current plan, then the plan is optimized against the
prediction, until neither changes.  When a solved game table is
configured, its stage-0 value at the projected terminal state is added to
the objective, standing in for the reward-to-go beyond the horizon.

The inner optimizer is bounded L-BFGS-B over the flattened control
sequence; gradients are central finite differences of the rolled-out
objective (the normative contract - see objective_gradient).  An optional
influence mode additionally differentiates through the human's
best-response map via implicit differentiation of her first-order
optimality condition.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from . import _kernels as k
from .dynamics import (
    ACCEL_MAX,
    ACCEL_MIN,
    STEER_MAX,
    JointState,
    VehicleControl,
    joint_to_array,
    step_joint,
)
from .grid import strides_for
from .rewards import RewardConfig, pack_weights
from .table import ValueTable

FD_STEP = 1e-5        # central-difference step per control
HESS_STEP = 1e-4      # outer step for Hessian blocks (FD of FD gradients)


@dataclass(frozen=True)
class Trajectory:
    """Open-loop joint trajectory; states[t+1] = step_joint(states[t], ...)."""

    states: tuple[JointState, ...]
    controls_A: tuple[VehicleControl, ...]
    controls_H: tuple[VehicleControl, ...]
    dt: float


@dataclass
class PlannerConfig:
    M: int = 5
    dt: float = 0.1
    rewards: RewardConfig = field(default_factory=RewardConfig)
    use_value: bool = True
    av_value: ValueTable | None = None
    human_value: ValueTable | None = None
    influence_term: bool = False
    max_rounds: int = 10
    round_tol: float = 1e-3
    max_inner_iter: int = 50
    inner_gtol: float = 1e-4

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.dt <= 0 or self.round_tol <= 0 or self.inner_gtol <= 0:
            raise ValueError("dt and tolerances must be positive")


@dataclass(frozen=True)
class PlanResult:
    controls_A: np.ndarray     # (M, 2) steer, accel
    controls_H: np.ndarray     # predicted human controls (M, 2)
    objective: float
    rounds: int
    converged: bool
    influence_fallbacks: int = 0


_NO_VALUE = (np.zeros(1), np.ones(1, dtype=np.int64), np.ones(1, dtype=np.int64),
             np.zeros(1), np.ones(1))


def _value_pack(table: ValueTable | None, player: str):
    """(use_value, vals, shape, strides, mins, steps) for the jitted kernel."""
    if table is None:
        return (False,) + _NO_VALUE
    vals = np.ascontiguousarray(table.stage_values(0, player))
    return (True, vals, np.array(table.grid.shape, dtype=np.int64),
            strides_for(table.grid.shape), table.grid.mins, table.grid.spacings)


def _as_controls(u, M: int, name: str) -> np.ndarray:
    arr = np.asarray(u, dtype=np.float64)
    if arr.shape != (M, 2):
        raise ValueError(f"{name} must have shape ({M}, 2), got {arr.shape}")
    return np.ascontiguousarray(arr)


def controls_to_array(controls) -> np.ndarray:
    return np.array([(c.steer, c.accel) for c in controls], dtype=np.float64)


def array_to_controls(arr) -> tuple[VehicleControl, ...]:
    return tuple(VehicleControl(float(s), float(a)) for s, a in np.atleast_2d(arr))


def rollout_trajectory(x0: JointState, uA, uH, dt: float) -> Trajectory:
    """Roll controls through the exact dynamics module (not the jitted kernel)."""
    uA = np.atleast_2d(np.asarray(uA, dtype=np.float64))
    uH = np.atleast_2d(np.asarray(uH, dtype=np.float64))
    states = [x0]
    for t in range(uA.shape[0]):
        states.append(step_joint(states[-1], VehicleControl(*uA[t]),
                                 VehicleControl(*uH[t]), dt))
    return Trajectory(tuple(states), array_to_controls(uA), array_to_controls(uH), dt)


def objective(x0: JointState, uA, uH, cfg: PlannerConfig,
              value: ValueTable | None = None) -> float:
    """AV return over the horizon: running reward plus optional terminal value."""
    UA = _as_controls(uA, cfg.M, "uA")
    UH = _as_controls(uH, cfg.M, "uH")
    pack = _value_pack(value, "A")
    return float(k.rollout_objective(joint_to_array(x0), UA, UH, cfg.dt, 0,
                                     pack_weights(cfg.rewards, "A"), *pack))


def objective_gradient(x0: JointState, uA, uH, who: str, cfg: PlannerConfig,
                       value: ValueTable | None = None) -> np.ndarray:
    """Central-difference gradient of the mover's objective w.r.t. its controls."""
    UA = _as_controls(uA, cfg.M, "uA").copy()
    UH = _as_controls(uH, cfg.M, "uH").copy()
    mover = 0 if who == "A" else 1
    pack = _value_pack(value, who)
    return k.objective_gradient_fd(joint_to_array(x0), UA, UH, cfg.dt, mover,
                                   pack_weights(cfg.rewards, who), *pack, FD_STEP)


def _mover_value(cfg: PlannerConfig, who: str) -> ValueTable | None:
    if not cfg.use_value:
        return None
    return cfg.av_value if who == "A" else cfg.human_value


def _bounds(M: int):
    return [(-STEER_MAX, STEER_MAX), (ACCEL_MIN, ACCEL_MAX)] * M


def _run_lbfgsb(fun, jac, u0, bounds, cfg: PlannerConfig, callback=None):
    res = minimize(fun, u0, jac=jac, method="L-BFGS-B", bounds=bounds,
                   callback=callback,
                   options={"maxiter": cfg.max_inner_iter, "ftol": 1e-12,
                            "gtol": cfg.inner_gtol})
    return res.x


def optimize_own(x0: JointState, fixed_other, who: str, cfg: PlannerConfig,
                 init=None, callback=None) -> np.ndarray:
    """Locally maximize one player's objective holding the other's controls fixed.

    Returns (M, 2) controls within bounds whose objective is never worse
    than the initialization's.
    """
    if who not in ("A", "H"):
        raise ValueError(f"who must be 'A' or 'H', got {who!r}")
    other = _as_controls(fixed_other, cfg.M, "fixed_other")
    u0 = (np.zeros((cfg.M, 2)) if init is None
          else _as_controls(init, cfg.M, "init")).copy()
    x0_arr = joint_to_array(x0)
    W = pack_weights(cfg.rewards, who)
    pack = _value_pack(_mover_value(cfg, who), who)
    mover = 0 if who == "A" else 1

    def split(u_flat):
        mine = np.ascontiguousarray(u_flat.reshape(cfg.M, 2))
        return (mine, other) if who == "A" else (other, mine)

    def neg_obj(u_flat):
        UA, UH = split(u_flat)
        val = k.rollout_objective(x0_arr, UA, UH, cfg.dt, mover, W, *pack)
        if not np.isfinite(val):
            raise ArithmeticError(
                f"non-finite objective for player {who} at t={x0.t}: controls {u_flat}")
        return -val

    def neg_grad(u_flat):
        UA, UH = split(u_flat)
        return -k.objective_gradient_fd(x0_arr, UA.copy(), UH.copy(), cfg.dt,
                                        mover, W, *pack, FD_STEP)

    f_init = neg_obj(u0.reshape(-1))
    u_opt = _run_lbfgsb(neg_obj, neg_grad, u0.reshape(-1), _bounds(cfg.M), cfg,
                        callback=callback)
    if neg_obj(u_opt) > f_init:
        u_opt = u0.reshape(-1)
    lo = np.array([-STEER_MAX, ACCEL_MIN] * cfg.M)
    hi = np.array([STEER_MAX, ACCEL_MAX] * cfg.M)
    return np.clip(u_opt, lo, hi).reshape(cfg.M, 2)


def fd_gradient(f, u: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Plain central differences of a scalar function of a flat vector."""
    g = np.empty(u.size)
    for i in range(u.size):
        up, um = u.copy(), u.copy()
        up[i] += h
        um[i] -= h
        g[i] = (f(up) - f(um)) / (2.0 * h)
    return g


def response_jacobian(grad_h, uA: np.ndarray, uH: np.ndarray,
                      h: float = HESS_STEP):
    """d(uH*)/d(uA) from the human's first-order optimality condition.

    grad_h(uA, uH) must return the human objective's gradient w.r.t. uH.
    Returns None when the human Hessian is singular or ill-conditioned.
    """
    n_h, n_a = uH.size, uA.size
    H_hh = np.empty((n_h, n_h))
    H_ha = np.empty((n_h, n_a))
    for j in range(n_h):
        up, um = uH.copy(), uH.copy()
        up[j] += h
        um[j] -= h
        H_hh[:, j] = (grad_h(uA, up) - grad_h(uA, um)) / (2.0 * h)
    for j in range(n_a):
        up, um = uA.copy(), uA.copy()
        up[j] += h
        um[j] -= h
        H_ha[:, j] = (grad_h(up, uH) - grad_h(um, uH)) / (2.0 * h)
    if not (np.all(np.isfinite(H_hh)) and np.all(np.isfinite(H_ha))):
        return None
    try:
        if np.linalg.cond(H_hh) > 1e10:
            return None
        return -np.linalg.solve(H_hh, H_ha)
    except np.linalg.LinAlgError:
        return None


def maximize_with_influence(f_a, grad_h, uA0: np.ndarray, uH0: np.ndarray,
                            bounds_a, bounds_h, cfg: PlannerConfig):
    """Maximize uA -> f_a(uA, uH0 + D (uA - uA0)) with D the local response
    Jacobian, so finite differences of the composite recover the total
    derivative including the influence term.

    Returns (uA, fell_back).  Falls back to holding uH fixed when the
    response Jacobian is unavailable.
    """
    D = response_jacobian(grad_h, uA0, uH0)
    fell_back = D is None
    lo_h = np.array([b[0] for b in bounds_h])
    hi_h = np.array([b[1] for b in bounds_h])

    def respond(u_flat):
        if D is None:
            return uH0
        return np.clip(uH0 + D @ (u_flat - uA0), lo_h, hi_h)

    def neg_obj(u_flat):
        val = f_a(u_flat, respond(u_flat))
        if not np.isfinite(val):
            raise ArithmeticError("non-finite influence-mode objective")
        return -val

    def neg_grad(u_flat):
        return -fd_gradient(lambda u: f_a(u, respond(u)), u_flat)

    f_init = neg_obj(uA0)
    u_opt = _run_lbfgsb(neg_obj, neg_grad, uA0.copy(), bounds_a, cfg)
    if neg_obj(u_opt) > f_init:
        u_opt = uA0.copy()
    lo_a = np.array([b[0] for b in bounds_a])
    hi_a = np.array([b[1] for b in bounds_a])
    return np.clip(u_opt, lo_a, hi_a), fell_back


class TacticalPlanner:
    """Stateful receding-horizon planner (warm-started across calls).

    One instance per closed-loop agent; instances may run concurrently on
    distinct data. Value tables are only read.
    """

    def __init__(self, cfg: PlannerConfig):
        self.cfg = cfg
        self._prev: tuple[np.ndarray, np.ndarray] | None = None

    def _warm_start(self):
        M = self.cfg.M
        if self._prev is None:
            return np.zeros((M, 2)), np.zeros((M, 2))
        shifted = []
        for u in self._prev:
            s = np.zeros((M, 2))
            s[:-1] = u[1:]
            shifted.append(s)
        return shifted[0], shifted[1]

    def plan(self, x0: JointState, init=None) -> PlanResult:
        cfg = self.cfg
        if init is None:
            UA, UH = self._warm_start()
        else:
            UA = _as_controls(init[0], cfg.M, "init UA").copy()
            UH = _as_controls(init[1], cfg.M, "init UH").copy()
        x0_arr = joint_to_array(x0)
        W_A = pack_weights(cfg.rewards, "A")
        W_H = pack_weights(cfg.rewards, "H")
        pack_A = _value_pack(_mover_value(cfg, "A"), "A")
        pack_H = _value_pack(_mover_value(cfg, "H"), "H")
        fallbacks = 0
        converged = False
        rounds = 0
        for _ in range(cfg.max_rounds):
            rounds += 1
            UH_new = optimize_own(x0, UA, "H", cfg, init=UH)
            if cfg.influence_term:
                def f_a(ua_flat, uh_flat):
                    return k.rollout_objective(
                        x0_arr, np.ascontiguousarray(ua_flat.reshape(cfg.M, 2)),
                        np.ascontiguousarray(uh_flat.reshape(cfg.M, 2)),
                        cfg.dt, 0, W_A, *pack_A)

                def g_h(ua_flat, uh_flat):
                    return k.objective_gradient_fd(
                        x0_arr, np.ascontiguousarray(ua_flat.reshape(cfg.M, 2)),
                        np.ascontiguousarray(uh_flat.reshape(cfg.M, 2)),
                        cfg.dt, 1, W_H, *pack_H, FD_STEP)

                ua_flat, fell_back = maximize_with_influence(
                    f_a, g_h, UA.reshape(-1).copy(), UH_new.reshape(-1).copy(),
                    _bounds(cfg.M), _bounds(cfg.M), cfg)
                if fell_back:
                    fallbacks += 1
                    UA_new = optimize_own(x0, UH_new, "A", cfg, init=UA)
                else:
                    UA_new = ua_flat.reshape(cfg.M, 2)
            else:
                UA_new = optimize_own(x0, UH_new, "A", cfg, init=UA)
            dA = float(np.abs(UA_new - UA).max())
            dH = float(np.abs(UH_new - UH).max())
            UA, UH = UA_new, UH_new
            if dA < cfg.round_tol and dH < cfg.round_tol:
                converged = True
                break
        self._prev = (UA.copy(), UH.copy())
        obj = objective(x0, UA, UH, cfg, value=_mover_value(cfg, "A"))
        return PlanResult(UA, UH, obj, rounds, converged, fallbacks)


def plan(x0: JointState, cfg: PlannerConfig, init=None) -> PlanResult:
    """One-shot plan from a fresh planner (no warm start)."""
    return TacticalPlanner(cfg).plan(x0, init=init)


def plan_with_influence(x0: JointState, cfg: PlannerConfig, init=None) -> PlanResult:
    """Plan with the influence term in the AV gradient; cfg must enable it."""
    if not cfg.influence_term:
        raise ValueError("plan_with_influence requires cfg.influence_term = True")
    return TacticalPlanner(cfg).plan(x0, init=init)


def default_long_horizon_inits(M: int):
    """Diverse seeds: full-left, full-right, and straight steering at constant speed."""
    inits = []
    for steer in (STEER_MAX, -STEER_MAX, 0.0):
        u = np.zeros((M, 2))
        u[:, 0] = steer
        inits.append((u.copy(), u.copy()))
    return inits


def plan_long_horizon(x0: JointState, cfg: PlannerConfig, inits=None) -> PlanResult:
    """Multi-start planning: run plan() per initialization pair, keep the best."""
    if inits is None:
        inits = default_long_horizon_inits(cfg.M)
    best = None
    for init in inits:
        result = plan(x0, cfg, init=init)
        if best is None or result.objective > best.objective:
            best = result
    return best


def make_planner(cfg: PlannerConfig, long_horizon: bool = False):
    """Planner object for closed-loop use; long-horizon planners multi-start."""
    if not long_horizon:
        return TacticalPlanner(cfg)
    return _LongHorizonPlanner(cfg)


class _LongHorizonPlanner:
    def __init__(self, cfg: PlannerConfig):
        self.cfg = cfg

    def plan(self, x0: JointState) -> PlanResult:
        return plan_long_horizon(x0, self.cfg)
