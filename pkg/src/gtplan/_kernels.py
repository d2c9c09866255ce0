"""Jitted rollout/objective kernels for the trajectory optimizer.

The receding-horizon planner evaluates its objective thousands of times
per simulated step (finite-difference gradients inside a quasi-Newton
loop inside best-response rounds), so the rollout is compiled with numba.
Formulas mirror dynamics.step_bicycle and rewards.tactical_reward_arrays;
tests lock the two paths together.

Weight vector layout (see rewards.pack_weights):
  [w_col, w_lane, w_left, w_speed, w_ahead, w_eff, w_road,
   target_speed, collision_scale_x, collision_scale_y]
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .dynamics import (
    LANE_WIDTH,
    LEFT_LANE_CENTER,
    RIGHT_LANE_CENTER,
    ROAD_Y_MAX,
    ROAD_Y_MIN,
    STEER_MAX,
    WHEELBASE,
)
from .rewards import (
    AHEAD_SCALE,
    LANE_SIGMA,
    LEFT_LANE_SCALE,
    ROAD_MARGIN,
    TACTICAL_ACCEL_SCALE,
)

_TWO_PI = 2.0 * math.pi


@njit(cache=True, inline="always")
def _bicycle(x, y, psi, v, steer, accel, dt):
    xn = x + v * math.cos(psi) * dt
    yn = y + v * math.sin(psi) * dt
    psin = psi + (v / WHEELBASE) * math.tan(steer) * dt
    psin = (psin + math.pi) % _TWO_PI - math.pi
    if psin <= -math.pi:
        psin = math.pi
    vn = v + accel * dt
    if vn < 0.0:
        vn = 0.0
    if yn < ROAD_Y_MIN:
        yn = ROAD_Y_MIN
    elif yn > ROAD_Y_MAX:
        yn = ROAD_Y_MAX
    return xn, yn, psin, vn


@njit(cache=True, inline="always")
def _reward_step(W, xs, ys, vs, xo, yo, steer, accel):
    dx = xs - xo
    dy = ys - yo
    r = W[0] * math.exp(-(dx / W[8]) ** 2 - (dy / W[9]) ** 2)
    r += W[1] * (math.exp(-((ys - RIGHT_LANE_CENTER) / LANE_SIGMA) ** 2)
                 + math.exp(-((ys - LEFT_LANE_CENTER) / LANE_SIGMA) ** 2))
    r += W[2] / (1.0 + math.exp(-(ys - LANE_WIDTH) / LEFT_LANE_SCALE))
    r += W[3] * -((vs - W[7]) ** 2)
    r += W[4] / (1.0 + math.exp(-dx / AHEAD_SCALE))
    r += W[5] * -((steer / STEER_MAX) ** 2 + (accel / TACTICAL_ACCEL_SCALE) ** 2)
    low = ROAD_MARGIN - ys
    if low < 0.0:
        low = 0.0
    high = ys - (ROAD_Y_MAX - ROAD_MARGIN)
    if high < 0.0:
        high = 0.0
    r += W[6] * -(low * low + high * high)
    return r


@njit(cache=True, inline="always")
def _interp_scalar(vals, shape, strides, mins, steps, pt):
    d = pt.shape[0]
    lo = np.empty(d, np.int64)
    frac = np.empty(d, np.float64)
    for j in range(d):
        t = (pt[j] - mins[j]) / steps[j]
        top = shape[j] - 1.0
        if t < 0.0:
            t = 0.0
        elif t > top:
            t = top
        idx = int(t)
        if idx > shape[j] - 2:
            idx = shape[j] - 2
        lo[j] = idx
        frac[j] = t - idx
    acc = 0.0
    for corner in range(1 << d):
        w = 1.0
        flat = 0
        for j in range(d):
            if (corner >> j) & 1:
                w *= frac[j]
                flat += (lo[j] + 1) * strides[j]
            else:
                w *= 1.0 - frac[j]
                flat += lo[j] * strides[j]
        acc += w * vals[flat]
    return acc


@njit(cache=True)
def rollout_objective(x0, UA, UH, dt, mover, W, use_value,
                      vals, vshape, vstrides, vmins, vsteps):
    """Sum of the mover's per-step rewards over the horizon, plus the
    interpolated strategic value of the projected terminal state."""
    xA, yA, psiA, vA = x0[0], x0[1], x0[2], x0[3]
    xH, yH, psiH, vH = x0[4], x0[5], x0[6], x0[7]
    total = 0.0
    for t in range(UA.shape[0]):
        if mover == 0:
            total += _reward_step(W, xA, yA, vA, xH, yH, UA[t, 0], UA[t, 1])
        else:
            total += _reward_step(W, xH, yH, vH, xA, yA, UH[t, 0], UH[t, 1])
        xA, yA, psiA, vA = _bicycle(xA, yA, psiA, vA, UA[t, 0], UA[t, 1], dt)
        xH, yH, psiH, vH = _bicycle(xH, yH, psiH, vH, UH[t, 0], UH[t, 1], dt)
    if use_value:
        d = vshape.shape[0]
        pt = np.empty(d, np.float64)
        pt[0] = xA - xH
        pt[1] = yA
        if d == 4:
            pt[2] = yH
            pt[3] = vA * math.cos(psiA) - vH * math.cos(psiH)
        else:
            pt[2] = vA * math.cos(psiA) - vH * math.cos(psiH)
        total += _interp_scalar(vals, vshape, vstrides, vmins, vsteps, pt)
    return total


@njit(cache=True)
def rollout_states(x0, UA, UH, dt):
    """Full state trajectory (M+1, 8) under the given open-loop controls."""
    M = UA.shape[0]
    out = np.empty((M + 1, 8), np.float64)
    xA, yA, psiA, vA = x0[0], x0[1], x0[2], x0[3]
    xH, yH, psiH, vH = x0[4], x0[5], x0[6], x0[7]
    out[0, 0], out[0, 1], out[0, 2], out[0, 3] = xA, yA, psiA, vA
    out[0, 4], out[0, 5], out[0, 6], out[0, 7] = xH, yH, psiH, vH
    for t in range(M):
        xA, yA, psiA, vA = _bicycle(xA, yA, psiA, vA, UA[t, 0], UA[t, 1], dt)
        xH, yH, psiH, vH = _bicycle(xH, yH, psiH, vH, UH[t, 0], UH[t, 1], dt)
        out[t + 1, 0], out[t + 1, 1], out[t + 1, 2], out[t + 1, 3] = xA, yA, psiA, vA
        out[t + 1, 4], out[t + 1, 5], out[t + 1, 6], out[t + 1, 7] = xH, yH, psiH, vH
    return out


@njit(cache=True)
def objective_gradient_fd(x0, UA, UH, dt, mover, W, use_value,
                          vals, vshape, vstrides, vmins, vsteps, h):
    """Central finite differences of the mover's objective w.r.t. its own
    controls, flattened as [steer_0, accel_0, steer_1, ...]."""
    M = UA.shape[0]
    g = np.empty(2 * M, np.float64)
    U = UA if mover == 0 else UH
    for i in range(2 * M):
        t = i // 2
        c = i % 2
        orig = U[t, c]
        U[t, c] = orig + h
        fp = rollout_objective(x0, UA, UH, dt, mover, W, use_value,
                               vals, vshape, vstrides, vmins, vsteps)
        U[t, c] = orig - h
        fm = rollout_objective(x0, UA, UH, dt, mover, W, use_value,
                               vals, vshape, vstrides, vmins, vsteps)
        U[t, c] = orig
        g[i] = (fp - fm) / (2.0 * h)
    return g
