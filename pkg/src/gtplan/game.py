"""Feedback Stackelberg dynamic program with a Boltzmann follower.

Backward recursion over a gridded simplified state space.  At every cell
and stage, each candidate leader action is scored by the follower's
noisy-rational response: the follower's action-values q_H determine a
Boltzmann distribution, and the leader's q_A is the expectation of its
reward-plus-continuation under that distribution.  Successor states are
looked up in the next stage's value arrays by multilinear interpolation,
clamped to the grid.

Cells within a stage are independent; the solver optionally splits them
across a thread pool.  Chunking never changes per-cell arithmetic, so
results are bit-identical for any thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rewards as rw
from .dynamics import DEFAULT_FRICTION, LAT_VEL_MAX, STRAT_ACCEL_MAX, strat_step_arrays
from .grid import GridSpec, interp_uniform
from .table import ValueTable


@dataclass(frozen=True)
class ActionGrid:
    """Discrete leader and follower action sets, in tie-break order.

    leader: (nA, 2) rows of (w_A, a_A).
    follower: (nH, 1) rows of (a_H,) for the 3-D model or (nH, 2) rows of
    (a_H, w_H) for the 4-D model.
    """

    leader: np.ndarray
    follower: np.ndarray

    def __post_init__(self):
        leader = np.atleast_2d(np.asarray(self.leader, dtype=np.float64))
        follower = np.atleast_2d(np.asarray(self.follower, dtype=np.float64))
        object.__setattr__(self, "leader", leader)
        object.__setattr__(self, "follower", follower)
        if leader.size == 0 or follower.size == 0:
            raise ValueError("action sets must be nonempty")
        if leader.shape[1] != 2:
            raise ValueError("leader actions must be (w_A, a_A) pairs")
        if follower.shape[1] not in (1, 2):
            raise ValueError("follower actions must be (a_H,) or (a_H, w_H)")
        if np.abs(leader[:, 0]).max() > LAT_VEL_MAX + 1e-12:
            raise ValueError(f"leader lateral velocity exceeds {LAT_VEL_MAX} m/s")
        if np.abs(leader[:, 1]).max() > STRAT_ACCEL_MAX + 1e-12:
            raise ValueError(f"leader acceleration exceeds {STRAT_ACCEL_MAX} m/s^2")
        if np.abs(follower[:, 0]).max() > STRAT_ACCEL_MAX + 1e-12:
            raise ValueError(f"follower acceleration exceeds {STRAT_ACCEL_MAX} m/s^2")
        if follower.shape[1] == 2 and np.abs(follower[:, 1]).max() > LAT_VEL_MAX + 1e-12:
            raise ValueError(f"follower lateral velocity exceeds {LAT_VEL_MAX} m/s")


def default_actions(model: str) -> ActionGrid:
    """Deliberately coarse action sets: the strategic layer ranks outcomes."""
    lat = (-2.5, 0.0, 2.5)
    acc = (-4.0, 0.0, 4.0)
    leader = np.array([(w, a) for w in lat for a in acc])
    if model == "3d":
        follower = np.array([(a,) for a in acc])
    elif model == "4d":
        follower = np.array([(a, w) for a in acc for w in lat])
    else:
        raise ValueError(f"model must be '3d' or '4d', got {model!r}")
    return ActionGrid(leader=leader, follower=follower)


@dataclass(frozen=True)
class SolverParams:
    beta: float = 1.0
    K: int = 10
    alpha: float = DEFAULT_FRICTION
    dk: float = 0.5

    def __post_init__(self):
        if self.beta < 0.0:
            raise ValueError("beta must be >= 0")
        if self.K < 0:
            raise ValueError("K must be >= 0")


def boltzmann(q, beta: float) -> np.ndarray:
    """Noisy-rational action distribution p_i ∝ exp(beta * q_i).

    The max is subtracted before exponentiating so large utilities cannot
    overflow.  beta = 0 gives the uniform distribution.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.size == 0:
        raise ValueError("boltzmann needs at least one utility")
    if not np.all(np.isfinite(q)):
        raise ValueError("boltzmann utilities must be finite")
    z = np.exp(beta * (q - q.max()))
    return z / z.sum()


def _boltzmann_rows(q: np.ndarray, beta: float) -> np.ndarray:
    """Row-wise softmax over axis 0 of a (nH, m) utility array."""
    z = np.exp(beta * (q - q.max(axis=0)))
    return z / z.sum(axis=0)


def _strategic_rewards(model, grid: GridSpec, actions: ActionGrid,
                       cfg: rw.RewardConfig):
    """Precompute r_A, r_H for every (leader, follower, cell); stage-invariant."""
    coords = grid.cell_coords()
    x_rel, y_A = coords[:, 0], coords[:, 1]
    if model == "4d":
        y_H, v_rel = coords[:, 2], coords[:, 3]
    else:
        y_H, v_rel = None, coords[:, 2]
    nA, nH = actions.leader.shape[0], actions.follower.shape[0]
    rA = np.empty((nA, nH, grid.ncells))
    rH = np.empty((nA, nH, grid.ncells))
    for iA, (w_A, a_A) in enumerate(actions.leader):
        for iH, fa in enumerate(actions.follower):
            a_H = fa[0]
            w_H = fa[1] if fa.shape[0] == 2 else 0.0
            rA[iA, iH] = rw.strategic_reward_arrays_A(
                cfg, x_rel, y_A, v_rel, w_A, a_A, y_H=y_H)
            rH[iA, iH] = rw.strategic_reward_arrays_H(
                cfg, x_rel, y_A, v_rel, a_H, w_H=w_H, y_H=y_H)
    for name, r in (("r_A", rA), ("r_H", rH)):
        if not np.all(np.isfinite(r)):
            iA, iH, cell = np.argwhere(~np.isfinite(r))[0]
            raise ArithmeticError(
                f"non-finite strategic reward {name} at cell {cell} "
                f"(state {coords[cell]}), leader action {iA}, follower action {iH}")
    return rA, rH


def _pair_successors(model, grid: GridSpec, actions: ActionGrid, alpha,
                     coords, iA: int, iH: int) -> np.ndarray:
    """Clamped successor coordinates of every cell under one action pair."""
    x_rel, y_A = coords[:, 0], coords[:, 1]
    if model == "4d":
        y_H, v_rel = coords[:, 2], coords[:, 3]
    else:
        y_H, v_rel = None, coords[:, 2]
    w_A, a_A = actions.leader[iA]
    fa = actions.follower[iH]
    a_H = fa[0]
    w_H = fa[1] if fa.shape[0] == 2 else 0.0
    out = strat_step_arrays(x_rel, y_A, v_rel, w_A, a_A, a_H,
                            grid.dk, alpha, y_H=y_H, w_H=w_H)
    s = np.stack(out, axis=1)
    np.clip(s, grid.mins, grid.maxs, out=s)
    return s


def _sweep_chunk(model, grid, actions, alpha, coords, rA, rH, beta,
                 vA_next, vH_next, lo, hi, vA_out, vH_out, pol_out):
    """One stage update for cells [lo, hi); writes into disjoint output slices."""
    nA, nH = rA.shape[0], rA.shape[1]
    m = hi - lo
    chunk = coords[lo:hi]
    qA = np.empty((nA, m))
    qH_star = np.empty((nA, m))
    qH = np.empty((nH, m))
    qA_raw = np.empty((nH, m))
    for iA in range(nA):
        for iH in range(nH):
            pts = _pair_successors(model, grid, actions, alpha, chunk, iA, iH)
            qH[iH] = rH[iA, iH, lo:hi] + interp_uniform(
                vH_next, grid.shape, grid.mins, grid.spacings, pts)
            qA_raw[iH] = rA[iA, iH, lo:hi] + interp_uniform(
                vA_next, grid.shape, grid.mins, grid.spacings, pts)
        p = _boltzmann_rows(qH, beta)
        qH_star[iA] = (p * qH).sum(axis=0)
        qA[iA] = (p * qA_raw).sum(axis=0)
    best = np.argmax(qA, axis=0)
    cols = np.arange(m)
    vA_out[lo:hi] = qA[best, cols]
    vH_out[lo:hi] = qH_star[best, cols]
    pol_out[lo:hi] = best.astype(np.uint16)


def solve(model: str, grid: GridSpec, actions: ActionGrid,
          reward_config: rw.RewardConfig, params: SolverParams,
          threads: int = 1) -> ValueTable:
    """Run the backward recursion k = K..0 and return the solved table.

    Deterministic: identical inputs yield bit-identical tables regardless
    of thread count.
    """
    if model not in ("3d", "4d"):
        raise ValueError(f"model must be '3d' or '4d', got {model!r}")
    if (model == "3d") != (grid.ndim == 3):
        raise ValueError(f"{model} model needs a {3 if model == '3d' else 4}-D grid")
    if params.K != grid.K:
        raise ValueError(f"params.K={params.K} disagrees with grid K={grid.K}")
    if params.dk != grid.dk:
        raise ValueError(f"params.dk={params.dk} disagrees with grid dk={grid.dk}")
    if (model == "3d") != (actions.follower.shape[1] == 1):
        raise ValueError("follower action arity does not match the model")
    if actions.leader.shape[0] > np.iinfo(np.uint16).max:
        raise ValueError("too many leader actions for u16 policy storage")

    coords = grid.cell_coords()
    rA, rH = _strategic_rewards(model, grid, actions, reward_config)

    K, n = grid.K, grid.ncells
    values_A = np.zeros((K + 2, n))
    values_H = np.zeros((K + 2, n))
    policy = np.zeros((K + 1, n), dtype=np.uint16)

    threads = max(1, int(threads))
    bounds = [(b[0], b[-1] + 1) for b in np.array_split(np.arange(n), threads)
              if b.size > 0]
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for k in range(K, -1, -1):
            vA_next, vH_next = values_A[k + 1], values_H[k + 1]
            if pool is None:
                _sweep_chunk(model, grid, actions, params.alpha, coords,
                             rA, rH, params.beta, vA_next, vH_next,
                             0, n, values_A[k], values_H[k], policy[k])
            else:
                futures = [
                    pool.submit(_sweep_chunk, model, grid, actions,
                                params.alpha, coords, rA, rH, params.beta,
                                vA_next, vH_next, lo, hi,
                                values_A[k], values_H[k], policy[k])
                    for lo, hi in bounds
                ]
                for f in futures:
                    f.result()
            for name, v in (("V_A", values_A[k]), ("V_H", values_H[k])):
                if not np.all(np.isfinite(v)):
                    cell = int(np.argmin(np.isfinite(v)))
                    raise ArithmeticError(
                        f"non-finite {name} at stage {k}, cell {cell} "
                        f"(state {coords[cell]})")
    finally:
        if pool is not None:
            pool.shutdown()

    return ValueTable(
        grid=grid, model=model, beta=params.beta, alpha=params.alpha,
        values_A=values_A[:K + 1].copy(), values_H=values_H[:K + 1].copy(),
        policy=policy, leader_actions=actions.leader.copy(),
        follower_actions=actions.follower.copy(),
        reward_hash=reward_config.digest(),
    )
