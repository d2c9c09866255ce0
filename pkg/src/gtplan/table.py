"""Gridded game-value tables: lookup, gradients, file format, heatmaps.

A solved game is stored per stage as flat C-order arrays of leader and
follower values plus the leader's policy (action index).  Stage K+1 is
identically zero by construction and is not stored; lookups at K+1
return 0.

File format (little-endian throughout):
  magic "SGVT" | version u32 | model tag u8 (3 or 4) | beta f64 | K u16
  | per dimension: min f64, max f64, count u32
  | leader actions: count u32, then (w_A f64, a_A f64) each
  | follower actions: count u32, arity u32, then arity f64 each
  | reward-config hash (32 bytes) | dk f64 | alpha f64
  | payload: V_A, V_H (f64), policy (u16), each stage-major then
    row-major in declared dimension order
  | crc32 of payload (u32)
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .dynamics import Strat3State, Strat4State
from .grid import GridDim, GridSpec, interp_uniform

MAGIC = b"SGVT"
FORMAT_VERSION = 1


class TableFormatError(ValueError):
    """Raised when a value-table file fails validation on load."""


@dataclass
class ValueTable:
    """Per-stage value arrays and leader policy for one solved game."""

    grid: GridSpec
    model: str                 # "3d" | "4d"
    beta: float
    alpha: float
    values_A: np.ndarray       # (K+1, ncells) f64
    values_H: np.ndarray       # (K+1, ncells) f64
    policy: np.ndarray         # (K+1, ncells) u16, leader action index
    leader_actions: np.ndarray    # (nA, 2): columns (w_A, a_A)
    follower_actions: np.ndarray  # (nH, 1) or (nH, 2): columns (a_H[, w_H])
    reward_hash: bytes = b"\x00" * 32

    def __post_init__(self):
        expect = (self.grid.K + 1, self.grid.ncells)
        for name in ("values_A", "values_H", "policy"):
            arr = getattr(self, name)
            if arr.shape != expect:
                raise ValueError(f"{name} must have shape {expect}, got {arr.shape}")
        if self.model not in ("3d", "4d"):
            raise ValueError(f"model must be '3d' or '4d', got {self.model!r}")
        if len(self.reward_hash) != 32:
            raise ValueError("reward_hash must be 32 bytes")

    def stage_values(self, k: int, player: str) -> np.ndarray:
        """Flat node values at stage k; stage K+1 is the implicit zero stage."""
        if not 0 <= k <= self.grid.K + 1:
            raise ValueError(f"stage k={k} outside [0, {self.grid.K + 1}]")
        if k == self.grid.K + 1:
            return np.zeros(self.grid.ncells)
        if player == "A":
            return self.values_A[k]
        if player == "H":
            return self.values_H[k]
        raise ValueError(f"player must be 'A' or 'H', got {player!r}")


def _as_points(table: ValueTable, s) -> np.ndarray:
    d = table.grid.ndim
    if isinstance(s, Strat3State):
        pts = np.array([[s.x_rel, s.y_A, s.v_rel]])
    elif isinstance(s, Strat4State):
        pts = np.array([[s.x_rel, s.y_A, s.y_H, s.v_rel]])
    else:
        pts = np.atleast_2d(np.asarray(s, dtype=np.float64))
    if pts.shape[1] != d:
        raise ValueError(
            f"state dimension {pts.shape[1]} does not match {table.model} table ({d})")
    return pts


def lookup_value(table: ValueTable, s, k: int, player: str) -> float:
    """Interpolated value at a strategic state; out-of-range coordinates clamp."""
    pts = _as_points(table, s)
    vals = interp_uniform(
        table.stage_values(k, player), table.grid.shape,
        table.grid.mins, table.grid.spacings, pts)
    return float(vals[0]) if pts.shape[0] == 1 else vals


def lookup_value_batch(table: ValueTable, points: np.ndarray, k: int,
                       player: str) -> np.ndarray:
    return interp_uniform(
        table.stage_values(k, player), table.grid.shape,
        table.grid.mins, table.grid.spacings, _as_points(table, points))


def value_gradient(table: ValueTable, s, k: int, player: str) -> np.ndarray:
    """Finite-difference gradient with step = one grid spacing per dimension.

    Central in the interior, one-sided where the stencil would leave the
    grid.  Exact for tables affine in a coordinate.
    """
    pts = _as_points(table, s)
    if pts.shape[0] != 1:
        raise ValueError("value_gradient takes a single state")
    x = pts[0]
    grid = table.grid
    grad = np.zeros(grid.ndim)
    for j in range(grid.ndim):
        h = grid.spacings[j]
        hi = min(x[j] + h, grid.maxs[j])
        lo = max(x[j] - h, grid.mins[j])
        p_hi, p_lo = x.copy(), x.copy()
        p_hi[j], p_lo[j] = hi, lo
        v = interp_uniform(
            table.stage_values(k, player), grid.shape, grid.mins,
            grid.spacings, np.stack([p_hi, p_lo]))
        grad[j] = (v[0] - v[1]) / (hi - lo)
    return grad


def export_heatmap_slice(table: ValueTable, k: int, fixed: dict,
                         free: tuple[str, str], player: str = "A") -> np.ndarray:
    """Value matrix over two free dimensions' grid nodes, others held fixed.

    Rows follow the first free dimension, columns the second.
    """
    if len(free) != 2 or free[0] == free[1]:
        raise ValueError("exactly two distinct free dimensions required")
    grid = table.grid
    free_idx = [grid.dim_index(n) for n in free]
    fixed_vals = dict(fixed)
    point_template = np.zeros(grid.ndim)
    for i, dim in enumerate(grid.dims):
        if dim.name in free:
            continue
        if dim.name not in fixed_vals:
            raise ValueError(f"dimension {dim.name!r} needs a fixed value")
        point_template[i] = float(fixed_vals.pop(dim.name))
    if fixed_vals:
        raise ValueError(f"unknown dimension names: {sorted(fixed_vals)}")
    c1 = grid.dims[free_idx[0]].coords()
    c2 = grid.dims[free_idx[1]].coords()
    a, b = np.meshgrid(c1, c2, indexing="ij")
    pts = np.tile(point_template, (a.size, 1))
    pts[:, free_idx[0]] = a.reshape(-1)
    pts[:, free_idx[1]] = b.reshape(-1)
    vals = lookup_value_batch(table, pts, k, player)
    return vals.reshape(len(c1), len(c2))


def write_heatmap_csv(path, table: ValueTable, matrix: np.ndarray,
                      free: tuple[str, str]) -> None:
    """CSV with a header row of column coordinates; rows lead with their coordinate."""
    grid = table.grid
    c1 = grid.dims[grid.dim_index(free[0])].coords()
    c2 = grid.dims[grid.dim_index(free[1])].coords()
    with open(path, "w", encoding="utf-8") as fh:
        header = f"{free[0]}\\{free[1]}," + ",".join(repr(float(v)) for v in c2)
        fh.write(header + "\n")
        for i, row in enumerate(matrix):
            fh.write(repr(float(c1[i])) + "," +
                     ",".join(repr(float(v)) for v in row) + "\n")


def write_heatmap_ppm(path, matrix: np.ndarray) -> None:
    """8-bit binary PPM, linearly mapping min value to red and max to blue."""
    m = np.asarray(matrix, dtype=np.float64)
    lo, hi = float(m.min()), float(m.max())
    t = np.zeros_like(m) if hi == lo else (m - lo) / (hi - lo)
    rgb = np.zeros(m.shape + (3,), dtype=np.uint8)
    rgb[..., 0] = np.round(255 * (1.0 - t)).astype(np.uint8)
    rgb[..., 2] = np.round(255 * t).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{m.shape[1]} {m.shape[0]}\n255\n".encode())
        fh.write(rgb.tobytes())


def save(table: ValueTable, path) -> None:
    """Write the table; round-trips bit-exactly through load()."""
    grid = table.grid
    header = bytearray()
    header += MAGIC
    header += struct.pack("<I", FORMAT_VERSION)
    header += struct.pack("<B", grid.ndim)
    header += struct.pack("<d", table.beta)
    header += struct.pack("<H", grid.K)
    for dim in grid.dims:
        header += struct.pack("<ddI", dim.lo, dim.hi, dim.count)
    la = np.ascontiguousarray(table.leader_actions, dtype="<f8")
    header += struct.pack("<I", la.shape[0])
    header += la.tobytes()
    fa = np.ascontiguousarray(table.follower_actions, dtype="<f8")
    header += struct.pack("<II", fa.shape[0], fa.shape[1])
    header += fa.tobytes()
    header += table.reward_hash
    header += struct.pack("<dd", grid.dk, table.alpha)
    payload = (table.values_A.astype("<f8").tobytes()
               + table.values_H.astype("<f8").tobytes()
               + table.policy.astype("<u2").tobytes())
    with open(path, "wb") as fh:
        fh.write(bytes(header))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def load(path) -> ValueTable:
    with open(path, "rb") as fh:
        blob = fh.read()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(blob):
            raise TableFormatError("file truncated")
        chunk = blob[off:off + n]
        off += n
        return chunk

    if take(4) != MAGIC:
        raise TableFormatError("bad magic: not a strategic value-table file")
    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise TableFormatError(
            f"unsupported format version {version}, expected {FORMAT_VERSION}")
    (ndim,) = struct.unpack("<B", take(1))
    if ndim not in (3, 4):
        raise TableFormatError(f"model tag must be 3 or 4, got {ndim}")
    (beta,) = struct.unpack("<d", take(8))
    (K,) = struct.unpack("<H", take(2))
    dims = []
    names = ("x_rel", "y_A", "v_rel") if ndim == 3 else ("x_rel", "y_A", "y_H", "v_rel")
    for name in names:
        lo, hi, count = struct.unpack("<ddI", take(20))
        dims.append(GridDim(name, lo, hi, count))
    (n_leader,) = struct.unpack("<I", take(4))
    leader = np.frombuffer(take(n_leader * 16), dtype="<f8").reshape(n_leader, 2).copy()
    n_follower, arity = struct.unpack("<II", take(8))
    follower = np.frombuffer(take(n_follower * arity * 8),
                             dtype="<f8").reshape(n_follower, arity).copy()
    reward_hash = take(32)
    dk, alpha = struct.unpack("<dd", take(16))
    grid = GridSpec(dims=tuple(dims), K=K, dk=dk)
    n = grid.ncells * (K + 1)
    payload_off = off
    values_A = np.frombuffer(take(n * 8), dtype="<f8").reshape(K + 1, grid.ncells).copy()
    values_H = np.frombuffer(take(n * 8), dtype="<f8").reshape(K + 1, grid.ncells).copy()
    policy = np.frombuffer(take(n * 2), dtype="<u2").reshape(K + 1, grid.ncells).copy()
    payload = blob[payload_off:off]
    (crc_stored,) = struct.unpack("<I", take(4))
    if zlib.crc32(payload) & 0xFFFFFFFF != crc_stored:
        raise TableFormatError("payload checksum mismatch: file is corrupted")
    if off != len(blob):
        raise TableFormatError("trailing bytes after checksum")
    return ValueTable(
        grid=grid, model=f"{ndim}d", beta=beta, alpha=alpha,
        values_A=values_A, values_H=values_H, policy=policy,
        leader_actions=leader, follower_actions=follower,
        reward_hash=bytes(reward_hash),
    )
