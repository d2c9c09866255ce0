"""Uniform state grids and multilinear interpolation.

The strategic game is solved on a uniform rectangular grid over the
simplified state.  Queries off the nodes use multilinear interpolation
over the 2^d enclosing corners; coordinates outside the grid are clamped
to the boundary first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DIM_NAMES_3D = ("x_rel", "y_A", "v_rel")
DIM_NAMES_4D = ("x_rel", "y_A", "y_H", "v_rel")


@dataclass(frozen=True)
class GridDim:
    name: str
    lo: float
    hi: float
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValueError(f"dimension {self.name}: count must be >= 2")
        if not self.lo < self.hi:
            raise ValueError(f"dimension {self.name}: need min < max")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.count - 1)

    def coords(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid with K+1 decision stages of duration dk each."""

    dims: tuple[GridDim, ...]
    K: int
    dk: float

    def __post_init__(self):
        names = tuple(d.name for d in self.dims)
        if names not in (DIM_NAMES_3D, DIM_NAMES_4D):
            raise ValueError(
                f"dims must be ordered {DIM_NAMES_3D} or {DIM_NAMES_4D}, got {names}")
        if self.K < 0:
            raise ValueError("K must be >= 0")
        if self.dk <= 0:
            raise ValueError("dk must be positive")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(d.count for d in self.dims)

    @property
    def ncells(self) -> int:
        n = 1
        for d in self.dims:
            n *= d.count
        return n

    @property
    def mins(self) -> np.ndarray:
        return np.array([d.lo for d in self.dims])

    @property
    def maxs(self) -> np.ndarray:
        return np.array([d.hi for d in self.dims])

    @property
    def spacings(self) -> np.ndarray:
        return np.array([d.spacing for d in self.dims])

    def dim_index(self, name: str) -> int:
        for i, d in enumerate(self.dims):
            if d.name == name:
                return i
        raise KeyError(f"unknown dimension {name!r}")

    def cell_coords(self) -> np.ndarray:
        """(ncells, ndim) node coordinates, C-order (row-major) flattened."""
        axes = np.meshgrid(*(d.coords() for d in self.dims), indexing="ij")
        return np.stack([a.reshape(-1) for a in axes], axis=1)


def default_grid_3d(K: int = 10, dk: float = 0.5) -> GridSpec:
    return GridSpec(
        dims=(
            GridDim("x_rel", -50.0, 50.0, 101),
            GridDim("y_A", 0.0, 7.4, 17),
            GridDim("v_rel", -10.5, 10.5, 43),
        ),
        K=K, dk=dk,
    )


def default_grid_4d(K: int = 10, dk: float = 0.5) -> GridSpec:
    return GridSpec(
        dims=(
            GridDim("x_rel", -37.0, 37.0, 75),
            GridDim("y_A", 0.0, 7.4, 12),
            GridDim("y_H", 0.0, 7.4, 12),
            GridDim("v_rel", -10.0, 10.0, 21),
        ),
        K=K, dk=dk,
    )


def strides_for(shape) -> np.ndarray:
    """Element strides of a C-order array of the given shape."""
    d = len(shape)
    strides = np.ones(d, dtype=np.int64)
    for j in range(d - 2, -1, -1):
        strides[j] = strides[j + 1] * shape[j + 1]
    return strides


def interp_uniform(flat_values: np.ndarray, shape, mins, spacings,
                   points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation on a uniform grid, clamped at the boundary.

    flat_values: C-order flattened node values, length prod(shape).
    points: (B, d) query coordinates.  Returns (B,) values.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != len(shape):
        raise ValueError(f"points must be (B, {len(shape)}), got {pts.shape}")
    shape_arr = np.asarray(shape, dtype=np.int64)
    t = (pts - np.asarray(mins)) / np.asarray(spacings)
    np.clip(t, 0.0, shape_arr - 1.0, out=t)
    lo = t.astype(np.int64)
    np.minimum(lo, shape_arr - 2, out=lo)
    frac = t - lo
    strides = strides_for(shape)
    base = lo @ strides
    d = len(shape)
    acc = np.zeros(pts.shape[0])
    for corner in range(1 << d):
        w = np.ones(pts.shape[0])
        offset = 0
        for j in range(d):
            if (corner >> j) & 1:
                w = w * frac[:, j]
                offset += strides[j]
            else:
                w = w * (1.0 - frac[:, j])
        acc += w * flat_values[base + offset]
    return acc
