"""Frequency grid and Taylor-augmented steering dictionaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .array_model import ArrayGeometry, steering_derivative, steering_vector


class ConfigurationError(ValueError):
    pass


class DegenerateDictionaryError(ValueError):
    def __init__(self, column: int):
        super().__init__(f"dictionary column {column} is identically zero")
        self.column = column


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Uniform grid ``v_l = -1 + l*delta`` covering ``[-1, 1)``."""

    points: np.ndarray
    grid_size: float

    @property
    def size(self) -> int:
        return self.points.size

    def nearest(self, u) -> np.ndarray:
        """Index of the closest grid point (ties go to the lower point)."""
        u = np.asarray(u, dtype=float)
        idx = np.floor((u + 1.0) / self.grid_size + 0.5 - 1e-12).astype(int)
        return np.clip(idx, 0, self.size - 1)


def build_grid(grid_size: float) -> FrequencyGrid:
    if not 0 < grid_size <= 0.5:
        raise ConfigurationError(f"grid size must lie in (0, 0.5], got {grid_size}")
    count = 2.0 / grid_size
    L = int(round(count))
    if abs(count - L) > 1e-9 * max(1.0, count):
        raise ConfigurationError(f"grid size {grid_size} does not divide 2")
    points = -1.0 + grid_size * np.arange(L)
    points.setflags(write=False)
    return FrequencyGrid(points, float(grid_size))


@dataclass(frozen=True, eq=False)
class DictionarySet:
    """Dictionary blocks ``A``, ``A'`` and ``A''/2`` over a grid.

    ``block`` is their horizontal concatenation in that order, truncated to
    the Taylor order it was built with. ``first``/``second_halved`` are
    ``None`` when not built.
    """

    base: np.ndarray
    first: np.ndarray | None
    second_halved: np.ndarray | None
    block: np.ndarray
    grid: FrequencyGrid
    taylor_order: int

    @property
    def num_rows(self) -> int:
        return self.base.shape[0]

    @property
    def num_grid(self) -> int:
        return self.base.shape[1]


def build_dictionary(geometry: ArrayGeometry, grid: FrequencyGrid, taylor_order: int = 2) -> DictionarySet:
    if taylor_order not in (0, 1, 2):
        raise ConfigurationError(f"taylor_order must be 0, 1 or 2, got {taylor_order}")
    base = steering_vector(geometry, grid.points)
    first = steering_derivative(geometry, grid.points, 1) if taylor_order >= 1 else None
    second = 0.5 * steering_derivative(geometry, grid.points, 2) if taylor_order >= 2 else None
    return _assemble(base, first, second, grid, taylor_order)


def _assemble(base, first, second, grid, taylor_order) -> DictionarySet:
    blocks = [b for b in (base, first, second) if b is not None]
    block = np.hstack(blocks)
    for arr in (base, first, second, block):
        if arr is not None:
            arr.setflags(write=False)
    return DictionarySet(base, first, second, block, grid, taylor_order)


def neighbor_dictionary(geometry: ArrayGeometry, grid: FrequencyGrid) -> np.ndarray:
    """``[A(v), A(v + delta/2)]``: each grid column paired with its half-shifted neighbour."""
    return np.hstack([steering_vector(geometry, grid.points),
                      steering_vector(geometry, grid.points + 0.5 * grid.grid_size)])


def normalize_columns(matrix) -> tuple[np.ndarray, np.ndarray]:
    """Scale each column to unit Euclidean norm.

    Returns the normalised matrix and the scales, so that
    ``matrix[:, p] == scales[p] * normalized[:, p]``.
    """
    matrix = np.asarray(matrix)
    scales = np.linalg.norm(matrix, axis=0)
    zero = np.flatnonzero(scales == 0)
    if zero.size:
        raise DegenerateDictionaryError(int(zero[0]))
    return matrix / scales, scales


def taylor_residual(geometry: ArrayGeometry, grid: FrequencyGrid, u: float, order: int = 2) -> float:
    """Norm of the error of the Taylor model of ``a(u)`` around the nearest grid point."""
    l = int(grid.nearest(u))
    v = grid.points[l]
    p = u - v
    approx = steering_vector(geometry, v)
    if order >= 1:
        approx = approx + p * steering_derivative(geometry, v, 1)
    if order >= 2:
        approx = approx + 0.5 * p * p * steering_derivative(geometry, v, 2)
    return float(np.linalg.norm(steering_vector(geometry, u) - approx))
