"""Grid helpers: uniform s-grids, finite-difference derivatives, cumulative quadrature."""

from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import GridMismatch


def uniform_grid(points, start=0.0, stop=1.0):
    if points < 3:
        raise ValueError(f"grid needs at least 3 points, got {points}")
    return np.linspace(start, stop, int(points))


def as_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise GridMismatch("grid must be a 1-d array with at least two points")
    if np.any(np.diff(grid) <= 0):
        raise GridMismatch("grid must be strictly ascending")
    return grid


def is_uniform(grid, rtol=1e-9):
    d = np.diff(grid)
    return bool(np.all(np.abs(d - d[0]) <= rtol * abs(d[0])))


def same_grid(a, b):
    return a.shape == b.shape and bool(np.allclose(a, b, rtol=0, atol=1e-14))


EDGE_POINTS = 8


@lru_cache(maxsize=None)
def _stencil(offsets):
    # first-derivative weights for unit spacing; solves the Taylor moment system
    offs = np.array(offsets, dtype=float)
    k = len(offs)
    A = np.vander(offs, k, increasing=True).T
    rhs = np.zeros(k)
    rhs[1] = 1.0
    return np.linalg.solve(A, rhs)


def derivative(values, grid):
    """d/ds of ``values`` sampled on ``grid`` along axis 0.

    Uniform grids with at least 6 points use the 5-point central stencil in the
    interior and ``EDGE_POINTS``-point one-sided stencils at the two outermost
    points per end. Shorter or non-uniform grids fall back to second-order
    ``np.gradient``.
    """
    values = np.asarray(values)
    grid = np.asarray(grid, dtype=float)
    m = values.shape[0]
    if m != grid.size:
        raise GridMismatch(f"{m} samples on a grid of {grid.size} points")
    e = EDGE_POINTS
    if m < e or not is_uniform(grid):
        return np.gradient(values, grid, axis=0, edge_order=2 if m >= 3 else 1)
    h = grid[1] - grid[0]
    out = np.empty_like(values, dtype=np.result_type(values, float))
    out[2:-2] = (values[:-4] - 8 * values[1:-3] + 8 * values[3:-1] - values[4:]) / (12 * h)
    for j in (0, 1):
        w = _stencil(tuple(range(-j, e - j)))
        out[j] = np.tensordot(w, values[:e], axes=(0, 0)) / h
        jj = m - 1 - j
        w = _stencil(tuple(range(-(e - 1 - j), j + 1)))
        out[jj] = np.tensordot(w, values[m - e:], axes=(0, 0)) / h
    return out


def cumtrapz(values, grid):
    """Cumulative trapezoid integral from ``grid[0]`` along axis 0, starting at 0."""
    return cumulative_trapezoid(values, grid, axis=0, initial=0)


def nearest_index(grid, s):
    s = np.asarray(s, dtype=float)
    idx = np.searchsorted(grid, s)
    idx = np.clip(idx, 1, grid.size - 1)
    left = grid[idx - 1]
    right = grid[idx]
    idx = np.where(np.abs(s - left) <= np.abs(right - s), idx - 1, idx)
    return idx
