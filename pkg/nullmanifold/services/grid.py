"""Axis-aligned, half-open grids over joint space."""
from typing import List, Optional, Sequence, Tuple
import math

import numpy as np

from nullmanifold.config import settings
from nullmanifold.errors import InputError, ParameterError


def resolve_bounds(n: int, lower: Optional[Sequence[float]] = None, upper: Optional[Sequence[float]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Default bounds are the torus [-pi, pi) on every axis."""
    lo = np.full(n, -np.pi) if lower is None else np.asarray(lower, dtype=float).reshape(-1)
    hi = np.full(n, np.pi) if upper is None else np.asarray(upper, dtype=float).reshape(-1)
    if lo.size != n or hi.size != n:
        raise InputError(f"grid bounds need {n} entries")
    if not np.all(lo < hi):
        raise InputError("grid bounds must satisfy lower < upper")
    return lo, hi


def axis_count(lower: float, upper: float, spacing: float) -> int:
    # points lower + s*i with lower + s*i < upper; always at least one
    return max(1, math.ceil((upper - lower) / spacing - 1e-9))


def grid_axes(lower: np.ndarray, upper: np.ndarray, spacing: float) -> List[np.ndarray]:
    if spacing <= 0:
        raise ParameterError("grid spacing must be positive")
    return [lo + spacing * np.arange(axis_count(lo, hi, spacing)) for lo, hi in zip(lower, upper)]


def cell_count(axes: Sequence[np.ndarray]) -> int:
    return int(np.prod([a.size for a in axes], dtype=float))


def check_cell_count(cells: int):
    if cells > settings.MAX_GRID_CELLS:
        raise InputError(f"grid has {cells} cells, limit is {settings.MAX_GRID_CELLS}")


def grid_points(axes: Sequence[np.ndarray]) -> np.ndarray:
    """Row-major list of grid points; the last axis varies fastest."""
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def box_volume(lower: np.ndarray, upper: np.ndarray) -> float:
    return float(np.prod(upper - lower))
