"""Cell-centered grids on boxes that contain the origin.

Nodes sit at cell centers, never on the boundary and never at the origin;
with an even cell count per axis and the origin inside the box the closest
node is at distance >= h/2 from 0, which keeps the inverse-power potential
finite on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = ["Grid", "build_grid"]

_MAX_DENSE_NODES = 4096
_MAX_CELLS_PER_AXIS_2D = 48


@dataclass(frozen=True)
class Grid:
    dim: int
    bounds: tuple  # ((a1, b1), ...) one pair per axis
    h: float
    nodes: np.ndarray  # (n,) in 1d, (n, dim) otherwise

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def radii(self) -> np.ndarray:
        if self.dim == 1:
            return np.abs(self.nodes)
        return np.sqrt(np.sum(self.nodes**2, axis=1))

    @property
    def half_width(self) -> float:
        """Largest distance from the origin to a boundary face."""
        return max(max(abs(a), abs(b)) for a, b in self.bounds)


def _axis_centers(a: float, b: float, h: float, axis: int) -> np.ndarray:
    extent = b - a
    if extent <= 0:
        raise ConfigError(f"axis {axis}: empty interval ({a}, {b})")
    n = int(round(extent / h))
    if n < 2 or abs(n * h - extent) > 1e-9 * extent:
        raise ConfigError(
            f"axis {axis}: spacing h={h} does not tile ({a}, {b}) into >= 2 cells"
        )
    if n % 2 != 0:
        raise ConfigError(
            f"axis {axis}: cell count {n} is odd; an even count is required so "
            f"that no node can land on the origin"
        )
    return a + (np.arange(n) + 0.5) * h


def build_grid(domain, h: float) -> Grid:
    """Build the cell-centered grid for an interval (a, b) or a box of them.

    ``domain`` is either a pair (a, b) or a sequence of such pairs, one per
    axis (at most two axes for dense assembly).  The box must contain the
    origin strictly, h must tile every axis into an even number of cells, and
    the resulting nodes must keep distance >= h/2 from the origin.
    """
    if h is None or not np.isfinite(h) or h <= 0:
        raise ConfigError(f"grid spacing must be positive and finite, got {h}")
    dom = np.asarray(domain, dtype=float)
    if dom.shape == (2,):
        pairs = [(dom[0], dom[1])]
    elif dom.ndim == 2 and dom.shape[1] == 2:
        pairs = [tuple(p) for p in dom]
    else:
        raise ConfigError(f"domain must be (a, b) or a list of such pairs, got {domain}")
    dim = len(pairs)
    if dim > 2:
        raise ConfigError("dense assembly supports 1 or 2 axes only")
    for ax, (a, b) in enumerate(pairs):
        if not (np.isfinite(a) and np.isfinite(b)):
            raise ConfigError(f"axis {ax}: domain must be bounded, got ({a}, {b})")
        if not (a < 0.0 < b):
            raise ConfigError(
                f"axis {ax}: the domain must contain the origin strictly, got ({a}, {b})"
            )

    axes = [_axis_centers(a, b, h, ax) for ax, (a, b) in enumerate(pairs)]
    if dim == 1:
        nodes = axes[0]
    else:
        for ax, cs in enumerate(axes):
            if len(cs) > _MAX_CELLS_PER_AXIS_2D:
                raise ConfigError(
                    f"axis {ax}: {len(cs)} cells exceeds the 2-d limit of "
                    f"{_MAX_CELLS_PER_AXIS_2D} per axis"
                )
        xs, ys = np.meshgrid(axes[0], axes[1], indexing="ij")
        nodes = np.column_stack([xs.ravel(), ys.ravel()])

    if nodes.shape[0] > _MAX_DENSE_NODES:
        raise ConfigError(
            f"{nodes.shape[0]} nodes exceeds the dense-assembly limit of {_MAX_DENSE_NODES}"
        )
    radii = np.abs(nodes) if dim == 1 else np.sqrt(np.sum(nodes**2, axis=1))
    if radii.min() < 0.5 * h * (1.0 - 1e-12):
        raise ConfigError(
            "a grid node falls on (or nearly on) the origin; shift the domain or "
            "change h so cell centers avoid 0"
        )
    return Grid(dim=dim, bounds=tuple(pairs), h=float(h), nodes=nodes)
