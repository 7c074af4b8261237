"""Structured rectangle grids with a staggered scalar/vector layout.

Scalar unknowns live on the ``(nx+1) x (ny+1)`` nodes of a uniform grid over an
axis-aligned rectangle; gradients and all quadrature live on the ``nx x ny``
cell centers.  The cell value of a nodal function is the average of its four
corner values, and the cell gradient averages the forward differences along
each pair of opposite edges.  Pairing these two operators makes the discrete
integration-by-parts identity exact, which is what the weak forms in
:mod:`plaplace.solver` rely on.

The averaged-difference gradient has a two-dimensional null space on any
connected grid: constants and the global node checkerboard ``(-1)^(i+j)``.
Solvers and eigen estimators pin both directions explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridMismatchError(ValueError):
    """Two grid quantities defined on different grids were combined."""


class ZeroWeightError(ValueError):
    """A weighted average was requested against a weight with zero total mass."""


@dataclass(frozen=True)
class RectDomain:
    """Axis-aligned rectangle with side lengths ``a, b`` and a corner ``origin``.

    The origin lets a computational domain be offset away from weight
    singularities (all the weights in this package are singular at isolated
    points only).
    """

    a: float
    b: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"side lengths must be positive, got a={self.a}, b={self.b}")


@dataclass(frozen=True)
class Grid:
    """Uniform cell partition of a :class:`RectDomain`."""

    domain: RectDomain
    nx: int
    ny: int

    def __post_init__(self) -> None:
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"need nx, ny >= 2, got {self.nx} x {self.ny}")

    @property
    def hx(self) -> float:
        return self.domain.a / self.nx

    @property
    def hy(self) -> float:
        return self.domain.b / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def node_shape(self) -> tuple[int, int]:
        return (self.nx + 1, self.ny + 1)

    @property
    def cell_shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    def node_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinate arrays ``X, Y`` of shape ``(nx+1, ny+1)``."""
        ox, oy = self.domain.origin
        x = ox + self.hx * np.arange(self.nx + 1)
        y = oy + self.hy * np.arange(self.ny + 1)
        return np.meshgrid(x, y, indexing="ij")

    def cell_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinate arrays of shape ``(nx, ny)``."""
        ox, oy = self.domain.origin
        x = ox + self.hx * (np.arange(self.nx) + 0.5)
        y = oy + self.hy * (np.arange(self.ny) + 0.5)
        return np.meshgrid(x, y, indexing="ij")

    def cell_points(self) -> np.ndarray:
        """Cell centers as an ``(nx*ny, 2)`` point array."""
        cx, cy = self.cell_coords()
        return np.column_stack([cx.ravel(), cy.ravel()])


@dataclass
class GridFunction:
    """Node-valued scalar function on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.node_shape:
            raise GridMismatchError(
                f"values shape {self.values.shape} != node shape {self.grid.node_shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function contains non-finite values")

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "GridFunction":
        X, Y = grid.node_coords()
        return cls(grid, fn(X, Y))

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.node_shape))

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())


@dataclass
class VectorField:
    """Cell-valued 2-vector field on a :class:`Grid` (e.g. a discrete gradient)."""

    grid: Grid
    gx: np.ndarray
    gy: np.ndarray

    def __post_init__(self) -> None:
        self.gx = np.asarray(self.gx, dtype=float)
        self.gy = np.asarray(self.gy, dtype=float)
        if self.gx.shape != self.grid.cell_shape or self.gy.shape != self.grid.cell_shape:
            raise GridMismatchError(
                f"component shapes {self.gx.shape}, {self.gy.shape} != cell shape "
                f"{self.grid.cell_shape}"
            )
        if not (np.all(np.isfinite(self.gx)) and np.all(np.isfinite(self.gy))):
            raise ValueError("vector field contains non-finite values")

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        z = np.zeros(grid.cell_shape)
        return cls(grid, z, z.copy())

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.gx, self.gy)


def cell_average(u: GridFunction) -> np.ndarray:
    """Average the four corner node values onto each cell."""
    v = u.values
    return 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[:-1, 1:] + v[1:, 1:])


def gradient(u: GridFunction) -> VectorField:
    """Cell-centered gradient via averaged forward differences.

    Exact for affine functions, and for one-dimensional quadratics the cell
    value equals the derivative at the cell center (midpoint differencing).
    """
    v = u.values
    g = u.grid
    gx = ((v[1:, :-1] - v[:-1, :-1]) + (v[1:, 1:] - v[:-1, 1:])) / (2.0 * g.hx)
    gy = ((v[:-1, 1:] - v[:-1, :-1]) + (v[1:, 1:] - v[1:, :-1])) / (2.0 * g.hy)
    return VectorField(g, gx, gy)


def checkerboard_mode(grid: Grid) -> np.ndarray:
    """Node checkerboard ``(-1)^(i+j)``: the non-constant null mode of `gradient`."""
    i, j = np.meshgrid(np.arange(grid.nx + 1), np.arange(grid.ny + 1), indexing="ij")
    return np.where((i + j) % 2 == 0, 1.0, -1.0)


def cell_weight(v_like, grid: Grid) -> np.ndarray:
    """Sample a scalar weight at the cell centers.

    Accepts a constant, an ``(nx, ny)`` array, a callable ``w(x, y)``, or any
    object with an ``eval(points)`` method (``plaplace.weights.ScalarWeightField``).
    """
    if np.isscalar(v_like):
        return np.full(grid.cell_shape, float(v_like))
    if isinstance(v_like, np.ndarray):
        if v_like.shape != grid.cell_shape:
            raise GridMismatchError(
                f"weight array shape {v_like.shape} != cell shape {grid.cell_shape}"
            )
        return np.asarray(v_like, dtype=float)
    if hasattr(v_like, "eval"):
        vals = v_like.eval(grid.cell_points())
        return np.asarray(vals, dtype=float).reshape(grid.cell_shape)
    if callable(v_like):
        cx, cy = grid.cell_coords()
        return np.asarray(v_like(cx, cy), dtype=float)
    raise TypeError(f"cannot interpret {type(v_like)!r} as a cell weight")


def weighted_mean(f: GridFunction, v_like) -> float:
    """Weighted average ``(1/v(E)) * integral of f v`` by midpoint cell quadrature."""
    vc = cell_weight(v_like, f.grid)
    mass = float(np.sum(vc))
    if mass <= 0.0:
        raise ZeroWeightError("weight has zero total mass over the grid")
    return float(np.sum(cell_average(f) * vc) / mass)


def project_mean_zero(f: GridFunction, v_like) -> GridFunction:
    """Subtract the weighted mean; leaves the discrete gradient unchanged."""
    return GridFunction(f.grid, f.values - weighted_mean(f, v_like))


def lp_norm(f: GridFunction, v_like, p: float) -> float:
    """Weighted p-norm ``(sum |f_c|^p v_c dx)^(1/p)`` over cell averages."""
    if p < 1:
        raise ValueError(f"need p >= 1, got {p}")
    vc = cell_weight(v_like, f.grid)
    dens = np.abs(cell_average(f)) ** p * vc
    return float((f.grid.cell_area * np.sum(dens)) ** (1.0 / p))


def vector_lp_norm(g: VectorField, w_like, p: float) -> float:
    """Scalar-weighted p-norm ``(sum |g_c|^p w_c dx)^(1/p)`` of a cell field."""
    if p < 1:
        raise ValueError(f"need p >= 1, got {p}")
    wc = cell_weight(w_like, g.grid)
    dens = g.magnitude() ** p * wc
    return float((g.grid.cell_area * np.sum(dens)) ** (1.0 / p))
