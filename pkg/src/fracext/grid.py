"""Graded tensor grids on the truncated half-space and quadrature on them.

Points are ``X = (y, x)`` with ``y`` in an ``n``-dimensional box of side ``L_y``
centred at the origin and ``0 <= x <= L_x``. Each y-axis is either periodic
(``N_y`` nodes, spacing ``L_y/N_y``) or closed (``N_y`` nodes including both
ends, spacing ``L_y/(N_y-1)``). The x-nodes are graded towards the degenerate
boundary, ``x_j = L_x (j/M)**gamma``.

Arrays of nodal values are indexed ``[i_1, ..., i_n, j]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DataError, DomainError, ShapeError
from .weights import PowerLaw, Weight

UNIT_WEIGHT = PowerLaw(0.0)


@dataclass(frozen=True)
class HalfSpaceGrid:
    n: int
    L_y: float
    N_y: int
    L_x: float
    M: int
    gamma: float = 1.0
    periodic: tuple = ()

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ArgumentError(f"n must be 1 or 2, got {self.n}")
        if not (self.L_y > 0 and self.L_x > 0):
            raise ArgumentError("box lengths must be positive")
        if self.N_y < 8 or self.M < 8:
            raise ArgumentError("need N_y >= 8 and M >= 8")
        if self.gamma < 1:
            raise ArgumentError("gamma must be >= 1")
        per = tuple(bool(p) for p in self.periodic) or (True,) * self.n
        if len(per) != self.n:
            raise ArgumentError("periodic flags must have one entry per y-axis")
        object.__setattr__(self, "periodic", per)

    @classmethod
    def from_dict(cls, d: dict) -> "HalfSpaceGrid":
        keys = {"n", "L_y", "N_y", "L_x", "M", "gamma", "periodic"}
        extra = set(d) - keys
        if extra:
            raise DataError(f"unknown grid keys {sorted(extra)}")
        return cls(
            n=int(d["n"]),
            L_y=float(d["L_y"]),
            N_y=int(d["N_y"]),
            L_x=float(d["L_x"]),
            M=int(d["M"]),
            gamma=float(d.get("gamma", 1.0)),
            periodic=tuple(d.get("periodic", ())),
        )

    def to_dict(self) -> dict:
        d = {"n": self.n, "L_y": self.L_y, "N_y": self.N_y, "L_x": self.L_x, "M": self.M, "gamma": self.gamma}
        if not all(self.periodic):
            d["periodic"] = list(self.periodic)
        return d

    def refined(self, factor: int = 2) -> "HalfSpaceGrid":
        ny = self.N_y * factor if all(self.periodic) else (self.N_y - 1) * factor + 1
        return HalfSpaceGrid(self.n, self.L_y, ny, self.L_x, self.M * factor, self.gamma, self.periodic)

    def coarsened(self, factor: int) -> "HalfSpaceGrid":
        ny = self.N_y // factor if all(self.periodic) else (self.N_y - 1) // factor + 1
        return HalfSpaceGrid(self.n, self.L_y, ny, self.L_x, self.M // factor, self.gamma, self.periodic)

    # -- coordinates -------------------------------------------------------

    def h(self, axis: int = 0) -> float:
        if self.periodic[axis]:
            return self.L_y / self.N_y
        return self.L_y / (self.N_y - 1)

    def y_nodes(self, axis: int = 0) -> np.ndarray:
        return -0.5 * self.L_y + self.h(axis) * np.arange(self.N_y)

    @cached_property
    def x_nodes(self) -> np.ndarray:
        x = self.L_x * (np.arange(self.M + 1) / self.M) ** self.gamma
        x[0] = 0.0
        x[-1] = self.L_x
        return x

    @property
    def shape(self) -> tuple:
        return (self.N_y,) * self.n + (self.M + 1,)

    @property
    def boundary_shape(self) -> tuple:
        return (self.N_y,) * self.n

    @cached_property
    def mesh(self) -> tuple:
        axes = [self.y_nodes(a) for a in range(self.n)] + [self.x_nodes]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        """``|X|`` at every node."""
        return np.sqrt(sum(c**2 for c in self.mesh))

    @property
    def inscribed_radius(self) -> float:
        """Largest R with the half-ball B_R^+ inside the truncated box."""
        return min(0.5 * self.L_y, self.L_x)

    @property
    def diagonal(self) -> float:
        return math.sqrt(self.n * (0.5 * self.L_y) ** 2 + self.L_x**2)

    # -- cells -------------------------------------------------------------

    def y_cell_centers(self, axis: int = 0) -> np.ndarray:
        y = self.y_nodes(axis)
        h = self.h(axis)
        if self.periodic[axis]:
            return y + 0.5 * h
        return y[:-1] + 0.5 * h

    @cached_property
    def cell_radius(self) -> np.ndarray:
        axes = [self.y_cell_centers(a) for a in range(self.n)]
        xc = 0.5 * (self.x_nodes[:-1] + self.x_nodes[1:])
        c = np.meshgrid(*axes, xc, indexing="ij")
        return np.sqrt(sum(ci**2 for ci in c))

    @property
    def y_cell_measure(self) -> float:
        return float(np.prod([self.h(a) for a in range(self.n)]))

    def cell_average(self, values: np.ndarray) -> np.ndarray:
        """Mean of the 2**(n+1) corner values of every cell."""
        a = np.asarray(values, dtype=float)
        for axis in range(self.n):
            if self.periodic[axis]:
                a = 0.5 * (a + np.roll(a, -1, axis=axis))
            else:
                lo = [slice(None)] * a.ndim
                hi = [slice(None)] * a.ndim
                lo[axis] = slice(None, -1)
                hi[axis] = slice(1, None)
                a = 0.5 * (a[tuple(lo)] + a[tuple(hi)])
        return 0.5 * (a[..., :-1] + a[..., 1:])

    def boundary_weights(self) -> np.ndarray:
        """Quadrature weights for the y-box at x = 0 (rectangle/trapezoid)."""
        w = np.ones(self.boundary_shape)
        for axis in range(self.n):
            wa = np.full(self.N_y, self.h(axis))
            if not self.periodic[axis]:
                wa[0] = wa[-1] = 0.5 * self.h(axis)
            shape = [1] * self.n
            shape[axis] = self.N_y
            w = w * wa.reshape(shape)
        return w


@dataclass(frozen=True)
class GridFunction:
    """Nodal values on a HalfSpaceGrid; immutable."""

    grid: HalfSpaceGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != self.grid.shape:
            raise ShapeError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("grid function has non-finite entries")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: HalfSpaceGrid, fn) -> "GridFunction":
        return cls(grid, np.broadcast_to(fn(*grid.mesh), grid.shape))

    @property
    def trace(self) -> np.ndarray:
        """Values on the boundary x = 0."""
        return self.values[..., 0]

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values)

    def __add__(self, other):
        o = other.values if isinstance(other, GridFunction) else other
        return self.with_values(self.values + o)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__


def _values(F, grid=None) -> tuple[HalfSpaceGrid, np.ndarray]:
    if isinstance(F, GridFunction):
        return F.grid, F.values
    if grid is None:
        raise ArgumentError("a grid is required for raw arrays")
    v = np.asarray(F, dtype=float)
    if v.shape != grid.shape:
        raise ShapeError(f"shape {v.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(v)):
        raise DataError("non-finite values")
    return grid, v


def integrate_bulk(F, w: Weight | None = None, R: float | None = None, grid: HalfSpaceGrid | None = None) -> float:
    """Integral of ``mu * F`` over the box, or over the cells centred in B_R^+.

    Cell contributions are ``(exact int_cell mu dx) * (y-cell measure) *
    (corner average of F)``.
    """
    grid, v = _values(F, grid)
    if not np.all(np.isfinite(v)):
        raise DataError("non-finite values in integrand")
    w = UNIT_WEIGHT if w is None else w
    cells = grid.cell_average(v) * w.cell_integrals(grid.x_nodes) * grid.y_cell_measure
    if R is not None:
        if R > grid.diagonal * (1 + 1e-12):
            raise ArgumentError(f"radius {R} exceeds the box diagonal {grid.diagonal}")
        cells = np.where(grid.cell_radius < R, cells, 0.0)
    return float(np.sum(cells))


def integrate_boundary(f_vals, grid: HalfSpaceGrid) -> float:
    """Rectangle rule on the periodic y-box (trapezoid along closed axes)."""
    f = np.asarray(f_vals, dtype=float)
    if f.shape != grid.boundary_shape:
        raise ShapeError(f"boundary array shape {f.shape} != {grid.boundary_shape}")
    return float(np.sum(f * grid.boundary_weights()))


def _nonnegative(h) -> tuple[HalfSpaceGrid, np.ndarray]:
    grid, v = _values(h)
    if np.any(v < 0):
        raise DomainError("the annulus bound requires a nonnegative function")
    return grid, v


def annulus_profile(h: GridFunction, rho: float) -> float:
    """``eta(rho)``: the integral of ``h`` over B_rho^+ (unit weight)."""
    grid, v = _nonnegative(h)
    if rho < 0:
        raise ArgumentError("rho must be nonnegative")
    if rho == 0:
        return 0.0
    return integrate_bulk(v, None, rho, grid=grid)


@dataclass(frozen=True)
class AnnulusBound:
    lhs: float
    rhs: float
    holds: bool


def verify_annulus_bound(h: GridFunction, R: float, samples: int = 513, tol_quad: float = 1e-2) -> AnnulusBound:
    """Compare ``int_{A(sqrt R, R)} h/|X|^2`` with ``2 int t^-3 eta(t) dt + eta(R)/R^2``."""
    grid, v = _nonnegative(h)
    if R < 4:
        raise ArgumentError("R must be >= 4")
    if R > grid.inscribed_radius * (1 + 1e-12):
        raise ArgumentError(f"R = {R} exceeds the inscribed radius {grid.inscribed_radius}")
    samples = max(int(samples), 64)
    mass = (grid.cell_average(v) * UNIT_WEIGHT.cell_integrals(grid.x_nodes) * grid.y_cell_measure).ravel()
    r = grid.cell_radius.ravel()
    r0 = math.sqrt(R)
    ring = (r >= r0) & (r <= R)
    lhs = float(np.sum(mass[ring] / r[ring] ** 2))
    order = np.argsort(r, kind="stable")
    r_sorted = r[order]
    cum = np.concatenate([[0.0], np.cumsum(mass[order])])
    t = np.linspace(r0, R, samples)
    eta = cum[np.searchsorted(r_sorted, t, side="left")]
    rhs = float(2.0 * np.trapezoid(eta * t**-3.0, t) + eta[-1] / R**2)
    return AnnulusBound(lhs=lhs, rhs=rhs, holds=bool(lhs <= rhs * (1.0 + tol_quad)))


def closed_difference(v: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Centred differences with one-sided second-order ends.

    The end stencils are written in differences so that a field constant
    along ``axis`` gives exact zeros.
    """
    v = np.moveaxis(np.asarray(v, dtype=float), axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    out[0] = (4.0 * (v[1] - v[0]) - (v[2] - v[0])) / (2.0 * h)
    out[-1] = -(4.0 * (v[-2] - v[-1]) - (v[-3] - v[-1])) / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def gradient(F, grid: HalfSpaceGrid | None = None) -> np.ndarray:
    """Nodal gradient, shape ``(n+1,) + grid.shape``; last component is d/dx.

    Centred differences in y (wrapping on periodic axes, one-sided second
    order at the ends of closed axes); three-point nonuniform stencils in x.
    """
    grid, v = _values(F, grid)
    # constants then differentiate to exact zeros on graded stencils
    v = v - v.flat[0]
    out = np.empty((grid.n + 1,) + grid.shape)
    for axis in range(grid.n):
        h = grid.h(axis)
        if grid.periodic[axis]:
            out[axis] = (np.roll(v, -1, axis=axis) - np.roll(v, 1, axis=axis)) / (2.0 * h)
        else:
            out[axis] = closed_difference(v, h, axis)
    out[grid.n] = np.gradient(v, grid.x_nodes, axis=grid.n, edge_order=2)
    return out


def _header(n: int, last: str) -> list:
    return (["y1"] if n == 1 else ["y1", "y2"]) + ["x", last]


def write_csv(F: GridFunction, path) -> None:
    grid = F.grid
    cols = [c.ravel() for c in grid.mesh] + [F.values.ravel()]
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(_header(grid.n, "value"))
        for row in zip(*cols):
            wr.writerow([format(float(c), ".17g") for c in row])


def read_csv(path, grid: HalfSpaceGrid) -> GridFunction:
    with Path(path).open(newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header != _header(grid.n, "value"):
            raise DataError(f"{path}: unexpected header {header}")
        rows = np.array([[float(c) for c in r] for r in rd if r])
    if rows.shape != (int(np.prod(grid.shape)), grid.n + 2):
        raise ShapeError(f"{path}: {rows.shape[0]} rows do not match the grid")
    for k, c in enumerate(grid.mesh):
        if not np.allclose(rows[:, k], c.ravel(), rtol=0, atol=1e-9 * max(1.0, grid.L_y, grid.L_x)):
            raise DataError(f"{path}: coordinates do not match the grid")
    return GridFunction(grid, rows[:, -1].reshape(grid.shape))
