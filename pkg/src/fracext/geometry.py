"""Level-set geometry of x-slices of u and the integral audits built on it.

On a slice ``x = const`` with ``n = 2`` the level sets of ``u(., x)`` are
curves; at regular points (``|grad_y u| > eps_grad``) their curvature is
``K = |div_y(grad_y u / |grad_y u|)|`` and the tangential derivative of
``|grad_y u|`` is ``t . Hess_y u . grad_y u / |grad_y u|`` with ``t`` the unit
tangent. All y-derivatives are the grid's centred differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ShapeError
from .grid import GridFunction, HalfSpaceGrid, closed_difference, gradient, integrate_bulk
from .weights import Weight


def _y_grad(v: np.ndarray, grid: HalfSpaceGrid) -> np.ndarray:
    """Centred y-derivatives of a field of shape ``grid.shape``."""
    return gradient(v, grid)[: grid.n]


def default_eps(u: GridFunction) -> float:
    g = _y_grad(u.values, u.grid)
    return 1e-6 * float(np.max(np.sqrt(np.sum(g**2, axis=0))))


@dataclass(frozen=True)
class RegularMask:
    mask: np.ndarray
    eps_grad: float

    @property
    def empty(self) -> bool:
        return not bool(np.any(self.mask))


def regular_mask(u: GridFunction, x_index: int | None = None, eps_grad: float | None = None) -> RegularMask:
    """Nodes with ``|grad_y u| > eps_grad``, on one slice or on the whole grid."""
    eps = default_eps(u) if eps_grad is None else float(eps_grad)
    if eps < 0:
        raise ArgumentError("eps_grad must be nonnegative")
    g = _y_grad(u.values, u.grid)
    m = np.sqrt(np.sum(g**2, axis=0)) > eps
    if x_index is not None:
        m = m[..., x_index]
    return RegularMask(m, eps)


def _slice_fields(u: GridFunction, mask: RegularMask, x_index: int | None):
    grid = u.grid
    if grid.n != 2:
        return None
    g = _y_grad(u.values, grid)
    full_mask = mask.mask
    if x_index is not None:
        g = g[..., x_index : x_index + 1]
        if full_mask.ndim == grid.n:
            full_mask = full_mask[..., None]
    elif full_mask.shape != grid.shape:
        raise ShapeError("a whole-grid mask is needed when no slice is selected")
    norm = np.sqrt(np.sum(g**2, axis=0))
    safe = np.where(full_mask, norm, 1.0)
    nrm = np.where(full_mask, g / safe, 0.0)
    return g, norm, nrm, full_mask


def _dy(field: np.ndarray, grid: HalfSpaceGrid, axis: int) -> np.ndarray:
    h = grid.h(axis)
    if grid.periodic[axis]:
        return (np.roll(field, -1, axis=axis) - np.roll(field, 1, axis=axis)) / (2.0 * h)
    return closed_difference(field, h, axis)


def _curvature(u: GridFunction, mask: RegularMask, x_index: int | None) -> np.ndarray:
    data = _slice_fields(u, mask, x_index)
    if data is None:
        return np.zeros(mask.mask.shape)
    g, norm, nrm, m = data
    # the unit normal of unmasked nodes is replaced by the direction of the
    # raw gradient where it exists so that differences next to the mask edge
    # are not polluted by artificial zeros
    raw = np.where(norm > 0, g / np.where(norm > 0, norm, 1.0), 0.0)
    div = _dy(raw[0], u.grid, 0) + _dy(raw[1], u.grid, 1)
    K = np.where(m, np.abs(div), 0.0)
    return K[..., 0] if x_index is not None else K


def total_curvature(u: GridFunction, x_index: int, mask: RegularMask | None = None) -> np.ndarray:
    """``K`` on slice ``x_index`` (zero off the mask; identically zero for n = 1)."""
    mask = regular_mask(u, x_index) if mask is None else mask
    return _curvature(u, mask, x_index)


def _tangential(u: GridFunction, mask: RegularMask, x_index: int | None) -> np.ndarray:
    data = _slice_fields(u, mask, x_index)
    if data is None:
        return np.zeros(mask.mask.shape)
    g, norm, nrm, m = data
    grid = u.grid
    H11 = _dy(g[0], grid, 0)
    H22 = _dy(g[1], grid, 1)
    H12 = 0.5 * (_dy(g[0], grid, 1) + _dy(g[1], grid, 0))
    t1, t2 = -nrm[1], nrm[0]
    n1, n2 = nrm
    val = t1 * (H11 * n1 + H12 * n2) + t2 * (H12 * n1 + H22 * n2)
    T = np.where(m, np.abs(val), 0.0)
    return T[..., 0] if x_index is not None else T


def tangential_gradient_norm(u: GridFunction, x_index: int, mask: RegularMask | None = None) -> np.ndarray:
    """``|grad_L |grad_y u||`` on slice ``x_index`` via the Hessian along the level line."""
    mask = regular_mask(u, x_index) if mask is None else mask
    return _tangential(u, mask, x_index)


# -- test functions ----------------------------------------------------------


def _check_radius(R: float, grid: HalfSpaceGrid, lower: float = 0.0) -> None:
    if R < lower:
        raise ArgumentError(f"R must be >= {lower}")
    if R > grid.inscribed_radius * (1 + 1e-12):
        raise ArgumentError(f"R = {R} exceeds the inscribed radius {grid.inscribed_radius}")


def capacity_phi(R: float, grid: HalfSpaceGrid) -> GridFunction:
    """Logarithmic cutoff: ``log R`` inside ``sqrt R``, ``2 log(R/|X|)`` up to ``R``, then 0."""
    _check_radius(R, grid, 4.0)
    r = grid.radius
    inner = math.sqrt(R)
    with np.errstate(divide="ignore"):
        mid = 2.0 * np.log(R / np.maximum(r, 1e-300))
    phi = np.where(r <= inner, math.log(R), np.where(r < R, mid, 0.0))
    return GridFunction(grid, phi)


def bump(R: float, grid: HalfSpaceGrid) -> GridFunction:
    """Smooth radial bump ``(1 - |X|^2/R^2)_+^2``."""
    _check_radius(R, grid, 0.0)
    r = grid.radius
    return GridFunction(grid, np.clip(1.0 - (r / R) ** 2, 0.0, None) ** 2)


def capacity_slope_constant(R: float, grid: HalfSpaceGrid) -> float:
    """Largest ``|phi(a) - phi(b)| * min(|a|,|b|) / |a - b|`` over grid edges in the annulus.

    The middle branch has ``|grad phi| = 2/|X|``, so this difference quotient
    is bounded by 2.
    """
    phi = capacity_phi(R, grid).values
    r = grid.radius
    lo, hi = math.sqrt(R), R
    worst = 0.0
    for axis in range(grid.n + 1):
        if axis < grid.n:
            step = grid.h(axis)
            sl_a = [slice(None)] * (grid.n + 1)
            sl_b = [slice(None)] * (grid.n + 1)
            sl_a[axis] = slice(None, -1)
            sl_b[axis] = slice(1, None)
            dist = step
        else:
            sl_a = [slice(None)] * grid.n + [slice(None, -1)]
            sl_b = [slice(None)] * grid.n + [slice(1, None)]
            dist = np.diff(grid.x_nodes)
        pa, pb = phi[tuple(sl_a)], phi[tuple(sl_b)]
        ra, rb = r[tuple(sl_a)], r[tuple(sl_b)]
        inside = (np.minimum(ra, rb) >= lo) & (np.maximum(ra, rb) <= hi)
        if np.any(inside):
            q = np.abs(pa - pb) * np.minimum(ra, rb) / dist
            worst = max(worst, float(np.max(q[inside])))
    return worst


# -- audits ------------------------------------------------------------------


@dataclass(frozen=True)
class PoincareBudget:
    lhs_curv: float
    lhs_tan: float
    rhs: float
    holds: bool
    slack: float
    eps_grad: float
    sensitivity: float
    lhs_curv_fine: float
    lhs_tan_fine: float

    def to_dict(self) -> dict:
        return {
            "lhs_curv": self.lhs_curv,
            "lhs_tan": self.lhs_tan,
            "rhs": self.rhs,
            "holds": self.holds,
            "slack": self.slack,
            "eps_grad": self.eps_grad,
            "sensitivity": self.sensitivity,
            "eps_grad_tenth": {"lhs_curv": self.lhs_curv_fine, "lhs_tan": self.lhs_tan_fine},
        }


GEOMETRY_TOL = 1e-6


def _lhs(u: GridFunction, w: Weight, phi2: np.ndarray, gy2: np.ndarray, eps: float) -> tuple[float, float]:
    mask = regular_mask(u, None, eps)
    K = _curvature(u, mask, None)
    T = _tangential(u, mask, None)
    curv = integrate_bulk(phi2 * K**2 * gy2, w, grid=u.grid)
    tan = integrate_bulk(phi2 * T**2, w, grid=u.grid)
    return curv, tan


def poincare_audit(u: GridFunction, w: Weight, phi: GridFunction, eps_grad: float | None = None) -> PoincareBudget:
    """Weighted curvature/tangential budget of ``u`` against the test function ``phi``.

    ``sensitivity`` is the change of the left-hand side when ``eps_grad`` is
    divided by ten, relative to ``rhs``.
    """
    grid = u.grid
    if phi.grid != grid:
        raise ArgumentError("u and phi live on different grids")
    outside = grid.radius >= grid.inscribed_radius * (1 - 1e-12)
    if np.any(phi.values[outside] != 0.0):
        raise ArgumentError("phi must vanish outside a half-ball inside the box")
    eps = default_eps(u) if eps_grad is None else float(eps_grad)
    gy = _y_grad(u.values, grid)
    gy2 = np.sum(gy**2, axis=0)
    phi2 = phi.values**2
    dphi2 = np.sum(gradient(phi) ** 2, axis=0)
    rhs = integrate_bulk(gy2 * dphi2, w, grid=grid)
    curv, tan = _lhs(u, w, phi2, gy2, eps)
    curv_f, tan_f = _lhs(u, w, phi2, gy2, eps / 10.0)
    slack = rhs - curv - tan
    sens = abs((curv_f + tan_f) - (curv + tan)) / rhs if rhs > 0 else 0.0
    return PoincareBudget(
        curv, tan, rhs, bool(slack >= -GEOMETRY_TOL * rhs), slack, eps, sens, curv_f, tan_f
    )


@dataclass(frozen=True)
class SymmetryFit:
    omega: np.ndarray | None
    residual: float
    profile_rms: float

    @property
    def omega_defined(self) -> bool:
        return self.omega is not None

    def to_dict(self) -> dict:
        return {
            "omega": None if self.omega is None else [float(c) for c in self.omega],
            "omega_status": "ok" if self.omega is not None else "undefined",
            "residual": self.residual,
            "profile_rms": self.profile_rms,
        }


def _profile_misfit(u: GridFunction, omega: np.ndarray) -> float:
    grid = u.grid
    v = u.values
    span = float(np.max(v) - np.min(v))
    if span == 0.0:
        return 0.0
    s = sum(omega[a] * grid.mesh[a] for a in range(grid.n))
    h = min(grid.h(a) for a in range(grid.n))
    bins = np.rint((s - s.min()) / h).astype(np.int64)
    misfit = np.empty_like(v)
    for j in range(v.shape[-1]):
        b = bins[..., j].ravel()
        vals = v[..., j].ravel()
        sums = np.bincount(b, weights=vals)
        counts = np.bincount(b)
        profile = sums / np.maximum(counts, 1)
        misfit[..., j] = (vals - profile[b]).reshape(v.shape[:-1])
    return float(np.sqrt(np.mean(misfit**2)) / span)


def symmetry_fit(u: GridFunction, w: Weight | None = None) -> SymmetryFit:
    """Best single direction ``omega`` for ``grad_y u`` and the one-dimensional misfit."""
    grid = u.grid
    if grid.n != 2:
        raise ArgumentError("symmetry_fit needs n = 2")
    g = _y_grad(u.values, grid)
    T = np.empty((2, 2))
    for a in range(2):
        for b in range(a, 2):
            T[a, b] = T[b, a] = integrate_bulk(g[a] * g[b], w, grid=grid)
    total = T[0, 0] + T[1, 1]
    if total <= 0:
        return SymmetryFit(None, 0.0, 0.0)
    evals, evecs = np.linalg.eigh(T)
    omega = evecs[:, -1]
    if omega[np.argmax(np.abs(omega))] < 0:
        omega = -omega
    # the perpendicular part of the gradient carries the smaller eigenvalue
    perp = max(total - float(omega @ T @ omega), 0.0)
    return SymmetryFit(omega, math.sqrt(perp / total), _profile_misfit(u, omega))
