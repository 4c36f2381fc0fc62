"""Energy minimization for the boundary-reaction problem

    -div(mu(x) grad u) + g(x, u) = 0   in the half-space,
    -mu(x) u_x = f(u)                 on x = 0,

discretized with multilinear finite elements on a HalfSpaceGrid.

The discrete energy is

    E(u) = 1/2 u^T K u + sum_i m_i G(x_i, u_i) - sum_{i on x=0} b_i F(u_i)

where ``K`` is the exact stiffness matrix of ``int mu |grad u|^2`` (the weight
enters only through exact per-cell moments), ``m`` the lumped volume measure
and ``b`` the boundary quadrature weights. The residual is the exact gradient
of ``E`` on the free nodes and the Jacobian its exact Hessian, so Newton's
method, the line search and the stability form all use one assembly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import integrate

from .errors import ArgumentError, DataError, ShapeError
from .extension import extend
from .fractional import FracOrder
from .grid import GridFunction, HalfSpaceGrid, gradient, integrate_bulk
from .nonlinear import BulkNonlinearity, Nonlinearity
from .weights import PowerLaw, Weight, a2_constant, check_growth

logger = logging.getLogger(__name__)


# -- assembly ----------------------------------------------------------------


def _y_matrices(N: int, h: float, periodic: bool):
    if periodic:
        eye = sp.identity(N, format="csr")
        shift = sp.csr_matrix((np.ones(N), (np.arange(N), (np.arange(N) + 1) % N)), shape=(N, N))
        S = (2.0 * eye - shift - shift.T) / h
        Mm = (4.0 * eye + shift + shift.T) * (h / 6.0)
        lump = np.full(N, h)
    else:
        d = np.full(N, 2.0)
        d[0] = d[-1] = 1.0
        off = np.ones(N - 1)
        S = sp.diags([-off, d, -off], [-1, 0, 1], format="csr") / h
        Mm = sp.diags([off, 2.0 * d, off], [-1, 0, 1], format="csr") * (h / 6.0)
        lump = h * d / 2.0
    return S, Mm, lump


def _x_matrices(x: np.ndarray, w: Weight):
    hx = np.diff(x)
    m0, m1, m2 = w.moments(x)
    n = x.size
    i = np.arange(n - 1)
    k = m0 / hx**2
    S = sp.csr_matrix(
        (np.concatenate([k, k, -k, -k]), (np.concatenate([i, i + 1, i, i + 1]), np.concatenate([i, i + 1, i + 1, i]))),
        shape=(n, n),
    )
    a00 = m0 - 2 * m1 + m2
    a01 = m1 - m2
    Mw = sp.csr_matrix(
        (np.concatenate([a00, m2, a01, a01]), (np.concatenate([i, i + 1, i, i + 1]), np.concatenate([i, i + 1, i + 1, i]))),
        shape=(n, n),
    )
    lump = np.zeros(n)
    lump[:-1] += 0.5 * hx
    lump[1:] += 0.5 * hx
    return S, Mw, lump


def _kron_all(mats):
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


@dataclass(frozen=True)
class Discretization:
    grid: HalfSpaceGrid
    weight: Weight
    K: sp.csr_matrix = field(repr=False)
    Bw: sp.csr_matrix = field(repr=False)
    mass: np.ndarray = field(repr=False)
    bmass: np.ndarray = field(repr=False)
    xcoord: np.ndarray = field(repr=False)
    dirichlet: np.ndarray = field(repr=False)

    @property
    def free(self) -> np.ndarray:
        return ~self.dirichlet


@lru_cache(maxsize=16)
def discretize(grid: HalfSpaceGrid, weight: Weight) -> Discretization:
    ys = [_y_matrices(grid.N_y, grid.h(a), grid.periodic[a]) for a in range(grid.n)]
    Sx, Mx, lx = _x_matrices(grid.x_nodes, weight)
    terms = []
    for a in range(grid.n):
        mats = [ys[b][0] if b == a else ys[b][1] for b in range(grid.n)] + [Mx]
        terms.append(_kron_all(mats))
    terms.append(_kron_all([ys[b][1] for b in range(grid.n)] + [Sx]))
    K = terms[0]
    for t in terms[1:]:
        K = K + t
    K = K.tocsr()
    K.sort_indices()
    Bw = _kron_all([ys[b][1] for b in range(grid.n)] + [Mx]).tocsr()

    lump = np.ones(1)
    for a in range(grid.n):
        lump = np.multiply.outer(lump, ys[a][2])
    mass = np.multiply.outer(lump.reshape(grid.boundary_shape), lx).ravel()
    bmass = np.zeros(grid.shape)
    bmass[..., 0] = grid.boundary_weights()

    dirichlet = np.zeros(grid.shape, dtype=bool)
    dirichlet[..., -1] = True
    for a in range(grid.n):
        if not grid.periodic[a]:
            idx = [slice(None)] * (grid.n + 1)
            idx[a] = [0, grid.N_y - 1]
            dirichlet[tuple(idx)] = True
    return Discretization(
        grid, weight, K, Bw, mass, bmass.ravel(), grid.mesh[-1].ravel().copy(), dirichlet.ravel()
    )


# -- problem -----------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryReactionProblem:
    """Weight, reaction terms, grid and the Dirichlet data on the truncation boundary.

    ``dirichlet_values`` is a full nodal array whose entries on the top lid
    (and on the ends of closed y-axes) are imposed; ``None`` means "use the
    Poisson extension of the initial boundary trace", fixed when solving.
    """

    grid: HalfSpaceGrid
    weight: Weight
    f: Nonlinearity
    g: BulkNonlinearity
    dirichlet_values: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def disc(self) -> Discretization:
        return discretize(self.grid, self.weight)

    def with_dirichlet(self, values) -> "BoundaryReactionProblem":
        values = np.asarray(values, dtype=float)
        if values.shape != self.grid.shape:
            raise ShapeError("Dirichlet data must cover the grid")
        return BoundaryReactionProblem(self.grid, self.weight, self.f, self.g, values.copy())

    def default_dirichlet(self, u0: GridFunction) -> np.ndarray:
        if isinstance(self.weight, PowerLaw):
            return extend(u0.trace, self.grid, FracOrder.from_alpha(self.weight.alpha)).values
        return np.asarray(u0.values)


def _check(p: BoundaryReactionProblem, u) -> np.ndarray:
    v = u.values if isinstance(u, GridFunction) else np.asarray(u, dtype=float)
    if v.shape != p.grid.shape and v.shape != (math.prod(p.grid.shape),):
        raise ShapeError(f"u has shape {v.shape}, grid wants {p.grid.shape}")
    if not np.all(np.isfinite(v)):
        raise DataError("non-finite values in u")
    return v.ravel()


def _energy_flat(p: BoundaryReactionProblem, d: Discretization, u: np.ndarray) -> float:
    # K annihilates constants; removing one keeps K @ const exactly zero in floating point
    v = u - u[0]
    quad = 0.5 * float(v @ (d.K @ v))
    bulk = float(d.mass @ p.g.primitive(d.xcoord, u))
    bdry = float(d.bmass @ p.f.primitive(u))
    return quad + bulk - bdry


def _gradient_flat(p: BoundaryReactionProblem, d: Discretization, u: np.ndarray) -> np.ndarray:
    return d.K @ (u - u[0]) + d.mass * p.g.value(d.xcoord, u) - d.bmass * p.f.value(u)


def energy(p: BoundaryReactionProblem, u) -> float:
    """Discrete energy ``int mu|grad u|^2/2 + int G(x,u) - int_{x=0} F(u)``."""
    return _energy_flat(p, p.disc, _check(p, u))


def residual(p: BoundaryReactionProblem, u) -> np.ndarray:
    """Weak residual tested against every free nodal hat function."""
    d = p.disc
    return _gradient_flat(p, d, _check(p, u))[d.free]


def hessian(p: BoundaryReactionProblem, u, f_prime_shift: float = 0.0) -> sp.csr_matrix:
    """Second variation restricted to free nodes (Newton Jacobian and stability form)."""
    d = p.disc
    v = _check(p, u)
    diag = d.mass * p.g.derivative(d.xcoord, v) - d.bmass * (p.f.derivative(v) + f_prime_shift)
    H = (d.K + sp.diags(diag, format="csr")).tocsr()
    free = np.flatnonzero(d.free)
    H = H[free][:, free].tocsr()
    H.sort_indices()
    return H


# -- solve -------------------------------------------------------------------


@dataclass(frozen=True)
class Solution:
    u: GridFunction
    energy: float
    residual_inf: float
    newton_iters: int
    converged: bool
    history: tuple = ()
    message: str = ""


DIRECT_LIMIT = 40000


def _linear_solve(A: sp.csr_matrix, b: np.ndarray, spd: sp.csr_matrix | None = None) -> np.ndarray:
    """Sparse LU for small systems; AMG-preconditioned MINRES for large ones.

    ``spd`` is a positive definite companion of ``A`` (same stiffness, absolute
    values on the diagonal terms) from which the multigrid hierarchy is built.
    """
    if A.shape[0] <= DIRECT_LIMIT:
        return spla.spsolve(A.tocsc(), b, permc_spec="MMD_AT_PLUS_A")
    import pyamg

    ml = pyamg.smoothed_aggregation_solver((A if spd is None else spd).tocsr(), symmetry="symmetric")
    x, info = spla.minres(A, b, M=ml.aspreconditioner(), rtol=1e-11, maxiter=400)
    if info != 0:
        logger.debug("minres stopped with info %d", info)
    return x


def _spd_companion(p: BoundaryReactionProblem, d: Discretization, u: np.ndarray) -> sp.csr_matrix:
    diag = d.mass * np.abs(p.g.derivative(d.xcoord, u)) + d.bmass * np.abs(p.f.derivative(u))
    free = np.flatnonzero(d.free)
    H = (d.K + sp.diags(diag, format="csr")).tocsr()
    return H[free][:, free].tocsr()


def solve(
    p: BoundaryReactionProblem,
    u0: GridFunction,
    tol: float = 1e-10,
    max_iter: int = 50,
    armijo: float = 1e-4,
) -> Solution:
    """Damped Newton iteration on the residual with an energy line search."""
    if tol <= 0:
        raise ArgumentError("tol must be positive")
    d = p.disc
    u = _check(p, u0).copy()
    bc = p.dirichlet_values if p.dirichlet_values is not None else p.default_dirichlet(u0)
    bc = np.asarray(bc, dtype=float).ravel()
    u[d.dirichlet] = bc[d.dirichlet]
    free = d.free
    scale = max(1.0, float(np.max(np.abs(u0.values))))
    kdiag = d.K.diagonal()[free]
    precond = np.where(kdiag > 0, kdiag, 1.0)

    history = []
    E = _energy_flat(p, d, u)
    message = ""
    converged = False
    it = 0
    for it in range(max_iter + 1):
        g = _gradient_flat(p, d, u)[free]
        rinf = float(np.max(np.abs(g))) if g.size else 0.0
        history.append({"iter": it, "energy": E, "residual_inf": rinf})
        logger.debug("iter %d energy %.17g residual %.3e", it, E, rinf)
        if rinf <= tol:
            converged = True
            break
        if it == max_iter:
            message = "max_iter reached"
            break
        J = hessian(p, u)
        spd = _spd_companion(p, d, u) if J.shape[0] > DIRECT_LIMIT else None
        step = _linear_solve(J, -g, spd)
        kind = "newton"
        slope = float(g @ step)
        shift = 0.0
        while not (np.all(np.isfinite(step)) and slope < 0):
            # Newton direction is not a descent direction: regularize towards
            # a scaled gradient step, ending with the gradient step itself
            shift = 1e-3 * float(np.max(precond)) if shift == 0.0 else 10.0 * shift
            if shift > 1e6 * float(np.max(precond)):
                step = -g / precond
                kind = "gradient"
            else:
                step = _linear_solve((J + sp.diags(shift * precond / np.max(precond))).tocsr(), -g, spd)
                kind = "shifted-newton"
            slope = float(g @ step)
            if kind == "gradient":
                break
        t = 1.0
        slack = 1e-13 * max(1.0, abs(E)) * scale
        while True:
            trial = u.copy()
            trial[free] += t * step
            E_new = _energy_flat(p, d, trial)
            if E_new <= E + armijo * t * slope + slack:
                break
            t *= 0.5
            if t < 1e-12:
                break
        if t < 1e-12:
            message = f"step length underflow at iteration {it} ({kind} step)"
            break
        u = trial
        E = E_new
        history[-1]["step"] = t
        history[-1]["kind"] = kind
    uf = GridFunction(p.grid, u.reshape(p.grid.shape))
    return Solution(uf, E, rinf, it, converged, tuple(history), message)


# -- structural checks -------------------------------------------------------


@dataclass(frozen=True)
class StructureReport:
    integrable_g: str
    sign_g: str
    growth: str
    a2: str
    details: dict

    def to_dict(self) -> dict:
        return {"g=0": self.integrable_g, "g=+": self.sign_g, "numucr": self.growth, "A2": self.a2, "details": self.details}


def validate_structure(p: BoundaryReactionProblem, M_bound: float = 2.0, x_max: float | None = None, samples: int = 65) -> StructureReport:
    """Sample the hypotheses on g and mu; verdicts are per-sample, not proofs."""
    x_max = 10.0 * p.grid.L_x if x_max is None else x_max
    us = np.linspace(-M_bound, M_bound, samples)
    xs = np.geomspace(1e-6, x_max, samples)
    X, U = np.meshgrid(xs, us, indexing="ij")
    gu = p.g.value(X, U) * U
    sign = "satisfied" if np.all(gu >= -1e-14) else "violated-at-sample"

    def sup_g(x: float) -> float:
        return float(np.max(np.abs(p.g.value(np.full_like(us, x), us))))

    def integral(upper: float) -> float:
        # adaptive quadrature decade by decade, so decay at any scale is resolved
        edges = [0.0] + [e for e in 10.0 ** np.arange(-8, 12) if e < upper] + [upper]
        return float(sum(integrate.quad(sup_g, a, b, limit=200)[0] for a, b in zip(edges, edges[1:])))

    I1, I2, I3 = integral(x_max), integral(10 * x_max), integral(100 * x_max)
    if I3 == 0.0:
        integ = "satisfied"
    elif I3 - I2 <= 1e-6 * max(I3, 1e-300) or (I3 - I2) <= 0.1 * (I2 - I1) * 1e-3:
        integ = "satisfied"
    elif I3 > 5.0 * I2:
        integ = "violated-at-sample"
    else:
        integ = "not-decidable-by-sampling"

    radii = [2.0**k for k in range(11)]
    gr = check_growth(p.weight, radii)
    growth = "satisfied" if gr.ok and not gr.growing else "violated-at-sample"
    kappa = a2_constant(p.weight, max(p.grid.L_x, 1.0), 256)
    a2 = "satisfied" if math.isfinite(kappa) else "violated-at-sample"
    return StructureReport(
        integ, sign, growth, a2,
        {"int_sup_g": [I1, I2, I3], "min_gu": float(np.min(gu)), "C_hat": gr.C_hat, "kappa_hat": kappa},
    )


@dataclass(frozen=True)
class EnergyGrowth:
    radii: tuple
    values: tuple
    fitted_exponent: float
    status: str


def energy_growth(u: GridFunction, w: Weight, radii) -> EnergyGrowth:
    """Weighted Dirichlet energy on half-balls and its log-log growth exponent."""
    radii = tuple(float(r) for r in radii)
    if len(radii) < 3:
        raise ArgumentError("energy_growth needs at least 3 radii")
    if any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] < 1:
        raise ArgumentError("radii must be increasing and >= 1")
    grid = u.grid
    if radii[-1] > grid.inscribed_radius * (1 + 1e-12):
        raise ArgumentError(f"largest radius exceeds the inscribed radius {grid.inscribed_radius}")
    gr = gradient(u)
    dens = np.sum(gr**2, axis=0)
    vals = tuple(integrate_bulk(dens, w, R, grid=grid) for R in radii)
    upper = len(radii) // 2
    lr = np.log(np.array(radii[upper:]))
    lv = np.array(vals[upper:])
    if np.all(np.array(vals) == 0.0):
        return EnergyGrowth(radii, vals, math.nan, "undefined-zero")
    slope = float(np.polyfit(lr, np.log(lv), 1)[0])
    return EnergyGrowth(radii, vals, slope, "ok")
