"""End-to-end acceptance checks, shared by the test suite and ``fracext verify-all``.

Each ``criterion_k`` returns a CriterionResult; ``details`` carries every
measured number so a failing check can be diagnosed from the report alone.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from .config import layer_profile
from .extension import PoissonKernel, dn_constant_exact, dn_operator_fit, normalize
from .fractional import FracOrder, frac_lap_pv, frac_lap_spectral
from .geometry import bump, capacity_phi, poincare_audit, symmetry_fit
from .grid import GridFunction, HalfSpaceGrid, verify_annulus_bound
from .nonlinear import bulk, reaction
from .solver import BoundaryReactionProblem, energy, energy_growth, residual, solve
from .stability import assemble, dense_min_eig, is_stable, min_rayleigh, monotone_certificate
from .weights import PowerLaw, a2_constant


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"criterion {self.number:2d} {'PASS' if self.passed else 'FAIL'}  {self.title}"

    def to_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "passed": self.passed, "seconds": self.seconds, "details": self.details}


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# -- 1 -----------------------------------------------------------------------


def kernel_mass(n: int, alpha: float, x: float) -> float:
    k = PoissonKernel(n, alpha)
    if n == 1:
        val, _ = integrate.quad(lambda y: k(abs(y), x), -np.inf, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    else:
        val, _ = integrate.quad(lambda r: 2 * math.pi * r * k(r, x), 0, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    return float(val)


@_timed
def criterion_1() -> CriterionResult:
    """Kernel normalization constants and unit mass."""
    c10 = normalize(1, 0.0)
    c20 = normalize(2, 0.0)
    ok = abs(c10 - 1 / math.pi) <= 1e-8 and abs(c20 - 1 / (2 * math.pi)) <= 1e-8
    masses = {}
    for n in (1, 2):
        for a in (-0.5, 0.0, 0.5):
            for x in (0.1, 1.0, 10.0):
                m = kernel_mass(n, a, x)
                masses[f"n={n},alpha={a},x={x}"] = m
                ok &= abs(m - 1.0) <= 1e-6
    return CriterionResult(1, "Poisson kernel normalization", bool(ok), {"C_1_0": c10, "C_2_0": c20, "mass": masses})


# -- 2 -----------------------------------------------------------------------


@_timed
def criterion_2() -> CriterionResult:
    """Dirichlet-to-Neumann factor and its spread across modes 1..4."""
    details = {}
    ok = True
    for alpha in (0.0, -0.5, 0.5):
        fit = dn_operator_fit(FracOrder.from_alpha(alpha), (1, 2, 3, 4), N_y=256, M=128)
        details[f"alpha={alpha}"] = fit.to_dict() | {"d_exact": dn_constant_exact(fit.s), "resolved": fit.resolved}
        if alpha == 0.0:
            ok &= abs(fit.d - 1.0) <= 1e-3 and fit.spread < 1e-3
        else:
            ok &= fit.spread < 2e-2
    return CriterionResult(2, "Dirichlet-to-Neumann correspondence", bool(ok), details)


# -- 3 -----------------------------------------------------------------------


def random_trig_poly(rng, N: int, degree: int = 5) -> np.ndarray:
    y = 2 * np.pi * np.arange(N) / N
    a = rng.standard_normal(degree + 1)
    b = rng.standard_normal(degree + 1)
    return sum(a[k] * np.cos(k * y) + b[k] * np.sin(k * y) for k in range(degree + 1))


@_timed
def criterion_3(seed: int = 0, trials: int = 5) -> CriterionResult:
    """Singular-integral and spectral fractional Laplacians agree."""
    rng = np.random.default_rng(seed)
    worst = {}
    for s in (0.25, 0.5, 0.75):
        errs = []
        for _ in range(trials):
            v = random_trig_poly(rng, 256)
            ref = frac_lap_spectral(v, s)
            pv = frac_lap_pv(v, s).values
            errs.append(float(np.max(np.abs(pv - ref)) / np.max(np.abs(ref))))
        worst[f"s={s}"] = max(errs)
    return CriterionResult(3, "operator cross-validation", all(e < 1e-3 for e in worst.values()), {"rel_linf": worst})


# -- 4 / 5: the one-dimensional layer ------------------------------------------


def layer_grid(n: int = 1, N_y: int = 256, M: int = 128) -> HalfSpaceGrid:
    periodic = (False,) if n == 1 else (False, True)
    return HalfSpaceGrid(n, 40.0, N_y, 20.0, M, 2.0, periodic)


def layer_problem(grid: HalfSpaceGrid) -> BoundaryReactionProblem:
    p = BoundaryReactionProblem(grid, PowerLaw(0.0), reaction("scaled_sine"), bulk("zero"))
    return p.with_dirichlet(layer_profile(grid))


def perturbed_tanh(grid: HalfSpaceGrid) -> GridFunction:
    y = grid.mesh[0]
    v = np.tanh(y / 2.0) + 0.1 * np.sin(y) * np.exp(-(y**2) / 16.0)
    if grid.n == 2:
        v = v * (1.0 + 0.05 * np.cos(2 * np.pi * grid.mesh[1] / grid.L_y))
    return GridFunction(grid, v)


@lru_cache(maxsize=4)
def solved_layer(n: int = 1, N_y: int = 256, M: int = 128):
    grid = layer_grid(n, N_y, M)
    p = layer_problem(grid)
    return p, solve(p, perturbed_tanh(grid), tol=1e-10, max_iter=50)


def middle_error(u: GridFunction) -> float:
    grid = u.grid
    y, x = grid.mesh[0], grid.mesh[-1]
    window = (np.abs(y) <= 10.0) & (x <= 10.0)
    return float(np.max(np.abs(u.values - layer_profile(grid))[window]))


@_timed
def criterion_4() -> CriterionResult:
    """Layer reproduction and refinement order."""
    _, fine = solved_layer(1, 256, 128)
    _, coarse = solved_layer(1, 128, 64)
    e_f, e_c = middle_error(fine.u), middle_error(coarse.u)
    order = math.log2(e_c / e_f) if e_f > 0 else math.inf
    ok = fine.converged and coarse.converged and e_f <= 5e-3 and order >= 1.5
    return CriterionResult(
        4, "layer reproduction", bool(ok),
        {"error_256x128": e_f, "error_128x64": e_c, "order": order, "newton_iters": fine.newton_iters, "residual_inf": fine.residual_inf},
    )


DESTABILIZING_SHIFT = 10.0


@_timed
def criterion_5() -> CriterionResult:
    """Stability of the layer; destabilized form against a dense oracle on the 8x coarser grid."""
    p, sol = solved_layer(1, 256, 128)
    scale = max(1.0, float(np.max(np.abs(perturbed_tanh(p.grid).values))))
    form = assemble(p, sol.u)
    res = min_rayleigh(form, tol=1e-8, max_iter=200)
    cert = monotone_certificate(sol.u, 0)
    stable = is_stable(res.lam, scale)
    bad = min_rayleigh(assemble(p, sol.u, DESTABILIZING_SHIFT), tol=1e-8, max_iter=200)

    coarse = p.grid.coarsened(8)
    pc = layer_problem(coarse)
    sol_c = solve(pc, perturbed_tanh(coarse), tol=1e-10)
    form_c = assemble(pc, sol_c.u, DESTABILIZING_SHIFT)
    dense = dense_min_eig(form_c)
    iter_c = min_rayleigh(form_c, tol=1e-10, max_iter=200).lam
    rel = abs(bad.lam - dense) / abs(dense)
    ok = stable and cert and bad.lam < -0.1 * scale and rel <= 0.05
    return CriterionResult(
        5, "stability audit", bool(ok),
        {
            "lambda_min": res.lam, "converged": res.converged, "monotone_certificate": cert, "agree": stable == cert,
            "lambda_destabilized": bad.lam, "coarse_grid": [coarse.N_y, coarse.M], "lambda_dense_coarse": dense,
            "lambda_iterative_coarse": iter_c, "relative_gap": rel,
        },
    )


# -- 6 / 7 / 8: n = 2 ----------------------------------------------------------


def phi_family(grid: HalfSpaceGrid) -> dict:
    return {"capacity:4": capacity_phi(4, grid), "capacity:8": capacity_phi(8, grid), "bump:8": bump(8, grid), "bump:16": bump(16, grid)}


@lru_cache(maxsize=1)
def certified_layer_2d():
    p, sol = solved_layer(2, 64, 48)
    cert = monotone_certificate(sol.u, 0)
    lam = min_rayleigh(assemble(p, sol.u), tol=1e-6, max_iter=400)
    return p, sol, cert, lam


@_timed
def criterion_6() -> CriterionResult:
    """Curvature/tangential budget on the certified-stable n = 2 layer."""
    p, sol, cert, lam = certified_layer_2d()
    certified = sol.converged and cert and is_stable(lam.lam)
    w = p.weight
    budgets = {}
    ok = certified
    for name, phi in phi_family(p.grid).items():
        b = poincare_audit(sol.u, w, phi)
        budgets[name] = b.to_dict()
        ok &= b.holds and b.sensitivity < 1e-2
        ok &= (b.lhs_curv + b.lhs_tan) < 1e-8 * b.rhs
    return CriterionResult(
        6, "curvature budget on stable solutions", bool(ok),
        {"converged": sol.converged, "monotone_certificate": cert, "lambda_min": lam.lam, "budgets": budgets},
    )


def saddle(grid: HalfSpaceGrid) -> GridFunction:
    return GridFunction(grid, grid.mesh[0] ** 2 - grid.mesh[1] ** 2)


@_timed
def criterion_7() -> CriterionResult:
    """One-dimensional symmetry of the stable layer; the saddle is excluded."""
    p, sol, cert, lam = certified_layer_2d()
    fit = symmetry_fit(sol.u)
    sad = saddle(p.grid)
    fit_s = symmetry_fit(sad)
    growth = energy_growth(sad, PowerLaw(0.0), (2.0, 4.0, 8.0, 16.0))
    ok = fit.residual < 5e-2 and fit.profile_rms < 5e-2 and fit_s.residual > 0.5 and growth.fitted_exponent >= 4.5
    return CriterionResult(
        7, "one-dimensional symmetry", bool(ok),
        {"layer": fit.to_dict(), "saddle": fit_s.to_dict(), "saddle_energy_exponent": growth.fitted_exponent},
    )


@_timed
def criterion_8() -> CriterionResult:
    """Energy growth of the flat n = 2 layer."""
    grid = layer_grid(2, 64, 48)
    u = GridFunction(grid, layer_profile(grid))
    g = energy_growth(u, PowerLaw(0.0), (2.0, 4.0, 8.0, 16.0))
    return CriterionResult(8, "energy growth", bool(g.fitted_exponent <= 2.05), {"values": list(g.values), "exponent": g.fitted_exponent})


# -- 9 / 10 ------------------------------------------------------------------


def annulus_grid() -> HalfSpaceGrid:
    return HalfSpaceGrid(1, 40.0, 512, 20.0, 256, 1.0)


@_timed
def criterion_9(seed: int = 0, count: int = 100) -> CriterionResult:
    """Annulus bound on random fields, and the closed-form h = 1 case."""
    grid = annulus_grid()
    rng = np.random.default_rng(seed)
    R = 16.0
    random_ok = 0
    for _ in range(count):
        h = rng.uniform(0.0, 1.0, grid.shape) ** rng.uniform(0.5, 4.0)
        random_ok += verify_annulus_bound(GridFunction(grid, h), R).holds
    one = verify_annulus_bound(GridFunction(grid, np.ones(grid.shape)), R)
    lhs_stated = math.pi / 4 * math.log(R)
    lhs_exact = math.pi / 2 * math.log(R)
    rhs_exact = math.pi / 2 * math.log(R) + math.pi / 2
    lhs_rel = abs(one.lhs - lhs_stated) / lhs_stated
    rhs_rel = abs(one.rhs - rhs_exact) / rhs_exact
    ok = random_ok == count and lhs_rel <= 0.03 and rhs_rel <= 0.03
    return CriterionResult(
        9, "annulus bound", bool(ok),
        {
            "random_holds": f"{random_ok}/{count}", "lhs": one.lhs, "rhs": one.rhs,
            "lhs_target_pi_over_4_logR": lhs_stated, "lhs_rel_error": lhs_rel,
            "lhs_half_disk_pi_over_2_logR": lhs_exact, "lhs_rel_error_half_disk": abs(one.lhs - lhs_exact) / lhs_exact,
            "rhs_target": rhs_exact, "rhs_rel_error": rhs_rel,
        },
    )


def gradient_consistency(p: BoundaryReactionProblem, u: np.ndarray, directions: int = 20, seed: int = 0) -> float:
    """Worst relative gap between central energy differences and the residual pairing."""
    rng = np.random.default_rng(seed)
    free = p.disc.free
    r = residual(p, u)
    scale = max(1.0, float(np.max(np.abs(u))))
    h = 1e-5 * scale
    worst = 0.0
    for _ in range(directions):
        d = np.zeros(u.size)
        d[free] = rng.standard_normal(int(free.sum()))
        d = d.reshape(u.shape)
        fd = (energy(p, u + h * d) - energy(p, u - h * d)) / (2 * h)
        exact = float(r @ d.ravel()[free])
        worst = max(worst, abs(fd - exact) / max(abs(exact), 1e-300))
    return worst


@_timed
def criterion_10(seed: int = 0) -> CriterionResult:
    """A2 constants and energy/residual compatibility."""
    a2 = {}
    ok = True
    for alpha in (0.0, 0.5, 0.9):
        k = a2_constant(PowerLaw(alpha), 1.0, 256)
        a2[f"alpha={alpha}"] = k
        ok &= abs(k - 1.0 / (1.0 - alpha**2)) <= 1e-6
    grid = HalfSpaceGrid(1, 8.0, 32, 4.0, 16, 2.0)
    rng = np.random.default_rng(seed)
    p = BoundaryReactionProblem(grid, PowerLaw(-0.3), reaction("cubic"), bulk("power_g"))
    u = rng.uniform(-1, 1, grid.shape)
    gap = gradient_consistency(p, u, 20, seed)
    ok &= gap < 1e-6
    return CriterionResult(10, "structural infrastructure", bool(ok), {"a2": a2, "fd_relative_gap": gap})


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
}


def run_all(selected=None) -> list:
    return [CRITERIA[k]() for k in (selected or sorted(CRITERIA))]
