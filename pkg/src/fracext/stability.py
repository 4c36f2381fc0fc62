"""Second variation of the energy and its smallest Rayleigh quotient.

The quotient is ``xi^T A xi / xi^T B xi`` over free nodes, ``A`` being the
Newton Jacobian and ``B`` the weighted mass plus a lumped boundary mass.
"""

from __future__ import annotations

import hashlib
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ArgumentError
from .grid import GridFunction
from .solver import BoundaryReactionProblem, hessian

logger = logging.getLogger(__name__)

STABILITY_TOL = 1e-6
DIRECT_LIMIT = 40000


@dataclass(frozen=True)
class StabilityForm:
    A: sp.csr_matrix
    B: sp.csr_matrix
    free: np.ndarray

    @property
    def size(self) -> int:
        return self.A.shape[0]

    def quotient(self, xi) -> float:
        xi = np.asarray(xi, dtype=float)
        return float(xi @ (self.A @ xi)) / float(xi @ (self.B @ xi))

    def asymmetry(self) -> float:
        diff = abs(self.A - self.A.T)
        return float(diff.max() / max(abs(self.A).max(), 1e-300)) if diff.nnz else 0.0


def matrix_digest(A: sp.csr_matrix) -> str:
    A = A.tocsr()
    h = hashlib.sha256()
    for arr in (A.indptr, A.indices, A.data):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def assemble(p: BoundaryReactionProblem, u: GridFunction, f_prime_shift: float = 0.0) -> StabilityForm:
    """Second variation at ``u``; ``f_prime_shift`` adds a constant to ``f'``."""
    d = p.disc
    A = hessian(p, u, f_prime_shift)
    free = np.flatnonzero(d.free)
    B = (d.Bw + sp.diags(d.bmass, format="csr")).tocsr()[free][:, free].tocsr()
    B.sort_indices()
    return StabilityForm(A, B, d.free.copy())


def _is_positive_definite(M: sp.csr_matrix) -> bool:
    """Inertia test: unpivoted LDL^T of a symmetric matrix via SuperLU.

    With ``diag_pivot_thresh=0`` and symmetric mode the row permutation equals
    the column permutation whenever no off-diagonal pivot was taken, and then
    ``diag(U)`` carries the signs of ``D``.
    """
    try:
        lu = spla.splu(
            M.tocsc(),
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError:
        return False
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return False
    return bool(np.all(lu.U.diagonal() > 0))


@dataclass(frozen=True)
class RayleighResult:
    lam: float
    xi: np.ndarray
    iters: int
    converged: bool
    history: tuple
    lower_bound: float

    def to_dict(self) -> dict:
        return {"lambda_min": self.lam, "converged": self.converged, "iters": self.iters, "lower_bound": self.lower_bound}


def _rayleigh(A, B, x):
    Bx = B @ x
    return float(x @ (A @ x)) / float(x @ Bx), Bx


def min_rayleigh(form: StabilityForm, tol: float = 1e-8, max_iter: int = 200, seed: int = 0) -> RayleighResult:
    """Smallest generalized eigenvalue by shifted inverse iteration.

    Shifts are always certified to lie below the spectrum (positive definite
    ``A - sigma B``), so every iterate lowers the Rayleigh quotient and each
    accepted shift is a lower bound. The shift is moved up towards the
    current quotient whenever that stays definite, and the iteration restarts
    from the current vector.
    """
    if tol <= 0:
        raise ArgumentError("tol must be positive")
    A, B = form.A, form.B
    n = A.shape[0]
    if n == 0:
        raise ArgumentError("no free nodes")
    rng = np.random.default_rng(seed)
    if n > DIRECT_LIMIT:
        return _min_rayleigh_lobpcg(form, tol, max_iter, rng)
    x = 1.0 + 0.01 * rng.standard_normal(n)
    rho, Bx = _rayleigh(A, B, x)

    # initial certified shift below the spectrum
    bdiag = B.diagonal()
    gersh = np.asarray(abs(A).sum(axis=1)).ravel()
    sigma = min(rho, 0.0) - 1.0
    step = max(1.0, float(np.max(gersh / bdiag)) * 1e-3)
    while not _is_positive_definite((A - sigma * B).tocsr()):
        sigma -= step
        step *= 4.0
    lower = sigma

    def factor(s):
        return spla.splu((A - s * B).tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})

    lu = factor(sigma)
    history = [rho]
    converged = False
    best = (rho, x.copy())
    it = 0
    for it in range(1, max_iter + 1):
        y = lu.solve(Bx)
        y /= math.sqrt(abs(float(y @ (B @ y))))
        rho_new, Bx_new = _rayleigh(A, B, y)
        if rho_new <= best[0] + 1e-14 * max(1.0, abs(best[0])):
            best = (min(rho_new, best[0]), y.copy())
        history.append(rho_new)
        x, rho, Bx = y, rho_new, Bx_new
        res = float(np.linalg.norm(A @ x - rho * Bx))
        if res <= tol * float(np.linalg.norm(Bx)):
            converged = True
            break
        # try to raise the shift towards rho; a definite trial is a new lower bound
        gap = rho - sigma
        trial = rho - 0.1 * gap
        if gap > 1e-10 * max(1.0, abs(rho)) and _is_positive_definite((A - trial * B).tocsr()):
            sigma = lower = trial
            lu = factor(sigma)
    lam, xi = best
    logger.debug("min_rayleigh: lambda %.12g after %d iterations (converged=%s)", lam, it, converged)
    return RayleighResult(lam, xi, it, converged, tuple(history), lower)


def _min_rayleigh_lobpcg(form: StabilityForm, tol: float, max_iter: int, rng) -> RayleighResult:
    """Large forms: LOBPCG on the diagonally scaled pencil.

    The multigrid preconditioner is built from ``A + c B`` with ``c`` pushed
    above ``-lambda`` as Ritz values come in; every restart keeps the current
    block, so the smallest Ritz value never increases.
    """
    import pyamg

    D = sp.diags(1.0 / np.sqrt(form.B.diagonal()))
    A = (D @ form.A @ D).tocsr()
    B = (D @ form.B @ D).tocsr()
    n = A.shape[0]
    X = rng.standard_normal((n, 4))
    X[:, 0] = 1.0 + 0.01 * X[:, 0]
    lam = form.quotient(D @ X[:, 0])
    history = [lam]
    used = 0
    converged = False
    chunk = 40
    while used < max_iter and not converged:
        c = 2.0 * max(0.0, -lam) + 1.0
        ml = pyamg.smoothed_aggregation_solver((A + c * B).tocsr(), symmetry="symmetric")
        steps = min(chunk, max_iter - used)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            vals, X, hist = spla.lobpcg(
                A, X, B=B, M=ml.aspreconditioner(), tol=1e-3 * tol, maxiter=steps, largest=False, retLambdaHistory=True
            )
        used += steps
        history.extend(float(np.min(h)) for h in hist[1:])
        i = int(np.argmin(vals))
        x = X[:, i]
        lam = float(x @ (A @ x)) / float(x @ (B @ x))
        Bx = B @ x
        converged = float(np.linalg.norm(A @ x - lam * Bx)) <= tol * float(np.linalg.norm(Bx))
    xi = D @ x
    xi /= math.sqrt(float(xi @ (form.B @ xi)))
    return RayleighResult(form.quotient(xi), xi, used, bool(converged), tuple(history), -math.inf)


def dense_min_eig(form: StabilityForm) -> float:
    from scipy.linalg import eigh

    return float(eigh(form.A.toarray(), form.B.toarray(), eigvals_only=True, subset_by_index=[0, 0])[0])


def is_stable(lam: float, scale: float = 1.0) -> bool:
    return lam >= -STABILITY_TOL * scale


def monotone_certificate(u: GridFunction, direction: int = 0, window=None) -> bool:
    """All forward differences along ``y_direction`` positive inside the window.

    ``window`` is ``(y_lo, y_hi, x_hi)`` in coordinates (``None`` = whole grid);
    a difference belongs to the window when both of its nodes do.
    """
    grid = u.grid
    if not (0 <= direction < grid.n):
        raise ArgumentError(f"direction {direction} out of range for n = {grid.n}")
    diff = np.diff(u.values, axis=direction)
    mesh = grid.mesh
    if window is None:
        mask = np.ones(diff.shape, dtype=bool)
    else:
        y_lo, y_hi, x_hi = window
        yy = mesh[direction]
        y0 = np.take(yy, np.arange(diff.shape[direction]), axis=direction)
        y1 = np.take(yy, np.arange(1, diff.shape[direction] + 1), axis=direction)
        xx = np.take(mesh[-1], np.arange(diff.shape[direction]), axis=direction)
        mask = (y0 >= y_lo) & (y1 <= y_hi) & (xx <= x_hi)
    if not np.any(mask):
        raise ArgumentError("monotonicity window contains no node pairs")
    return bool(np.all(diff[mask] > 0))
