"""Poisson-kernel extension of boundary data and the numerical Dirichlet-to-Neumann map.

The kernel ``P(y, x) = C x**(1-alpha) / (x**2 + |y|**2)**((n+1-alpha)/2)`` has
unit mass at every height. On the periodic y-box the convolution with the
periodized kernel is diagonal in Fourier space (Poisson summation): mode
``exp(i k.y)`` is multiplied by ``phi(|k| x)`` with

    phi(t) = 2**(1-s) / Gamma(s) * t**s * K_s(t),   s = (1 - alpha)/2,

the bounded solution of ``(x**alpha phi')' = |k|**2 x**alpha phi`` with
``phi(0) = 1``. ``extend`` applies this multiplier to the trigonometric
interpolant of the samples, which sums every periodic image exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import ArgumentError, DataError, DomainError, ResolutionError, ShapeError
from .fractional import FracOrder, frac_lap_spectral, wavenumbers
from .grid import GridFunction, HalfSpaceGrid
from .weights import PowerLaw, Weight


def normalize(n: int, alpha: float) -> float:
    """Normalizing constant C_{n,alpha} giving the kernel unit mass.

    At height 1, with ``|y| = tan(theta)`` the mass becomes
    ``|S^{n-1}| int_0^{pi/2} sin(theta)**(n-1) cos(theta)**(-alpha) d theta``;
    the algebraic endpoint factor is handed to QUADPACK's weighted rule.
    """
    if not (-1.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (-1, 1), got {alpha}")
    if n not in (1, 2):
        raise ArgumentError("n must be 1 or 2")
    half_pi = 0.5 * math.pi

    def smooth(theta):
        # cos(theta) = sin(pi/2 - theta); divide out (pi/2 - theta)**(-alpha)
        d = half_pi - theta
        ratio = math.sin(d) / d if d > 0 else 1.0
        return math.sin(theta) ** (n - 1) * ratio ** (-alpha)

    val, _ = integrate.quad(smooth, 0.0, half_pi, weight="alg", wvar=(0.0, -alpha), epsabs=0, epsrel=1e-13)
    sphere = 2.0 if n == 1 else 2.0 * math.pi
    return 1.0 / (sphere * val)


@dataclass(frozen=True)
class PoissonKernel:
    n: int
    alpha: float

    def __post_init__(self):
        if not (-1.0 < self.alpha < 1.0):
            raise DomainError(f"alpha must lie in (-1, 1), got {self.alpha}")

    @property
    def C(self) -> float:
        return normalize(self.n, self.alpha)

    def __call__(self, y_abs, x):
        y_abs = np.asarray(y_abs, dtype=float)
        x = np.asarray(x, dtype=float)
        return self.C * x ** (1 - self.alpha) / (x**2 + y_abs**2) ** ((self.n + 1 - self.alpha) / 2)


def multiplier(t, s: float) -> np.ndarray:
    """``phi(t)``: Fourier multiplier of the kernel at ``t = |k| x``."""
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    pos = t > 0
    tp = t[pos]
    out[pos] = 2.0 ** (1 - s) / special.gamma(s) * np.exp(s * np.log(tp) - tp) * special.kve(s, tp)
    return out


def _spectral_data(v: np.ndarray, grid: HalfSpaceGrid):
    """FFT of the boundary samples, closed axes made periodic by even reflection."""
    data = v
    lengths = []
    for axis in range(grid.n):
        if grid.periodic[axis]:
            lengths.append(grid.L_y)
        else:
            idx = np.r_[np.arange(grid.N_y), np.arange(grid.N_y - 2, 0, -1)]
            data = np.take(data, idx, axis=axis)
            lengths.append(2.0 * grid.L_y - 2.0 * grid.h(axis))
    kmag = np.sqrt(sum(k**2 for k in np.meshgrid(*[wavenumbers(N, L) for N, L in zip(data.shape, lengths)], indexing="ij")))
    return np.fft.fftn(data), kmag


def extend(v, grid: HalfSpaceGrid, fo: FracOrder) -> GridFunction:
    """Poisson extension of boundary samples ``v`` to every grid height."""
    v = np.asarray(v, dtype=float)
    if v.shape != grid.boundary_shape:
        raise ShapeError(f"boundary data shape {v.shape} != {grid.boundary_shape}")
    if not np.all(np.isfinite(v)):
        raise DataError("non-finite boundary data")
    vhat, kmag = _spectral_data(v, grid)
    out = np.empty(grid.shape)
    out[..., 0] = v
    crop = tuple(slice(0, grid.N_y) for _ in range(grid.n))
    for j, x in enumerate(grid.x_nodes[1:], start=1):
        u = np.fft.ifftn(vhat * multiplier(kmag * x, fo.s)).real
        out[..., j] = u[crop]
    return GridFunction(grid, out)


def kernel_row(grid: HalfSpaceGrid, x: float, fo: FracOrder) -> np.ndarray:
    """Discrete periodic kernel at height ``x``: weights with ``u = sum_m w_m v(y - y_m)``."""
    if not all(grid.periodic):
        raise ArgumentError("kernel rows are defined on fully periodic grids")
    ks = np.meshgrid(*[wavenumbers(grid.N_y, grid.L_y)] * grid.n, indexing="ij")
    kmag = np.sqrt(sum(k**2 for k in ks))
    return np.fft.ifftn(multiplier(kmag * x, fo.s)).real


@dataclass(frozen=True)
class FluxResult:
    values: np.ndarray
    residual: float
    resolved: bool
    message: str = ""


def _alpha_of(w: Weight) -> float:
    if w.alpha is None:
        raise ArgumentError("the boundary flux fit needs a power-law weight")
    return float(w.alpha)


def dn_flux(u: GridFunction, w: Weight, nfit: int = 4) -> FluxResult:
    """Weighted outward flux ``-lim_{x->0} x**alpha u_x`` at each boundary node.

    Near the boundary ``u(y, x) = a + b x**(1-alpha) + c x**2 + ...``; the first
    ``nfit`` nodes are fitted in least squares and the flux is ``-(1-alpha) b``.
    """
    alpha = _alpha_of(w)
    grid = u.grid
    x = grid.x_nodes
    if nfit < 4:
        raise ArgumentError("the flux fit needs at least 4 nodes")
    if np.count_nonzero((x > 0) & (x < grid.L_x / 100)) < 4:
        raise ResolutionError("need >= 4 nodes in (0, L_x/100); increase gamma or M")
    xs = x[:nfit]
    A = np.stack([np.ones_like(xs), xs ** (1 - alpha), xs**2], axis=1)
    rows = u.values[..., :nfit].reshape(-1, nfit)
    coef, *_ = np.linalg.lstsq(A, rows.T, rcond=None)
    resid = float(np.max(np.abs(A @ coef - rows.T))) if rows.size else 0.0
    flux = -(1 - alpha) * coef[1].reshape(grid.boundary_shape)
    scale = max(float(np.max(np.abs(u.values))), 1e-300)
    resolved = resid <= 1e-3 * scale
    return FluxResult(flux, resid, resolved, "" if resolved else "flux unresolved; refine gamma or M")


def dn_constant_exact(s: float) -> float:
    """Small-t expansion of ``phi`` gives the flux factor ``2**(1-2s) Gamma(1-s)/Gamma(s)``."""
    return 2.0 ** (1 - 2 * s) * math.gamma(1 - s) / math.gamma(s)


@dataclass(frozen=True)
class DNFit:
    s: float
    alpha: float
    d: float
    spread: float
    modes: tuple
    d_k: tuple
    resolved: bool
    crosscheck: float

    def to_dict(self) -> dict:
        return {"s": self.s, "alpha": self.alpha, "d": self.d, "spread": self.spread, "modes": list(self.modes)}


def dn_grid(alpha: float, N_y: int = 256, M: int = 128, L_x: float = 1.0) -> HalfSpaceGrid:
    return HalfSpaceGrid(1, 2 * math.pi, N_y, L_x, M, 2.0 / (1.0 + alpha))


def dn_operator_fit(fo: FracOrder, modes, N_y: int = 256, M: int = 128, L_x: float = 1.0) -> DNFit:
    """Measure the factor ``d`` in ``flux = d (-Delta)^s v`` on cosine modes.

    ``crosscheck`` is the relative discrepancy between the measured flux of a
    mixed-mode datum divided by ``d`` and the spectral fractional Laplacian.
    """
    modes = tuple(int(k) for k in modes)
    if not modes:
        raise ArgumentError("modes must be nonempty")
    grid = dn_grid(fo.alpha, N_y, M, L_x)
    if any(N_y < 8 * abs(k) for k in modes):
        raise ResolutionError("each mode needs at least 8 points per wavelength")
    w = PowerLaw(fo.alpha)
    y = grid.y_nodes(0)
    d_k = []
    resolved = True
    for k in modes:
        v = np.cos(k * y)
        res = dn_flux(extend(v, grid, fo), w)
        resolved &= res.resolved
        amp = float(res.values @ v / (v @ v))
        d_k.append(amp / abs(k) ** (2 * fo.s))
    d_k = np.array(d_k)
    d = float(np.exp(np.mean(np.log(d_k))))
    spread = float(np.max(np.abs(d_k / d - 1.0)))

    mix = sum(np.cos(k * y) / (1 + i) for i, k in enumerate(modes))
    flux = dn_flux(extend(mix, grid, fo), w).values
    ref = frac_lap_spectral(mix, fo.s, grid.L_y)
    cross = float(np.max(np.abs(flux / d - ref)) / np.max(np.abs(ref)))
    return DNFit(fo.s, fo.alpha, d, spread, modes, tuple(d_k.tolist()), bool(resolved), cross)
