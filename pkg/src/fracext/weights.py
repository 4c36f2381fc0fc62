"""Diffusion coefficients mu(x) and the structural checks performed on them.

Two kinds are supported: power laws ``x**alpha`` with ``alpha`` in (-1, 1) and
tabulated weights that are constant on panels. Every integral of the weight
over a cell is computed in closed form so that nothing is ever sampled at the
degenerate point ``x = 0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DataError, DomainError

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
# map to [0, 1]
_GL_T = 0.5 * (_GL_NODES + 1.0)
_GL_W = 0.5 * _GL_WEIGHTS


class Weight:
    """Common interface of the diffusion coefficient."""

    alpha: float | None = None

    def value(self, x):
        raise NotImplementedError

    def primitive(self, x):
        """``int_0^x mu``."""
        raise NotImplementedError

    def inverse_primitive(self, x):
        """``int_0^x 1/mu``; ``inf`` when 1/mu is not integrable."""
        raise NotImplementedError

    def cell_integral(self, a: float, b: float) -> float:
        if not (0.0 <= a):
            raise ArgumentError(f"cell start must be >= 0, got {a}")
        if b < a:
            raise ArgumentError(f"cell end {b} precedes start {a}")
        return float(self._segment(np.asarray([a], float), np.asarray([b], float))[0])

    def cell_integrals(self, nodes) -> np.ndarray:
        """Exact ``int mu`` over each interval ``[nodes[j], nodes[j+1]]``."""
        nodes = np.asarray(nodes, dtype=float)
        return self._segment(nodes[:-1], nodes[1:])

    def inverse_integral(self, a: float, b: float) -> float:
        if b < a or a < 0:
            raise ArgumentError(f"invalid interval ({a}, {b})")
        return float(self.inverse_primitive(b) - self.inverse_primitive(a))

    def _segment(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.primitive(b) - self.primitive(a)

    def moments(self, nodes) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-cell ``int mu t**p dx`` for p = 0, 1, 2 with ``t = (x-a)/(b-a)``."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PowerLaw(Weight):
    """``mu(x) = x**alpha``."""

    alpha: float = 0.0

    def __post_init__(self):
        if not (-1.0 < self.alpha < 1.0):
            raise DomainError(f"alpha must lie in (-1, 1), got {self.alpha}")

    def value(self, x):
        return np.power(np.asarray(x, dtype=float), self.alpha)

    def primitive(self, x):
        x = np.asarray(x, dtype=float)
        return np.power(x, self.alpha + 1.0) / (self.alpha + 1.0)

    def inverse_primitive(self, x):
        x = np.asarray(x, dtype=float)
        return np.power(x, 1.0 - self.alpha) / (1.0 - self.alpha)

    def _segment(self, a, b):
        # a**(alpha+1) * expm1 form avoids cancellation on thin cells
        a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
        p = self.alpha + 1.0
        out = np.power(b, p) / p - np.power(a, p) / p
        thin = (a > 0.0) & (b - a <= a)
        aa, bb = a[thin], b[thin]
        out[thin] = np.power(aa, p) * np.expm1(p * np.log1p((bb - aa) / aa)) / p
        return out

    def moments(self, nodes):
        nodes = np.asarray(nodes, dtype=float)
        a, b = nodes[:-1], nodes[1:]
        h = b - a
        al = self.alpha
        m = [np.empty_like(h) for _ in range(3)]
        m[0][:] = self._segment(a, b)
        zero = a == 0.0
        for p in (1, 2):
            m[p][zero] = np.power(b[zero], al + 1.0) / (al + 1.0 + p)
        nz = ~zero
        r = np.zeros_like(h)
        r[nz] = h[nz] / a[nz]
        thin = nz & (r < 0.5)
        wide = nz & (r >= 0.5)
        if np.any(thin):
            # (1 + r t)**alpha is analytic well beyond [0, 1] here
            t = _GL_T[None, :]
            base = h[thin, None] * np.power(a[thin, None], al) * np.power(1.0 + r[thin, None] * t, al)
            for p in (1, 2):
                m[p][thin] = np.sum(base * t**p * _GL_W[None, :], axis=1)
        if np.any(wide):
            aa, bb, hh = a[wide], b[wide], h[wide]
            i = [(np.power(bb, al + 1 + k) - np.power(aa, al + 1 + k)) / (al + 1 + k) for k in range(3)]
            m[1][wide] = (i[1] - aa * i[0]) / hh
            m[2][wide] = (i[2] - 2 * aa * i[1] + aa * aa * i[0]) / hh**2
        return m[0], m[1], m[2]

    def to_dict(self):
        return {"kind": "power", "alpha": float(self.alpha)}


@dataclass(frozen=True)
class Tabulated(Weight):
    """Piecewise-constant weight.

    ``breakpoints[0]`` must be 0; ``values[i]`` holds on
    ``[breakpoints[i], breakpoints[i+1])`` and the last value extends to infinity.
    """

    breakpoints: tuple = (0.0,)
    values: tuple = (1.0,)
    _cum: np.ndarray = field(init=False, repr=False, compare=False)
    _icum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.ndim != 1 or bp.shape != vals.shape or bp.size == 0:
            raise DataError("breakpoints and values must be 1-D of equal length")
        if bp[0] != 0.0 or np.any(np.diff(bp) <= 0):
            raise DataError("breakpoints must start at 0 and strictly increase")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise DataError("tabulated weight values must be finite and nonnegative")
        object.__setattr__(self, "breakpoints", tuple(bp.tolist()))
        object.__setattr__(self, "values", tuple(vals.tolist()))
        widths = np.diff(bp)
        object.__setattr__(self, "_cum", np.concatenate([[0.0], np.cumsum(vals[:-1] * widths)]))
        with np.errstate(divide="ignore"):
            inv = np.where(vals > 0, 1.0 / np.where(vals > 0, vals, 1.0), np.inf)
        icum = np.concatenate([[0.0], np.cumsum(inv[:-1] * widths)])
        object.__setattr__(self, "_icum", icum)

    @classmethod
    def from_csv(cls, path) -> "Tabulated":
        xs, mus = [], []
        with Path(path).open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or set(reader.fieldnames) != {"x", "mu"}:
                raise DataError(f"{path}: expected columns x,mu")
            for row in reader:
                xs.append(float(row["x"]))
                mus.append(float(row["mu"]))
        return cls(tuple(xs), tuple(mus))

    def _locate(self, x):
        bp = np.asarray(self.breakpoints)
        return np.clip(np.searchsorted(bp, x, side="right") - 1, 0, bp.size - 1)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.values)[self._locate(x)]

    def primitive(self, x):
        x = np.asarray(x, dtype=float)
        k = self._locate(x)
        bp = np.asarray(self.breakpoints)
        return self._cum[k] + np.asarray(self.values)[k] * (x - bp[k])

    def inverse_primitive(self, x):
        x = np.asarray(x, dtype=float)
        k = self._locate(x)
        bp = np.asarray(self.breakpoints)
        v = np.asarray(self.values)[k]
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = np.where(x > bp[k], np.where(v > 0, (x - bp[k]) / np.where(v > 0, v, 1.0), np.inf), 0.0)
        return self._icum[k] + tail

    def moments(self, nodes):
        nodes = np.asarray(nodes, dtype=float)
        a, b = nodes[:-1], nodes[1:]
        h = b - a
        bp = np.asarray(self.breakpoints)
        vals = np.asarray(self.values)
        edges = np.concatenate([bp, [np.inf]])
        m = [np.zeros_like(h) for _ in range(3)]
        for i, c in enumerate(vals):
            lo = np.clip(edges[i], a, b)
            hi = np.clip(edges[i + 1], a, b)
            t0 = (lo - a) / h
            t1 = (hi - a) / h
            for p in range(3):
                m[p] += c * h * (t1 ** (p + 1) - t0 ** (p + 1)) / (p + 1)
        return m[0], m[1], m[2]

    def to_dict(self):
        return {"kind": "table", "breakpoints": list(self.breakpoints), "values": list(self.values)}


def weight_from_dict(spec: dict, base_dir: Path | None = None) -> Weight:
    kind = spec.get("kind")
    if kind == "power":
        return PowerLaw(float(spec.get("alpha", 0.0)))
    if kind == "table":
        if "path" in spec:
            path = Path(spec["path"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return Tabulated.from_csv(path)
        return Tabulated(tuple(spec["breakpoints"]), tuple(spec["values"]))
    raise DataError(f"unknown weight kind {kind!r}")


def _van_der_corput(count: int) -> np.ndarray:
    out = np.empty(count)
    for i in range(count):
        n, denom, q = i + 1, 1.0, 0.0
        while n:
            denom *= 2.0
            n, r = divmod(n, 2)
            q += r / denom
        out[i] = q
    return out


def a2_constant(w: Weight, b_max: float, samples: int, pair_limit: int = 256) -> float:
    """Largest sampled A2 ratio ``(int mu)(int 1/mu)/(b-a)**2`` on ``[0, b_max]``.

    Sample points are a nested sequence (0, b_max, then van der Corput points),
    so the result never decreases when ``samples`` grows. All intervals
    ``[0, b]`` are tested; general ``[a, b]`` pairs are drawn from the first
    ``pair_limit`` points. Returns ``inf`` if 1/mu fails to be integrable on a
    sampled interval, which is how an A2 violation is reported.
    """
    if samples < 16:
        raise ArgumentError("a2_constant needs at least 16 samples")
    if b_max <= 0:
        raise ArgumentError("b_max must be positive")
    pts = np.concatenate([[0.0, 1.0], _van_der_corput(samples - 2)]) * b_max
    pts = np.unique(pts)
    pmu = w.primitive(pts)
    pinv = w.inverse_primitive(pts)
    # anchored at 0
    b = pts[1:]
    with np.errstate(invalid="ignore"):
        anchored = (pmu[1:] - pmu[0]) * (pinv[1:] - pinv[0]) / b**2
    best = float(np.max(anchored))
    k = min(pts.size, pair_limit)
    sub = np.sort(np.concatenate([[0.0, 1.0], _van_der_corput(max(k - 2, 0))]) * b_max)
    sub = np.unique(sub)
    smu = w.primitive(sub)
    sinv = w.inverse_primitive(sub)
    i, j = np.triu_indices(sub.size, k=1)
    with np.errstate(invalid="ignore"):
        ratios = (smu[j] - smu[i]) * (sinv[j] - sinv[i]) / (sub[j] - sub[i]) ** 2
    best = max(best, float(np.max(ratios)))
    if not math.isfinite(best):
        return math.inf
    return best


@dataclass(frozen=True)
class GrowthReport:
    C_hat: float
    ok: bool
    growing: bool
    ratios: tuple


def check_growth(w: Weight, R_list) -> GrowthReport:
    """Sampled constant in ``int_0^R mu <= C R**2`` for ``R >= 1``.

    ``growing`` flags a sampled ratio at the largest radius exceeding twice the
    ratio at the smallest one, the signature of super-quadratic growth.
    """
    R = np.sort(np.asarray(list(R_list), dtype=float))
    if R.size == 0:
        raise ArgumentError("R_list must be nonempty")
    if np.any(R < 1.0):
        raise ArgumentError("radii must be >= 1")
    ratios = w.primitive(R) / R**2
    c_hat = float(np.max(ratios))
    return GrowthReport(
        C_hat=c_hat,
        ok=math.isfinite(c_hat),
        growing=bool(ratios[-1] > 2.0 * ratios[0]),
        ratios=tuple(float(r) for r in ratios),
    )
