"""Run configuration (strict JSON schema) and deterministic report output."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import DataError
from .grid import GridFunction, HalfSpaceGrid
from .nonlinear import BULK, REACTIONS, bulk, reaction
from .weights import Weight, weight_from_dict


def _strict(d, allowed: set, where: str) -> dict:
    if not isinstance(d, dict):
        raise DataError(f"{where}: expected an object")
    extra = set(d) - allowed
    if extra:
        raise DataError(f"{where}: unknown keys {sorted(extra)}")
    return d


U0_KINDS = {"tanh_layer", "zero", "constant", "random", "saddle"}
FAR_FIELD_KINDS = {"extension", "initial", "layer", "zero"}


@dataclass(frozen=True)
class StabilityConfig:
    tol: float = 1e-8
    max_iter: int = 200
    direction: int = 0
    window: tuple | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "StabilityConfig":
        _strict(d, {f.name for f in fields(cls)}, "stability")
        w = d.get("window")
        if w is not None and len(w) != 3:
            raise DataError("stability.window must be [y_lo, y_hi, x_hi]")
        return cls(float(d.get("tol", 1e-8)), int(d.get("max_iter", 200)), int(d.get("direction", 0)), None if w is None else tuple(float(c) for c in w))


@dataclass(frozen=True)
class AuditConfig:
    phi: tuple = ("capacity:4", "capacity:8", "bump:8")
    eps_grad: float | None = None
    energy_radii: tuple = (2.0, 4.0, 8.0, 16.0)

    @classmethod
    def from_dict(cls, d: dict) -> "AuditConfig":
        _strict(d, {f.name for f in fields(cls)}, "audit")
        phi = tuple(d.get("phi", cls.phi))
        for spec in phi:
            parse_phi(spec)
        eps = d.get("eps_grad")
        radii = tuple(float(r) for r in d.get("energy_radii", cls.energy_radii))
        return cls(phi, None if eps is None else float(eps), radii)


def parse_phi(spec: str) -> tuple[str, float]:
    try:
        kind, R = spec.split(":")
        R = float(R)
    except ValueError:
        raise DataError(f"bad test-function selector {spec!r}; use capacity:R or bump:R") from None
    if kind not in ("capacity", "bump"):
        raise DataError(f"unknown test-function kind {kind!r}")
    return kind, R


@dataclass(frozen=True)
class RunConfig:
    grid: dict
    weight: dict = field(default_factory=lambda: {"kind": "power", "alpha": 0.0})
    f: dict = field(default_factory=lambda: {"name": "scaled_sine"})
    g: dict = field(default_factory=lambda: {"name": "zero"})
    u0: dict = field(default_factory=lambda: {"name": "tanh_layer", "width": 2.0})
    far_field: str = "extension"
    tol: float = 1e-10
    max_iter: int = 50
    stability: StabilityConfig = field(default_factory=StabilityConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "RunConfig":
        _strict(d, {f.name for f in fields(cls)}, "config")
        if "grid" not in d:
            raise DataError("config: 'grid' is required")
        grid = HalfSpaceGrid.from_dict(_strict(d["grid"], {"n", "L_y", "N_y", "L_x", "M", "gamma", "periodic"}, "grid"))
        weight = dict(d.get("weight", {"kind": "power", "alpha": 0.0}))
        weight_from_dict(weight, base_dir)
        f = _strict(dict(d.get("f", {"name": "scaled_sine"})), {"name"}, "f")
        g = _strict(dict(d.get("g", {"name": "zero"})), {"name"}, "g")
        reaction(f["name"])
        bulk(g["name"])
        u0 = _strict(dict(d.get("u0", {"name": "tanh_layer", "width": 2.0})), {"name", "width", "value", "amplitude", "perturbation"}, "u0")
        if u0.get("name") not in U0_KINDS:
            raise DataError(f"u0.name must be one of {sorted(U0_KINDS)}")
        far = d.get("far_field", "extension")
        if far not in FAR_FIELD_KINDS:
            raise DataError(f"far_field must be one of {sorted(FAR_FIELD_KINDS)}")
        tol = float(d.get("tol", 1e-10))
        max_iter = int(d.get("max_iter", 50))
        if not tol > 0 or max_iter < 0:
            raise DataError("tol must be positive and max_iter nonnegative")
        return cls(
            grid=grid.to_dict() | ({"periodic": list(grid.periodic)} if "periodic" in d["grid"] else {}),
            weight=weight,
            f=f,
            g=g,
            u0=u0,
            far_field=far,
            tol=tol,
            max_iter=max_iter,
            stability=StabilityConfig.from_dict(d.get("stability", {})),
            audit=AuditConfig.from_dict(d.get("audit", {})),
            seed=int(d.get("seed", 0)),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stability"]["window"] = None if self.stability.window is None else list(self.stability.window)
        d["audit"]["phi"] = list(self.audit.phi)
        d["audit"]["energy_radii"] = list(self.audit.energy_radii)
        return d

    # -- derived objects ---------------------------------------------------

    def make_grid(self) -> HalfSpaceGrid:
        return HalfSpaceGrid.from_dict(self.grid)

    def make_weight(self, base_dir: Path | None = None) -> Weight:
        return weight_from_dict(self.weight, base_dir)

    def make_u0(self, grid: HalfSpaceGrid) -> GridFunction:
        spec = self.u0
        name = spec["name"]
        mesh = grid.mesh
        if name == "tanh_layer":
            width = float(spec.get("width", 2.0))
            v = np.tanh(mesh[0] / width) * np.ones(grid.shape)
            amp = float(spec.get("perturbation", 0.0))
            if amp:
                # smooth deterministic bump that breaks the exact layer shape
                v = v + amp * np.sin(mesh[0]) * np.exp(-(mesh[0] ** 2) / 16.0)
        elif name == "zero":
            v = np.zeros(grid.shape)
        elif name == "constant":
            v = np.full(grid.shape, float(spec.get("value", 0.0)))
        elif name == "random":
            rng = np.random.default_rng(self.seed)
            v = float(spec.get("amplitude", 1.0)) * rng.uniform(-1.0, 1.0, grid.shape)
        else:  # saddle
            v = mesh[0] ** 2 - mesh[1] ** 2 if grid.n == 2 else mesh[0] ** 2
        return GridFunction(grid, v)


def layer_profile(grid: HalfSpaceGrid) -> np.ndarray:
    """Closed-form layer ``(2/pi) arctan(y1/(1+x))`` of the unit-weight sine problem."""
    return 2.0 / math.pi * np.arctan(grid.mesh[0] / (1.0 + grid.mesh[-1]))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed JSON ({exc})") from None
    return RunConfig.from_dict(data, path.parent)


# -- reports -----------------------------------------------------------------


def _encode(obj) -> str:
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return json.dumps(None)
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items())
        return "{" + ", ".join(items) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_report(obj) -> str:
    """JSON text with every float at 17 significant digits (non-finite -> null)."""
    return _encode(obj) + "\n"


def write_report(obj, path) -> None:
    Path(path).write_text(dumps_report(obj))


__all__ = ["RunConfig", "StabilityConfig", "AuditConfig", "load_config", "dumps_report", "write_report", "parse_phi", "layer_profile", "REACTIONS", "BULK"]
