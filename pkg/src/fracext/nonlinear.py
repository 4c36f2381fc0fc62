"""Boundary reactions f(u) and bulk terms g(x, u) with their derivatives and primitives.

Primitives are given in closed form so that the discrete energy and residual
stay exactly compatible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Nonlinearity:
    """``f``, ``f'`` and a primitive ``F`` with ``F' = f``."""

    name: str
    value: Callable
    derivative: Callable
    primitive: Callable

    def fd_defect(self, u, h: float = 1e-4) -> float:
        """Largest central-difference mismatch of F' vs f and f' vs df."""
        u = np.asarray(u, dtype=float)
        e1 = (self.primitive(u + h) - self.primitive(u - h)) / (2 * h) - self.value(u)
        e2 = (self.value(u + h) - self.value(u - h)) / (2 * h) - self.derivative(u)
        return float(max(np.max(np.abs(e1)), np.max(np.abs(e2))))


@dataclass(frozen=True)
class BulkNonlinearity:
    """``g(x, u)``, ``g_u`` and ``G`` with ``G_u = g``."""

    name: str
    value: Callable
    derivative: Callable
    primitive: Callable

    def fd_defect(self, x, u, h: float = 1e-4) -> float:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        e1 = (self.primitive(x, u + h) - self.primitive(x, u - h)) / (2 * h) - self.value(x, u)
        e2 = (self.value(x, u + h) - self.value(x, u - h)) / (2 * h) - self.derivative(x, u)
        return float(max(np.max(np.abs(e1)), np.max(np.abs(e2))))


def _zeros(*args):
    return np.zeros(np.broadcast(*args).shape)


PI = np.pi

REACTIONS = {
    "zero": Nonlinearity("zero", _zeros, _zeros, _zeros),
    # F = -(1 + cos(pi u))/pi^2 is minus the double well vanishing at u = +-1
    "scaled_sine": Nonlinearity(
        "scaled_sine",
        lambda u: np.sin(PI * u) / PI,
        lambda u: np.cos(PI * u),
        lambda u: -(1.0 + np.cos(PI * u)) / PI**2,
    ),
    "cubic": Nonlinearity(
        "cubic",
        lambda u: u - u**3,
        lambda u: 1.0 - 3.0 * u**2,
        lambda u: 0.5 * u**2 - 0.25 * u**4,
    ),
}

BULK = {
    "zero": BulkNonlinearity("zero", _zeros, _zeros, _zeros),
    "power_g": BulkNonlinearity(
        "power_g",
        lambda x, u: np.broadcast_to(u**3, np.broadcast(x, u).shape),
        lambda x, u: np.broadcast_to(3.0 * u**2, np.broadcast(x, u).shape),
        lambda x, u: np.broadcast_to(0.25 * u**4, np.broadcast(x, u).shape),
    ),
    "decaying_sine": BulkNonlinearity(
        "decaying_sine",
        lambda x, u: np.exp(-x) * np.sin(u),
        lambda x, u: np.exp(-x) * np.cos(u),
        lambda x, u: np.exp(-x) * (1.0 - np.cos(u)),
    ),
}


def reaction(name: str) -> Nonlinearity:
    try:
        return REACTIONS[name]
    except KeyError:
        raise DataError(f"unknown boundary reaction {name!r}; known: {sorted(REACTIONS)}") from None


def bulk(name: str) -> BulkNonlinearity:
    try:
        return BULK[name]
    except KeyError:
        raise DataError(f"unknown bulk term {name!r}; known: {sorted(BULK)}") from None
