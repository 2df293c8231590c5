"""Quadrature rules on [0, 1] and discrete-gradient strategies.

A discrete gradient ``D(x, y)`` satisfies ``D(x, y) . (y - x) = I(y) - I(x)``.
The line average of ``grad I`` is one; replacing the integral by a rule of
order ``q`` keeps the identity only for polynomial ``I`` of degree ``<= q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import Invariant
from .errors import ConfigError

MAX_ORDER = 20


def verify_order(rule) -> int:
    """Largest ``q`` with ``sum b_i c_i**j == 1/(j+1)`` for every ``j < q`` (capped at 20)."""
    nodes, weights = rule.nodes, rule.weights
    q = 0
    for j in range(MAX_ORDER):
        moment = math.fsum(b * c**j for c, b in zip(nodes, weights))
        if abs(moment - 1.0 / (j + 1)) > 1e-12:
            break
        q = j + 1
    return q


@dataclass(frozen=True)
class QuadratureRule:
    nodes: tuple
    weights: tuple
    claimed_order: int
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(float(c) for c in self.nodes))
        object.__setattr__(self, "weights", tuple(float(b) for b in self.weights))
        if len(self.nodes) != len(self.weights) or not self.nodes:
            raise ConfigError("nodes and weights must be non-empty and of equal length")
        if any(not 0.0 <= c <= 1.0 for c in self.nodes):
            raise ConfigError("quadrature nodes must lie in [0, 1]")
        if abs(math.fsum(self.weights) - 1.0) > 1e-14:
            raise ConfigError("weights must sum to 1")
        actual = verify_order(self)
        if actual < self.claimed_order:
            raise ConfigError(
                f"rule {self.name!r} claims order {self.claimed_order} but verifies to {actual}"
            )


_R3 = 1.0 / math.sqrt(3.0)
_R35 = math.sqrt(3.0 / 5.0)

_BUILTIN = {
    "midpoint": ((0.5,), (1.0,), 2),
    "trapezoid": ((0.0, 1.0), (0.5, 0.5), 2),
    "simpson": ((0.0, 0.5, 1.0), (1 / 6, 4 / 6, 1 / 6), 4),
    "gauss2": (((1 - _R3) / 2, (1 + _R3) / 2), (0.5, 0.5), 4),
    "gauss3": (((1 - _R35) / 2, 0.5, (1 + _R35) / 2), (5 / 18, 8 / 18, 5 / 18), 6),
}


def builtin_rule(name: str) -> QuadratureRule:
    try:
        nodes, weights, q = _BUILTIN[name]
    except KeyError:
        raise ConfigError(f"unknown quadrature rule {name!r}; choose from {sorted(_BUILTIN)}") from None
    return QuadratureRule(nodes, weights, q, name)


def rule_names():
    return sorted(_BUILTIN)


@dataclass(frozen=True)
class ExactAverage:
    """Closed-form line average supplied by the invariant."""

    def applicable(self, inv: Invariant) -> bool:
        return inv.exact_avg_gradient is not None

    def __str__(self):
        return "exact"


@dataclass(frozen=True)
class QuadratureAverage:
    rule: QuadratureRule

    def applicable(self, inv: Invariant) -> bool:
        return True

    def __str__(self):
        return f"quadrature:{self.rule.name}"


@dataclass(frozen=True)
class SeparableCoordinate:
    """Coordinate-wise difference quotients for ``I(x) = sum_k I_k(x^k)``."""

    rel_threshold: float = 1e-8

    def applicable(self, inv: Invariant) -> bool:
        return inv.separable_parts is not None

    def __str__(self):
        return "separable"


DiscreteGradientStrategy = Union[ExactAverage, QuadratureAverage, SeparableCoordinate]


def parse_strategy(text: str) -> DiscreteGradientStrategy:
    """``exact`` | ``quadrature:<rule>`` | ``separable``."""
    if text == "exact":
        return ExactAverage()
    if text == "separable":
        return SeparableCoordinate()
    if text.startswith("quadrature:"):
        return QuadratureAverage(builtin_rule(text.split(":", 1)[1]))
    raise ConfigError(f"unknown discrete-gradient strategy {text!r}")


def averaged_gradient(invariant: Invariant, x, y, strategy: DiscreteGradientStrategy) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not strategy.applicable(invariant):
        raise ConfigError(f"strategy {strategy} is not applicable to this invariant")
    if isinstance(strategy, ExactAverage):
        return invariant.exact_avg_gradient(x, y)
    if isinstance(strategy, QuadratureAverage):
        rule = strategy.rule
        delta = y - x
        out = None
        for c, b in zip(rule.nodes, rule.weights):
            term = b * invariant.gradient(x + c * delta)
            out = term if out is None else out + term
        return out
    # separable: per-coordinate difference quotient, derivative at the midpoint
    # when the segment is too short for the quotient to carry any digits
    cols = []
    for k, (ik, dik) in enumerate(invariant.separable_parts):
        xk, yk = x[..., k], y[..., k]
        diff = yk - xk
        small = np.abs(diff) <= strategy.rel_threshold * np.maximum(
            1.0, np.maximum(np.abs(xk), np.abs(yk))
        )
        safe = np.where(small, 1.0, diff)
        quotient = (ik(yk) - ik(xk)) / safe
        cols.append(np.where(small, dik(0.5 * (xk + yk)), quotient))
    return np.stack(cols, axis=-1)
