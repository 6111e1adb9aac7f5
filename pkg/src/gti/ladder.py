"""Inverse-temperature schedules and the quadrature rules over them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EstimationError

QUADRATURES = ("trapezoid", "left-riemann")


@dataclass(frozen=True)
class Ladder:
    betas: tuple
    power: float = 1.0

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=float)
        if b.ndim != 1 or len(b) < 2:
            raise ConfigurationError("a ladder needs at least two nodes")
        if b[0] != 0.0 or b[-1] != 1.0:
            raise ConfigurationError("ladder must start at 0 and end at 1")
        if np.any(np.diff(b) <= 0):
            raise ConfigurationError("ladder must be strictly increasing")
        object.__setattr__(self, "betas", tuple(float(v) for v in b))

    @property
    def n(self) -> int:
        return len(self.betas)

    def __len__(self):
        return len(self.betas)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.betas)


def make_schedule(n: int, power: float = 5.0) -> Ladder:
    """Powered-fraction grid ``beta_i = ((i-1)/(n-1))**power``."""
    if int(n) != n or n < 2:
        raise ConfigurationError(f"n must be an integer >= 2, got {n}")
    if not power > 0:
        raise ConfigurationError(f"power must be positive, got {power}")
    n = int(n)
    frac = np.arange(n, dtype=float) / (n - 1)
    betas = frac**power
    betas[0], betas[-1] = 0.0, 1.0
    return Ladder(tuple(betas), float(power))


def _checked(ladder: Ladder, values) -> tuple:
    v = np.asarray(values, dtype=float)
    if v.shape != (ladder.n,):
        raise ConfigurationError(f"expected {ladder.n} node values, got shape {v.shape}")
    bad = np.flatnonzero(~np.isfinite(v))
    if bad.size:
        i = int(bad[0])
        raise EstimationError(f"non-finite node value {v[i]} at node {i}", index=i)
    return ladder.as_array(), v


def trapezoid(ladder: Ladder, values) -> float:
    b, v = _checked(ladder, values)
    return float(np.sum(np.diff(b) * (v[1:] + v[:-1]) / 2.0))


def left_riemann(ladder: Ladder, values) -> float:
    b, v = _checked(ladder, values)
    return float(np.sum(np.diff(b) * v[:-1]))


def quadrature_weights(ladder: Ladder, rule: str = "trapezoid") -> np.ndarray:
    """Weights ``w`` with ``integrate(ladder, v, rule) == w @ v`` (up to rounding)."""
    d = np.diff(ladder.as_array())
    w = np.zeros(ladder.n)
    if rule == "trapezoid":
        w[:-1] += d / 2.0
        w[1:] += d / 2.0
    elif rule == "left-riemann":
        w[:-1] = d
    else:
        raise ConfigurationError(f"unknown quadrature {rule!r}; choose from {QUADRATURES}")
    return w


def integrate(ladder: Ladder, values, rule: str = "trapezoid") -> float:
    if rule == "trapezoid":
        return trapezoid(ladder, values)
    if rule == "left-riemann":
        return left_riemann(ladder, values)
    raise ConfigurationError(f"unknown quadrature {rule!r}; choose from {QUADRATURES}")
