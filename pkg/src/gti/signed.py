"""Sign / log-magnitude representation of real numbers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NEG_INF = -math.inf


@dataclass(frozen=True)
class SignedLogValue:
    """A real number stored as ``sign * exp(log_mag)``.

    ``sign`` is one of -1, 0, +1 and ``sign == 0`` iff ``log_mag == -inf``.
    """

    sign: int
    log_mag: float

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or +1, got {self.sign!r}")
        if math.isnan(self.log_mag):
            raise ValueError("log_mag is NaN")
        if (self.sign == 0) != (self.log_mag == NEG_INF):
            raise ValueError(
                f"inconsistent SignedLogValue(sign={self.sign}, log_mag={self.log_mag})"
            )

    @classmethod
    def zero(cls) -> "SignedLogValue":
        return cls(0, NEG_INF)

    @classmethod
    def from_real(cls, value: float) -> "SignedLogValue":
        value = float(value)
        if math.isnan(value):
            raise ValueError("cannot represent NaN")
        if value == 0.0:
            return cls.zero()
        return cls(1 if value > 0 else -1, math.log(abs(value)))

    @classmethod
    def from_log(cls, log_mag: float, sign: int = 1) -> "SignedLogValue":
        if log_mag == NEG_INF:
            return cls.zero()
        return cls(sign, float(log_mag))

    def to_real(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_mag)

    def __neg__(self) -> "SignedLogValue":
        return SignedLogValue(-self.sign, self.log_mag)

    def __mul__(self, other: "SignedLogValue") -> "SignedLogValue":
        if self.sign == 0 or other.sign == 0:
            return SignedLogValue.zero()
        return SignedLogValue(self.sign * other.sign, self.log_mag + other.log_mag)

    def __add__(self, other: "SignedLogValue") -> "SignedLogValue":
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        hi, lo = (self, other) if self.log_mag >= other.log_mag else (other, self)
        delta = lo.log_mag - hi.log_mag  # <= 0
        if hi.sign == lo.sign:
            return SignedLogValue(hi.sign, hi.log_mag + math.log1p(math.exp(delta)))
        if delta == 0.0:
            return SignedLogValue.zero()
        return SignedLogValue(hi.sign, hi.log_mag + math.log1p(-math.exp(delta)))

    def __sub__(self, other: "SignedLogValue") -> "SignedLogValue":
        return self + (-other)

    def __float__(self) -> float:
        return self.to_real()


def signed_log_arrays(values):
    """Vectorised ``from_real``: returns ``(sign:int8 array, log_mag array)``."""
    values = np.asarray(values, dtype=float)
    sign = np.sign(values).astype(np.int8)
    with np.errstate(divide="ignore"):
        log_mag = np.log(np.abs(values))
    return sign, log_mag
