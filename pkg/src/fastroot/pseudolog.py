"""Real-valued model of the float bit pattern / logarithm correspondence.

``pseudolog(x)`` is the piecewise-linear function that equals ``log2(x)`` at
powers of two and interpolates linearly between them.  Everything here works
on Python floats and on numpy arrays alike.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np

from .errors import DomainError, PreconditionError

# keeps 2**E representable in binary64
PSEUDOLOG_INV_LIMIT = 1100.0


@dataclass(frozen=True)
class RationalPower:
    """The exponent of the target function ``x**(-a/b)``, in lowest terms."""

    a: int
    b: int

    def __post_init__(self):
        if int(self.a) != self.a or int(self.b) != self.b:
            raise PreconditionError(f"a and b must be integers, got {self.a!r}, {self.b!r}")
        if self.a < 1 or self.b < 1:
            raise PreconditionError(f"a and b must be positive, got a={self.a}, b={self.b}")
        if gcd(self.a, self.b) != 1:
            raise PreconditionError(f"a={self.a} and b={self.b} are not coprime")

    @property
    def exponent(self) -> float:
        return -self.a / self.b

    def __str__(self):
        return f"x^(-{self.a}/{self.b})"

    def to_dict(self):
        return {"a": self.a, "b": self.b}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["a"]), int(d["b"]))


@dataclass(frozen=True)
class ExpMant:
    exponent: int
    mantissa: float


def _scalar_out(template, value):
    if np.ndim(template) == 0 and not isinstance(template, np.ndarray):
        return float(value)
    return value


def _check_positive(x):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("pseudolog requires finite positive arguments")
    return arr


def _split(x):
    # frexp is exact: x = f * 2**e with f in [0.5, 1)
    f, e = np.frexp(x)
    return e - 1, 2.0 * f - 1.0


def decompose(x) -> ExpMant:
    """Split a positive scalar into exponent ``E = floor(log2 x)`` and mantissa in [0, 1)."""
    arr = _check_positive(x)
    if arr.ndim:
        raise DomainError("decompose takes a scalar; use pseudolog for arrays")
    e, m = _split(arr)
    return ExpMant(int(e), float(m))


def pseudolog(x):
    arr = _check_positive(x)
    e, m = _split(arr)
    return _scalar_out(x, e + m)


def pseudolog_inv(X):
    arr = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(np.abs(arr) > PSEUDOLOG_INV_LIMIT):
        raise DomainError(f"pseudolog_inv is defined for |X| <= {PSEUDOLOG_INV_LIMIT}")
    e = np.floor(arr)
    return _scalar_out(X, np.ldexp(1.0 + (arr - e), e.astype(np.int64)))


def coarse_y(x, power: RationalPower, c: float):
    """The bit-manipulation estimate ``L^-1((c - a L(x)) / b)``."""
    return pseudolog_inv((c - power.a * pseudolog(x)) / power.b)


def z_at(X, power: RationalPower, c: float):
    """Auxiliary variable ``z = x**a * y**b`` as a function of ``X = L(x)``.

    Evaluated from exponents and mantissas so that huge or tiny ``x`` never
    overflow the intermediate powers.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = (c - power.a * X) / power.b
    ex = np.floor(X)
    ey = np.floor(Y)
    mx = X - ex
    my = Y - ey
    scale = power.a * ex + power.b * ey
    z = np.ldexp((1.0 + mx) ** power.a * (1.0 + my) ** power.b, scale.astype(np.int64))
    return z.item() if z.ndim == 0 else z


def z_of(x, power: RationalPower, c: float):
    return z_at(pseudolog(x), power, c)
