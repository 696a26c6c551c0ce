"""Optimal coarse-approximation constant and the exact range of z.

For a power ``x**(-a/b)`` and an integer offset ``s`` the functions here give
the fractional part ``t*`` of the constant ``c = s + t*`` that minimises the
ratio ``z_max / z_min``, together with that interval.  The polynomial fit on
the interval lives in :mod:`fastroot.minimax`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, PreconditionError
from .pseudolog import RationalPower, z_at

LN2 = math.log(2.0)
SQRT2 = math.sqrt(2.0)


def _split_c(c):
    s = math.floor(c)
    return s, c - s


def zeta(r: int, k: int, c: float) -> float:
    """Candidate extreme value of z at a grid or diagonal crossing."""
    if k < 1:
        raise DomainError(f"k must be positive, got {k}")
    if not 0 <= r < k:
        raise DomainError(f"need 0 <= r < k, got r={r}, k={k}")
    s, t = _split_c(c)
    return math.ldexp((1.0 + (r + t) / k) ** k, s - r)


def t0_of(k: int) -> float:
    """Fraction at which the two lower candidates of order k swap roles."""
    if k < 0:
        raise DomainError(f"k must be non-negative, got {k}")
    if k == 0:
        return 1.0
    if k == 1:
        return 1.0 / LN2 - 1.0
    if k == 2:
        return SQRT2 - 1.0
    # 2**(1 - 1/k) - 1 == 1 + 2*expm1(-ln2/k)
    return (k - 1) / (1.0 + 2.0 * math.expm1(-LN2 / k)) - k


def phi_of(k: int) -> float:
    if k < 1:
        raise DomainError(f"k must be positive, got {k}")
    if k == 1:
        return 1.0
    if k == 2:
        return SQRT2
    return 1.0 / math.expm1(LN2 / k) - k + 1


@dataclass(frozen=True)
class DerivedConstants:
    power: RationalPower
    alpha: int
    beta: int
    gamma: int
    t0: float
    phi: float
    r_bar: int
    t1: float
    t_star: float
    s: int
    c: float
    r_alpha: int
    r_gamma: int
    z_min: float
    z_max: float
    rho: float

    def to_dict(self):
        d = asdict(self)
        d["power"] = self.power.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["power"] = RationalPower.from_dict(d["power"])
        return cls(**d)


@dataclass(frozen=True)
class _Shape:
    alpha: int
    beta: int
    gamma: int
    t0: float
    phi: float
    r_bar: int
    t1: float


def _shape(power: RationalPower) -> _Shape:
    alpha = min(power.a, power.b)
    beta = max(power.a, power.b)
    gamma = power.a + power.b
    phi = phi_of(gamma)
    r_bar = math.floor(phi)
    return _Shape(alpha, beta, gamma, t0_of(alpha), phi, r_bar, phi - r_bar)


def _indices(sh: _Shape, t: float):
    r_alpha = 0 if t < sh.t0 else sh.alpha - 1
    r_gamma = sh.r_bar if t < sh.t1 else sh.r_bar - 1
    return r_alpha, r_gamma


def z_range(power: RationalPower, c: float):
    """Exact (z_min, z_max) of the coarse approximation for any constant c."""
    sh = _shape(power)
    _, t = _split_c(c)
    r_alpha, r_gamma = _indices(sh, t)
    return zeta(r_alpha, sh.alpha, c), zeta(r_gamma, sh.gamma, c)


def rho_of(power: RationalPower, c: float) -> float:
    lo, hi = z_range(power, c)
    return hi / lo


def optimal_t(power: RationalPower) -> float:
    sh = _shape(power)
    if sh.alpha == 1:
        lo = (sh.r_bar - 1) / sh.beta
        hi = sh.r_bar / sh.beta
        return min(max(sh.t1, lo), hi)
    return sh.t0


def derive_constants(power: RationalPower, s: int = -1) -> DerivedConstants:
    if int(s) != s:
        raise PreconditionError(f"s must be an integer, got {s!r}")
    s = int(s)
    sh = _shape(power)
    t_star = optimal_t(power)
    c = s + t_star
    r_alpha, r_gamma = _indices(sh, t_star)
    z_min = zeta(r_alpha, sh.alpha, c)
    z_max = zeta(r_gamma, sh.gamma, c)
    return DerivedConstants(
        power=power, alpha=sh.alpha, beta=sh.beta, gamma=sh.gamma,
        t0=sh.t0, phi=sh.phi, r_bar=sh.r_bar, t1=sh.t1, t_star=t_star,
        s=s, c=c, r_alpha=r_alpha, r_gamma=r_gamma,
        z_min=z_min, z_max=z_max, rho=z_max / z_min,
    )


def crossing_points(power: RationalPower, c: float):
    """X values in one period [0, b) where the grid lines of X, Y or X - Y cross.

    z is smooth inside each cell of the grid formed by integer X, integer Y
    and integer X - Y, so its extrema over a period sit on these points or at
    interior stationary points, which lie on the diagonals.
    """
    a, b = power.a, power.b
    period = float(b)
    pts = [np.arange(b, dtype=np.float64)]
    # integer Y = j  ->  X = (c - b j) / a
    j_lo = math.floor((c - a * period) / b) - 1
    j_hi = math.ceil(c / b) + 1
    js = np.arange(j_lo, j_hi + 1, dtype=np.float64)
    pts.append((c - b * js) / a)
    # integer X - Y = w  ->  X = (c + b w) / (a + b)
    w_lo = math.floor(-c / b) - 1
    w_hi = math.ceil(((a + b) * period - c) / b) + 1
    ws = np.arange(w_lo, w_hi + 1, dtype=np.float64)
    pts.append((c + b * ws) / (a + b))
    X = np.concatenate(pts)
    X = np.mod(X, period)
    return np.unique(X)


def z_range_oracle(power: RationalPower, c: float, grid: int = 10**6):
    """Brute-force (min, max) of z over one period of X.

    Independent of the closed forms above: it samples z directly on a uniform
    grid and at every grid-line crossing, where the extrema must lie.
    """
    if grid < 1000:
        raise PreconditionError(f"grid must be at least 1000, got {grid}")
    X = np.linspace(0.0, float(power.b), grid, endpoint=False)
    X = np.concatenate([X, crossing_points(power, c)])
    z = np.asarray(z_at(X, power, c))
    # approach each crossing from the left too, z is continuous but floor() is not
    Xc = crossing_points(power, c)
    zl = np.asarray(z_at(Xc + float(power.b) - 1e-15 * power.b, power, c))
    return float(min(z.min(), zl.min())), float(max(z.max(), zl.max()))
