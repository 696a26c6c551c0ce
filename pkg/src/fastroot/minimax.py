"""Relative-error minimax polynomials for ``z**(-1/b)``.

The solvers work in a local variable ``u = (z - center) / halfwidth`` on
[-1, 1] and in mpmath arithmetic, so that narrow intervals (later stages of an
iteration chain) and high degrees stay well conditioned.  Each
:class:`Polynomial` carries that local form next to its public binary64
coefficients in powers of z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.optimize import minimize_scalar

from . import dd
from .errors import PreconditionError, SolverError

MAX_DEGREE = 8
WORK_DPS = 50
DEFAULT_TOL = 1e-20
MAX_ITER = 100


class _prec:
    """Run a block at WORK_DPS without disturbing the caller's mpmath context."""

    def __enter__(self):
        self._saved = mpmath.mp.dps
        mpmath.mp.dps = WORK_DPS

    def __exit__(self, *exc):
        mpmath.mp.dps = self._saved


@dataclass(frozen=True)
class LocalForm:
    """p(z) = sum coeffs[j] * ((z - center) / halfwidth)**j, coefficients as decimal strings."""

    center: str
    halfwidth: str
    coeffs: tuple

    def mp_coeffs(self):
        return [mpmath.mpf(c) for c in self.coeffs]

    def to_dict(self):
        return {"center": self.center, "halfwidth": self.halfwidth, "coefficients": list(self.coeffs)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["center"], d["halfwidth"], tuple(d["coefficients"]))


@dataclass(frozen=True)
class Polynomial:
    coefficients: tuple
    degree: int
    monic_sign: int | None
    domain: tuple
    minimax_error: float
    local: LocalForm | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if len(self.coefficients) != self.degree + 1:
            raise PreconditionError("coefficients must have length degree + 1")
        if self.monic_sign is not None and self.coefficients[-1] != self.monic_sign:
            raise PreconditionError("monic polynomial must have leading coefficient equal to its sign")

    @property
    def leading(self) -> float:
        return self.coefficients[-1]

    def __call__(self, z):
        """Evaluate in binary64, through the local form when available."""
        z = np.asarray(z, dtype=np.float64)
        if self.local is not None:
            u = (z - float(mpmath.mpf(self.local.center))) / float(mpmath.mpf(self.local.halfwidth))
            cs = [float(mpmath.mpf(c)) for c in self.local.coeffs]
            x = u
        else:
            cs = list(self.coefficients)
            x = z
        acc = np.full_like(x, cs[-1])
        for c in reversed(cs[:-1]):
            acc = acc * x + c
        return acc.item() if acc.ndim == 0 else acc

    def eval_mp(self, z):
        z = mpmath.mpf(z)
        if self.local is None:
            return mpmath.polyval([mpmath.mpf(c) for c in reversed(self.coefficients)], z)
        u = (z - mpmath.mpf(self.local.center)) / mpmath.mpf(self.local.halfwidth)
        return mpmath.polyval(list(reversed(self.local.mp_coeffs())), u)

    def eval_dd(self, z):
        """Evaluate in double-double arithmetic; returns a (hi, lo) pair."""
        z = np.asarray(z, dtype=np.float64)
        if self.local is None:
            x = dd.dd_from(z)
            cs = [(float(c), 0.0) for c in self.coefficients]
        else:
            with _prec():
                center = _split_mp(mpmath.mpf(self.local.center))
                half = _split_mp(mpmath.mpf(self.local.halfwidth))
                cs = [_split_mp(c) for c in self.local.mp_coeffs()]
            num = dd.dd_sub(dd.dd_from(z), tuple(np.full_like(z, v) for v in center))
            x = dd.dd_div(num, tuple(np.full_like(z, v) for v in half))
        acc = tuple(np.full_like(z, v) for v in cs[-1])
        for c in reversed(cs[:-1]):
            acc = dd.dd_add(dd.dd_mul(acc, x), tuple(np.full_like(z, v) for v in c))
        return acc

    def to_dict(self):
        d = {
            "coefficients": [float(c) for c in self.coefficients],
            "degree": self.degree,
            "monic_sign": self.monic_sign,
            "domain": [float(self.domain[0]), float(self.domain[1])],
            "minimax_error": float(self.minimax_error),
        }
        if self.local is not None:
            d["local"] = self.local.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        local = LocalForm.from_dict(d["local"]) if d.get("local") else None
        sign = d.get("monic_sign")
        return cls(tuple(float(c) for c in d["coefficients"]), int(d["degree"]),
                   None if sign is None else int(sign), tuple(d["domain"]),
                   float(d["minimax_error"]), local)

    def scaled(self, factor: float, zfactor: float = 1.0) -> Polynomial:
        """The polynomial ``factor * p(z / zfactor)``.  Drops the minimax metadata
        that no longer applies (domain is mapped, error kept)."""
        with _prec():
            f = mpmath.mpf(factor)
            zf = mpmath.mpf(zfactor)
            if self.local is not None:
                local = LocalForm(_s(mpmath.mpf(self.local.center) * zf),
                                  _s(mpmath.mpf(self.local.halfwidth) * zf),
                                  tuple(_s(c * f) for c in self.local.mp_coeffs()))
            else:
                local = None
            coeffs = tuple(float(mpmath.mpf(c) * f / zf**j) for j, c in enumerate(self.coefficients))
        lead = coeffs[-1]
        sign = int(lead) if abs(lead) == 1.0 else None
        return Polynomial(coeffs, self.degree, sign,
                          (float(self.domain[0] * zfactor), float(self.domain[1] * zfactor)),
                          self.minimax_error, local)


@dataclass(frozen=True)
class Equioscillation:
    nodes: tuple
    peak_errors: tuple

    def spread(self) -> float:
        mags = [abs(e) for e in self.peak_errors]
        return (max(mags) - min(mags)) / max(mags) if max(mags) > 0 else 0.0

    def alternates(self) -> bool:
        return all(e1 * e2 < 0 for e1, e2 in zip(self.peak_errors, self.peak_errors[1:]))

    def to_dict(self):
        return {"nodes": list(self.nodes), "peak_errors": list(self.peak_errors)}


def _s(x) -> str:
    return mpmath.nstr(x, WORK_DPS, strip_zeros=False)


def _split_mp(x):
    hi = float(x)
    return hi, float(x - hi)


def _check_interval(z_min, z_max):
    if not (z_min > 0 and z_max > z_min and math.isfinite(float(z_max))):
        raise PreconditionError(f"need 0 < z_min < z_max, got [{z_min}, {z_max}]")


def _binomial_to_z(local, center, half):
    """Coefficients in powers of z of sum local[j] * ((z - center)/half)**j."""
    n = len(local) - 1
    out = [mpmath.mpf(0)] * (n + 1)
    for j, q in enumerate(local):
        scale = q / half**j
        for i in range(j + 1):
            out[i] += scale * mpmath.binomial(j, i) * (-center) ** (j - i)
    return out


def _z_to_local(zc, center, half):
    """Inverse of :func:`_binomial_to_z`."""
    n = len(zc) - 1
    out = [mpmath.mpf(0)] * (n + 1)
    for j, c in enumerate(zc):
        for i in range(j + 1):
            out[i] += c * mpmath.binomial(j, i) * center ** (j - i) * half**i
    return out


def _make_poly(local, center, half, degree, sign, domain, eps):
    zc = _binomial_to_z(local, center, half)
    coeffs = [float(c) for c in zc]
    if sign is not None:
        coeffs[-1] = float(sign)
    form = LocalForm(_s(center), _s(half), tuple(_s(c) for c in local))
    return Polynomial(tuple(coeffs), degree, sign, (float(domain[0]), float(domain[1])),
                      float(eps), form)


class _Problem:
    """Weighted fit: minimise max |1 - w(z) (F(z) + Q(u))| over the nodes' interval."""

    def __init__(self, b, n_free, z_min, z_max, fixed_degree=None, sign=None):
        self.b = b
        self.k = n_free
        self.lo = mpmath.mpf(z_min)
        self.hi = mpmath.mpf(z_max)
        self.center = (self.lo + self.hi) / 2
        self.half = (self.hi - self.lo) / 2
        self.fixed = None
        if fixed_degree is not None:
            zc = [mpmath.mpf(0)] * fixed_degree + [mpmath.mpf(sign)]
            self.fixed = _z_to_local(zc, self.center, self.half)

    def z(self, u):
        return self.center + self.half * u

    def w(self, u):
        return mpmath.root(self.z(u), self.b)

    def full(self, q):
        if self.fixed is None:
            return list(q)
        out = list(self.fixed)
        for j, c in enumerate(q):
            out[j] += c
        return out

    def err(self, P, u):
        return 1 - self.w(u) * mpmath.polyval(P[::-1], u)

    def solve(self, nodes):
        k = self.k
        A = mpmath.matrix(k + 1, k + 1)
        rhs = mpmath.matrix(k + 1, 1)
        for i, u in enumerate(nodes):
            w = self.w(u)
            for j in range(k):
                A[i, j] = w * u**j
            A[i, k] = (-1) ** i
            f = 0 if self.fixed is None else mpmath.polyval(self.fixed[::-1], u)
            rhs[i] = 1 - w * f
        sol = mpmath.lu_solve(A, rhs)
        return [sol[j] for j in range(k)], sol[k]

    def stationary(self, P):
        # d/dz [z^(1/b) P] = 0  <=>  P + b z P'(z) = 0, written in u
        n = len(P) - 1
        if n == 0:
            return []
        dP = [j * P[j] for j in range(1, n + 1)]
        g = list(P)
        for j, d in enumerate(dP):
            g[j] += self.b * self.center / self.half * d
            g[j + 1] += self.b * d
        while len(g) > 1 and g[-1] == 0:
            g.pop()
        if len(g) < 2:
            return []
        gf = np.array([float(c) for c in g[::-1]])
        scale = np.max(np.abs(gf))
        roots = np.roots(gf / scale)
        dg = [j * g[j] for j in range(1, len(g))]
        out = []
        for r in roots:
            if abs(r.imag) > 1e-6 * (1 + abs(r.real)):
                continue
            x = mpmath.mpf(float(r.real))
            for _ in range(60):
                step = mpmath.polyval(g[::-1], x) / mpmath.polyval(dg[::-1], x)
                x -= step
                if abs(step) < mpmath.mpf(10) ** (-WORK_DPS + 5):
                    break
            if -1 < x < 1:
                out.append(x)
        return sorted(set(out))


def _exchange(cands, vals, count):
    """Select `count` alternating-sign extrema, keeping the global maximum."""
    pts = []
    for u, e in zip(cands, vals):
        if pts and (pts[-1][1] >= 0) == (e >= 0):
            if abs(e) > abs(pts[-1][1]):
                pts[-1] = (u, e)
        else:
            pts.append((u, e))
    while len(pts) > count:
        if abs(pts[0][1]) < abs(pts[-1][1]):
            pts.pop(0)
        else:
            pts.pop()
    return pts


def _remez(prob: _Problem, degree, sign, nodes=None, tol=DEFAULT_TOL, maxiter=MAX_ITER):
    k = prob.k
    count = k + 1
    if nodes is None or len(nodes) != count:
        nodes = [-mpmath.cos(mpmath.pi * i / k) for i in range(count)]
    else:
        nodes = [mpmath.mpf(u) for u in nodes]
    best = None
    for _ in range(maxiter):
        q, _lev = prob.solve(nodes)
        P = prob.full(q)
        cands = [mpmath.mpf(-1)] + prob.stationary(P) + [mpmath.mpf(1)]
        vals = [prob.err(P, u) for u in cands]
        pts = _exchange(cands, vals, count)
        peak = max(abs(v) for v in vals)
        result = (P, pts, peak)
        if best is None or peak < best[2]:
            best = result
        if len(pts) < count:
            # lost alternation; restart the exchange from the best alternating set seen
            break
        mags = [abs(e) for _, e in pts]
        nodes = [u for u, _ in pts]
        if (max(mags) - min(mags)) <= tol * max(mags):
            return _finish(prob, degree, sign, result)
    raise SolverError(f"Remez exchange did not converge in {maxiter} iterations",
                      best=_finish(prob, degree, sign, best))


def _finish(prob, degree, sign, result):
    P, pts, peak = result
    poly = _make_poly(P, prob.center, prob.half, degree, sign, (prob.lo, prob.hi), peak)
    eq = Equioscillation(tuple(float(prob.z(u)) for u, _ in pts), tuple(float(e) for _, e in pts))
    return poly, eq, tuple(u for u, _ in pts)


def linear_closed_form(b: int, z_min: float, z_max: float) -> Polynomial:
    """Degree-1 minimax fit from the three-point equioscillation conditions."""
    _check_interval(z_min, z_max)
    with _prec():
        lo = mpmath.mpf(z_min)
        hi = mpmath.mpf(z_max)
        u = mpmath.root(lo, b)
        v = mpmath.root(hi, b)
        # divided differences written as sums so nothing cancels on narrow intervals
        T = sum(v**j * u ** (b - j) for j in range(b + 1))
        V = u * v * sum(v**j * u ** (b - 1 - j) for j in range(b))
        U = b * (T / (b + 1)) ** (1 + mpmath.mpf(1) / b)
        c0 = 2 * T / (U + V)
        c1 = -2 / (U + V)
        eps = (U - V) / (U + V)
        center = (lo + hi) / 2
        half = (hi - lo) / 2
        local = _z_to_local([c0, c1], center, half)
        form = LocalForm(_s(center), _s(half), tuple(_s(c) for c in local))
        return Polynomial((float(c0), float(c1)), 1, None, (float(z_min), float(z_max)),
                          float(eps), form)


def remez_general(b: int, degree: int, z_min, z_max, nodes=None, tol=DEFAULT_TOL,
                  maxiter=MAX_ITER):
    """Minimax p of the given degree minimising max |1 - z^(1/b) p(z)|."""
    _check_interval(z_min, z_max)
    if not 0 <= degree <= MAX_DEGREE:
        raise PreconditionError(f"degree must be in [0, {MAX_DEGREE}], got {degree}")
    with _prec():
        prob = _Problem(b, degree + 1, z_min, z_max)
        poly, eq, _ = _remez(prob, degree, None, nodes, tol, maxiter)
    return poly, eq


def remez_monic(b: int, degree: int, z_min, z_max, sign: int, nodes=None,
                tol=DEFAULT_TOL, maxiter=MAX_ITER):
    """Minimax p with leading coefficient fixed to ``sign``.

    Degree 0 is the constant 1 (no free coefficients); its error is simply the
    larger endpoint deviation.
    """
    _check_interval(z_min, z_max)
    if sign not in (1, -1):
        raise PreconditionError(f"sign must be +1 or -1, got {sign}")
    if not 0 <= degree <= MAX_DEGREE:
        raise PreconditionError(f"degree must be in [0, {MAX_DEGREE}], got {degree}")
    with _prec():
        if degree == 0:
            return _monic_constant(b, z_min, z_max)
        prob = _Problem(b, degree, z_min, z_max, fixed_degree=degree, sign=sign)
        poly, eq, _ = _remez(prob, degree, sign, nodes, tol, maxiter)
    return poly, eq


def _monic_constant(b, z_min, z_max):
    lo = mpmath.mpf(z_min)
    hi = mpmath.mpf(z_max)
    e = [1 - mpmath.root(lo, b), 1 - mpmath.root(hi, b)]
    center = (lo + hi) / 2
    half = (hi - lo) / 2
    form = LocalForm(_s(center), _s(half), (_s(mpmath.mpf(1)),))
    poly = Polynomial((1.0,), 0, 1, (float(z_min), float(z_max)), float(max(abs(x) for x in e)), form)
    return poly, Equioscillation((float(z_min), float(z_max)), tuple(float(x) for x in e))


def relative_error_at(p: Polynomial, b: int, z):
    """Signed relative error ``1 - z^(1/b) p(z)`` in binary64."""
    z = np.asarray(z, dtype=np.float64)
    out = 1.0 - z ** (1.0 / b) * np.asarray(p(z))
    return out.item() if out.ndim == 0 else out


def relative_error_dd(p: Polynomial, b: int, z):
    """As :func:`relative_error_at` but carried out in double-double arithmetic."""
    z = np.asarray(z, dtype=np.float64)
    prod = dd.dd_mul(dd.dd_root(z, b), p.eval_dd(z))
    return dd.dd_to_float(dd.dd_sub(dd.dd_from(np.ones_like(z)), prod))


def dense_peak(p: Polynomial, b: int, points: int = 10**6) -> float:
    """Largest |relative error| over a uniform grid on the polynomial's domain."""
    z = np.linspace(p.domain[0], p.domain[1], points)
    return float(np.max(np.abs(relative_error_dd(p, b, z))))


def general_leading_sign(b: int, degree: int, z_min, z_max) -> int:
    if degree == 0:
        return 1
    poly, _ = remez_general(b, degree, z_min, z_max)
    return 1 if poly.leading > 0 else -1


def monic_error_for_c(power, degree: int, c: float, sign: int, nodes=None):
    from .derive import z_range

    lo, hi = z_range(power, c)
    if degree == 0:
        return remez_monic(power.b, 0, lo, hi, 1)
    with _prec():
        prob = _Problem(power.b, degree, lo, hi, fixed_degree=degree, sign=sign)
        return _remez(prob, degree, sign, nodes)


def optimize_monic_c(power, degree: int, s: int = -1, scan_points: int = 256):
    """Best c = s + t for a signed-monic refinement of the given degree.

    A uniform scan over t locates the bracket, then a bounded Brent search
    (golden section with parabolic steps) polishes it.  Every Remez solve in the
    polish is warm-started from the nearest scanned equioscillation nodes.
    """
    from .derive import derive_constants

    if degree < 0:
        raise PreconditionError("degree must be non-negative")
    base = derive_constants(power, s)
    sign = 1 if degree == 0 else general_leading_sign(power.b, degree, base.z_min, base.z_max)
    ts = np.arange(scan_points) / scan_points
    errs = []
    warm = {}
    nodes = None
    for t in ts:
        if degree == 0:
            errs.append(monic_error_for_c(power, 0, s + t, sign)[0].minimax_error)
            continue
        try:
            poly, _, nodes = monic_error_for_c(power, degree, s + t, sign, nodes)
        except SolverError:
            poly, _, nodes = monic_error_for_c(power, degree, s + t, sign, None)
        errs.append(poly.minimax_error)
        warm[float(t)] = nodes
    i = int(np.argmin(errs))
    lo_t = ts[i - 1] if i > 0 else 0.0
    hi_t = ts[i + 1] if i + 1 < scan_points else 1.0 - 1e-12
    seed = warm.get(float(ts[i]))

    def objective(t):
        if degree == 0:
            return monic_error_for_c(power, 0, s + t, sign)[0].minimax_error
        try:
            return monic_error_for_c(power, degree, s + t, sign, seed)[0].minimax_error
        except SolverError:
            return monic_error_for_c(power, degree, s + t, sign, None)[0].minimax_error

    res = minimize_scalar(objective, bounds=(lo_t, hi_t), method="bounded",
                          options={"xatol": 1e-13, "maxiter": 200})
    t_best = float(res.x) if res.fun <= errs[i] else float(ts[i])
    c = s + t_best
    if degree == 0:
        poly, _ = monic_error_for_c(power, 0, c, sign)
    else:
        poly, _, _ = monic_error_for_c(power, degree, c, sign, seed)
    return c, poly
