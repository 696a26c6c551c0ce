"""Multi-stage refinement chains and the rescalings that leave their output unchanged.

Stage i maps ``y_i`` to ``y_{i+1} = y_i * p_i(x**a * y_i**b)``.  Each stage is
fitted greedily on the range of z its input can produce.  A chain keeps the
unscaled fits and a list of per-stage output factors ``K_i``; the polynomials
actually evaluated are derived from both, with the last factor chosen so that
the factors multiply to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .derive import derive_constants
from .errors import PreconditionError
from .minimax import WORK_DPS, Polynomial, remez_general, remez_monic
from .pseudolog import RationalPower, coarse_y

SCALE_MODES = ("none", "monic", "shared-u", "custom")


@dataclass(frozen=True)
class IterationChain:
    power: RationalPower
    c: float
    stages: tuple
    stage_errors: tuple
    stage_domains: tuple
    base_stages: tuple = field(repr=False, default=())
    scales: tuple = ()
    scale_mode: str = "none"
    shared_u: float | None = None

    @property
    def degrees(self):
        return tuple(p.degree for p in self.stages)

    @property
    def final_error(self) -> float:
        return self.stage_errors[-1]

    def __call__(self, x):
        """Chain output in binary64 arithmetic (reference semantics for rescaling)."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(coarse_y(x, self.power, self.c), dtype=np.float64)
        xa = x**self.power.a
        for p in self.stages:
            y = y * p(xa * y**self.power.b)
        return y

    def to_dict(self):
        return {
            "power": self.power.to_dict(),
            "c": self.c,
            "stages": [p.to_dict() for p in self.stages],
            "stage_errors": list(self.stage_errors),
            "stage_domains": [list(d) for d in self.stage_domains],
            "base_stages": [p.to_dict() for p in self.base_stages],
            "scales": list(self.scales),
            "scale_mode": self.scale_mode,
            "shared_u": self.shared_u,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            power=RationalPower.from_dict(d["power"]),
            c=float(d["c"]),
            stages=tuple(Polynomial.from_dict(p) for p in d["stages"]),
            stage_errors=tuple(d["stage_errors"]),
            stage_domains=tuple(tuple(x) for x in d["stage_domains"]),
            base_stages=tuple(Polynomial.from_dict(p) for p in d["base_stages"]),
            scales=tuple(d["scales"]),
            scale_mode=d["scale_mode"],
            shared_u=d.get("shared_u"),
        )


def _next_domain(eps, b):
    e = mpmath.mpf(eps)
    return (1 - e) ** b, (1 + e) ** b


def build_chain(power: RationalPower, s: int = -1, degrees=(1,), monic: bool = False) -> IterationChain:
    """Greedy chain: every stage is the minimax fit on the z-range left by its predecessor.

    With ``monic`` every stage is a signed monic of sign (-1)**n instead (degree 0
    then means the constant 1).
    """
    degrees = [int(n) for n in degrees]
    if not degrees:
        raise PreconditionError("degrees must be non-empty")
    if any(n < 1 for n in degrees[1:]):
        raise PreconditionError("stages after the first need degree >= 1 to reduce the error")
    d = derive_constants(power, s)
    polys, errs, doms = [], [], []
    with mpmath.workdps(WORK_DPS):
        lo, hi = mpmath.mpf(d.z_min), mpmath.mpf(d.z_max)
        for n in degrees:
            if monic:
                p, _ = remez_monic(power.b, n, lo, hi, (-1) ** n)
            else:
                p, _ = remez_general(power.b, n, lo, hi)
            polys.append(p)
            errs.append(p.minimax_error)
            doms.append((float(lo), float(hi)))
            lo, hi = _next_domain(p.minimax_error, power.b)
    m = len(polys)
    return IterationChain(power, d.c, tuple(polys), tuple(errs), tuple(doms),
                          tuple(polys), (1.0,) * m, "none", None)


def second_iter_error_formula(eps0: float, b: int = 2) -> float:
    """Second-stage error of a linear-linear square-root chain given the first-stage error."""
    if b != 2:
        raise PreconditionError("closed form only holds for b = 2")
    if not 0 <= eps0 < 1:
        raise PreconditionError(f"need 0 <= eps0 < 1, got {eps0}")
    e2 = eps0 * eps0
    grow = math.expm1(1.5 * math.log1p(e2 / 3.0))
    return (grow + e2) / (grow + 2.0 - e2)


def _apply_scales(chain: IterationChain, scales, mode, shared_u=None) -> IterationChain:
    base = chain.base_stages
    m = len(base)
    b = chain.power.b
    with mpmath.workdps(WORK_DPS):
        ks = [mpmath.mpf(k) for k in scales]
        if m > 1:
            ks[-1] = 1 / mpmath.fprod(ks[:-1])
        else:
            ks[-1] = mpmath.mpf(1)
        stages = []
        prefix = mpmath.mpf(1)
        for p, k in zip(base, ks):
            stages.append(p.scaled(k, prefix**b))
            prefix *= k
        scales_out = tuple(float(k) for k in ks)
    return IterationChain(chain.power, chain.c, tuple(stages), chain.stage_errors,
                          chain.stage_domains, base, scales_out, mode, shared_u)


def scale_stage(chain: IterationChain, i: int, k: float) -> IterationChain:
    """Multiply stage i's output by k, undoing the effect downstream.

    Later stages see their argument scaled by ``k**b`` and are reparametrised to
    match; the final stage absorbs ``1/k`` so the chain output is unchanged in
    exact arithmetic.  Scaling the final stage itself is therefore the identity.
    """
    m = len(chain.base_stages)
    if not 0 <= i < m:
        raise PreconditionError(f"stage index {i} out of range for {m} stages")
    if k == 0 or not math.isfinite(k):
        raise PreconditionError("scale factor must be finite and non-zero")
    scales = list(chain.scales)
    scales[i] *= k
    return _apply_scales(chain, scales, "custom")


def _leading_logs(chain):
    out = []
    for p in chain.base_stages:
        lead = p.leading
        if lead == 0:
            raise PreconditionError("stage with zero leading coefficient cannot be rescaled")
        out.append(mpmath.log(abs(mpmath.mpf(lead))))
    return out


def monicize_chain(chain: IterationChain) -> IterationChain:
    """Rescale so every stage after the first has leading coefficient of magnitude 1."""
    m = len(chain.base_stages)
    if m == 1:
        return chain
    b = chain.power.b
    with mpmath.workdps(WORK_DPS):
        logs = _leading_logs(chain)
        # cumulative log factor L_i is affine in L_0: L_i = A_i L_0 + B_i
        A, B = mpmath.mpf(1), mpmath.mpf(0)
        for p, lg in zip(chain.base_stages[1:], logs[1:]):
            grow = 1 + b * p.degree
            A, B = A * grow, B * grow - lg
        L0 = -B / A
        ls = [L0]
        L = L0
        for p, lg in zip(chain.base_stages[1:], logs[1:]):
            li = b * p.degree * L - lg
            ls.append(li)
            L += li
        scales = [mpmath.exp(x) for x in ls]
    return _apply_scales(chain, scales, "monic")


def shared_u_chain(chain: IterationChain) -> IterationChain:
    """Rescale so stage i has leading magnitude ``u**n_i`` for one common u.

    The kernel can then form ``u * x**a`` once and evaluate every stage as a
    signed monic in ``v = u * x**a * y**b``.
    """
    b = chain.power.b
    with mpmath.workdps(WORK_DPS):
        logs = _leading_logs(chain)
        # L_i = L_{i-1} (1 + b n_i) - log|lead_i| + n_i log u, affine in log u
        A, B = mpmath.mpf(0), mpmath.mpf(0)
        for p, lg in zip(chain.base_stages, logs):
            grow = 1 + b * p.degree
            A, B = A * grow + p.degree, B * grow - lg
        if A == 0:
            raise PreconditionError("shared-u rescaling needs at least one stage of degree >= 1")
        log_u = -B / A
        ls = []
        L = mpmath.mpf(0)
        for p, lg in zip(chain.base_stages, logs):
            li = b * p.degree * L - lg + p.degree * log_u
            ls.append(li)
            L += li
        scales = [mpmath.exp(x) for x in ls]
        u = float(mpmath.exp(log_u))
    return _apply_scales(chain, scales, "shared-u", u)
