"""Executable binary32 kernels built from analytic constants."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from ..errors import DomainError, PreconditionError
from ..pseudolog import RationalPower
from . import expr
from .variants import (
    OrderingVariant, all_orderings, alternating_template, find_ordering, horner_template, monic_template,
)

SHIFT_THEN_SUBTRACT = "shift-then-subtract"
SUBTRACT_THEN_SHIFT = "subtract-then-shift"
SHIFT_FORMS = (SHIFT_THEN_SUBTRACT, SUBTRACT_THEN_SHIFT)

K_MANT = 23
K_BIAS = 127
U32 = 1 << 32
SMALLEST_NORMAL_BITS = 0x00800000
INF_BITS = 0x7F800000


def f32(v) -> float:
    """Round to the nearest binary32 value, returned as a Python float."""
    return float(np.float32(v))


def float_bits(v: float) -> int:
    return int(np.float32(v).view(np.uint32))


def bits_float(i: int) -> float:
    return float(np.uint32(i).view(np.float32))


def hex32(v: float) -> str:
    return float(np.float32(v)).hex()


def magic_constant(power: RationalPower, c: float, k_mant: int = K_MANT, k_bias: int = K_BIAS) -> int:
    """Integer constant C realising the real offset c in bit space.

    The real value is rounded half-to-even (Python's ``round`` on an exact
    rational).
    """
    exact = Fraction(2**k_mant, power.b) * (Fraction(c) + k_bias * (power.a + power.b))
    C = round(exact)
    if not 0 <= C < U32:
        raise DomainError(f"magic constant {exact} lies outside [0, 2^32)")
    return C


def magic_to_c(power: RationalPower, C: int, k_mant: int = K_MANT, k_bias: int = K_BIAS) -> float:
    """Invert :func:`magic_constant` (exactly, up to the final float conversion)."""
    return float(Fraction(C * power.b, 2**k_mant) - k_bias * (power.a + power.b))


def integer_divide_descriptor(power: RationalPower) -> str:
    a, b = power.a, power.b
    if b == 1:
        return "X" if a == 1 else f"{a}*X"
    if a == 1 and b & (b - 1) == 0:
        return f"X>>{b.bit_length() - 1}"
    if a == 1:
        return f"X/{b}"
    if a * (INF_BITS - 1) < U32:
        return f"{a}*X/{b}"
    return f"(uint64)X*{a}/{b}"


@dataclass(frozen=True)
class CoarseStep:
    """The integer part of a kernel: ``Y = magic - D(X)`` or ``Y = (magic - X) >> 1``."""

    magic: int
    shift_form: str


def shift_variant(C: int, parity_bit: int) -> CoarseStep:
    """Subtract-then-shift form carrying ``C' = 2C + parity_bit``.

    ``C' = 2C + 1`` reproduces ``C - (X >> 1)`` bit for bit; ``C' = 2C`` rounds the
    other way for odd X and has no shift-then-subtract equivalent.
    """
    if parity_bit not in (0, 1):
        raise PreconditionError("parity bit must be 0 or 1")
    if not 0 <= C < U32:
        raise PreconditionError("C must be a 32-bit unsigned integer")
    doubled = 2 * C + parity_bit
    if doubled >= U32:
        raise DomainError(f"2C + {parity_bit} = {doubled:#x} overflows 32 bits")
    return CoarseStep(doubled, SUBTRACT_THEN_SHIFT)


def shift_equivalent(step: CoarseStep):
    """Shift-then-subtract constant equal to a subtract-then-shift step, or None."""
    if step.shift_form == SHIFT_THEN_SUBTRACT:
        return step.magic
    return step.magic >> 1 if step.magic & 1 else None


@dataclass(frozen=True)
class SchemeStage:
    template: str
    coefficients: tuple
    variant: str = "custom"

    def __post_init__(self):
        for c in self.coefficients:
            if f32(c) != c:
                raise PreconditionError(f"coefficient {c!r} is not a binary32 value")

    def to_dict(self):
        return {
            "template": self.template,
            "variant": self.variant,
            "coefficients": [{"hex": hex32(c), "decimal": f"{c:.9g}"} for c in self.coefficients],
        }

    @classmethod
    def from_dict(cls, d):
        cs = []
        for c in d["coefficients"]:
            cs.append(float.fromhex(c["hex"]) if isinstance(c, dict) else f32(c))
        return cls(d["template"], tuple(cs), d.get("variant", "custom"))


@dataclass(frozen=True)
class ApproxScheme:
    power: RationalPower
    magic: int
    shift_form: str = SHIFT_THEN_SUBTRACT
    integer_divide: str = ""
    stages: tuple = ()
    domain_note: tuple | None = None
    prologue: str = ""
    name: str = "approx"
    _programs: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.shift_form not in SHIFT_FORMS:
            raise PreconditionError(f"unknown shift form {self.shift_form!r}")
        if self.shift_form == SUBTRACT_THEN_SHIFT and self.power.b != 2:
            raise PreconditionError("subtract-then-shift only applies to b = 2")
        if not 0 <= self.magic < U32:
            raise PreconditionError("magic constant must be a 32-bit unsigned integer")
        if not self.integer_divide:
            object.__setattr__(self, "integer_divide", integer_divide_descriptor(self.power))
        object.__setattr__(self, "_programs", self._compile())

    def _compile(self):
        known = {"x", "y"}
        progs = []
        if self.prologue:
            p = expr.parse(self.prologue + "; y", known)
            if p.slots:
                raise PreconditionError("prologue may not use coefficient slots")
            known |= set(p.temporaries)
            progs.append(p)
        else:
            progs.append(None)
        for st in self.stages:
            p = expr.parse(st.template, known)
            if p.slots > len(st.coefficients):
                raise PreconditionError(
                    f"template {st.template!r} needs {p.slots} coefficients, got {len(st.coefficients)}")
            known |= set(p.temporaries)
            progs.append(p)
        return tuple(progs)

    @property
    def prologue_program(self):
        return self._programs[0]

    @property
    def stage_programs(self):
        return self._programs[1:]

    @property
    def coefficient_count(self) -> int:
        return sum(len(s.coefficients) for s in self.stages)

    def flat_coefficients(self):
        return [c for s in self.stages for c in s.coefficients]

    def with_coefficients(self, flat) -> ApproxScheme:
        flat = list(flat)
        stages = []
        for s in self.stages:
            n = len(s.coefficients)
            stages.append(replace(s, coefficients=tuple(f32(v) for v in flat[:n])))
            flat = flat[n:]
        return replace(self, stages=tuple(stages))

    def with_magic(self, magic: int) -> ApproxScheme:
        return replace(self, magic=int(magic) % U32)

    @property
    def c(self) -> float:
        """The real offset this kernel's magic constant stands for."""
        C = Fraction(self.magic) if self.shift_form == SHIFT_THEN_SUBTRACT else Fraction(self.magic, 2)
        return float(C * self.power.b / 2**K_MANT - K_BIAS * (self.power.a + self.power.b))

    def to_dict(self):
        return {
            "name": self.name,
            "power": self.power.to_dict(),
            "magic": f"0x{self.magic:08X}",
            "shift_form": self.shift_form,
            "integer_divide": self.integer_divide,
            "prologue": self.prologue,
            "stages": [s.to_dict() for s in self.stages],
            "domain_note": list(self.domain_note) if self.domain_note else None,
        }

    @classmethod
    def from_dict(cls, d):
        magic = d["magic"]
        magic = int(magic, 16) if isinstance(magic, str) else int(magic)
        note = d.get("domain_note")
        return cls(
            power=RationalPower.from_dict(d["power"]),
            magic=magic,
            shift_form=d.get("shift_form", SHIFT_THEN_SUBTRACT),
            integer_divide=d.get("integer_divide", ""),
            stages=tuple(SchemeStage.from_dict(s) for s in d.get("stages", [])),
            domain_note=tuple(note) if note else None,
            prologue=d.get("prologue", ""),
            name=d.get("name", "approx"),
        )


def coarse_bits(scheme: ApproxScheme, X):
    """Bit pattern of the coarse estimate for input bit patterns X (uint32 semantics)."""
    X = np.asarray(X, dtype=np.int64)
    a, b = scheme.power.a, scheme.power.b
    if scheme.shift_form == SUBTRACT_THEN_SHIFT:
        return ((scheme.magic - X) % U32) >> 1
    return (scheme.magic - (a * X) // b) % U32


def interpret(scheme: ApproxScheme, x, check_domain: bool = True):
    """Reference binary32 semantics of a scheme, vectorised over numpy arrays."""
    xs = np.asarray(x, dtype=np.float32)
    X = xs.view(np.uint32).astype(np.int64)
    if check_domain and np.any((X < SMALLEST_NORMAL_BITS) | (X >= INF_BITS)):
        raise DomainError("inputs must be positive normal binary32 values")
    Y = coarse_bits(scheme, X).astype(np.uint32)
    y = Y.view(np.float32)
    env = {"x": xs, "y": y}
    if scheme.prologue_program is not None:
        pro = scheme.prologue_program
        expr.evaluate(expr.Program(pro.assigns, expr.Var("y")), env, ())
    for st, prog in zip(scheme.stages, scheme.stage_programs):
        env["y"] = expr.evaluate(prog, env, st.coefficients)
    out = np.asarray(env["y"], dtype=np.float32)
    return out.item() if np.ndim(x) == 0 else out


def interpret_exact(scheme: ApproxScheme, x):
    """The same operation trees in binary64, from the same coarse estimate."""
    xs = np.asarray(x, dtype=np.float32)
    X = xs.view(np.uint32).astype(np.int64)
    y = coarse_bits(scheme, X).astype(np.uint32).view(np.float32).astype(np.float64)
    env = {"x": xs.astype(np.float64), "y": y}
    if scheme.prologue_program is not None:
        pro = scheme.prologue_program
        expr.evaluate_exact(expr.Program(pro.assigns, expr.Var("y")), env, ())
    for st, prog in zip(scheme.stages, scheme.stage_programs):
        env["y"] = expr.evaluate_exact(prog, env, st.coefficients)
    return env["y"]


# -- construction from analytic results ---------------------------------------------

def stage_for(poly, power: RationalPower, variant: str | None = None) -> SchemeStage:
    """Binary32 stage evaluating y * p(z) for a fitted polynomial."""
    a, b = power.a, power.b
    cs = list(poly.coefficients)
    n = poly.degree
    if poly.monic_sign is not None:
        tmpl = monic_template(a, b, n, poly.monic_sign)
        return SchemeStage(tmpl, tuple(f32(v) for v in cs[:-1]), "monic" if n else "identity")
    if n == 1 and variant not in (None, "horner"):
        v = variant if isinstance(variant, OrderingVariant) else find_ordering(variant, a, b)
        return SchemeStage(v.template, tuple(f32(s) for s in v.slots(cs[0], cs[1])), v.identifier)
    if n == 1 and variant is None:
        v = find_ordering(default_ordering(power), a, b)
        return SchemeStage(v.template, tuple(f32(s) for s in v.slots(cs[0], cs[1])), v.identifier)
    if n >= 2 and variant is None and all((-1) ** i * v > 0 for i, v in enumerate(cs)):
        alt = tuple(f32((-1) ** i * v) for i, v in enumerate(cs))
        return SchemeStage(alternating_template(a, b, n), alt, "horner-alt")
    return SchemeStage(horner_template(a, b, n), tuple(f32(v) for v in cs), "horner")


def default_ordering(power: RationalPower) -> str:
    """The x-first left-to-right product with the coefficient last, e.g. ``xyyc``."""
    want = "x" * power.a + "y" * power.b + "c"
    for v in all_orderings(power.a, power.b):
        if v.identifier.split(":", 1)[1] == want:
            return v.identifier
    raise PreconditionError("no default ordering")


def make_scheme(power: RationalPower, c: float, polys, variants=None, shift_form=SHIFT_THEN_SUBTRACT,
                parity_bit: int = 1, name: str = "approx") -> ApproxScheme:
    variants = list(variants) if variants is not None else [None] * len(polys)
    stages = tuple(stage_for(p, power, v) for p, v in zip(polys, variants))
    C = magic_constant(power, c)
    if shift_form == SUBTRACT_THEN_SHIFT:
        step = shift_variant(C, parity_bit)
        return ApproxScheme(power, step.magic, SUBTRACT_THEN_SHIFT, "", stages, name=name)
    return ApproxScheme(power, C, SHIFT_THEN_SUBTRACT, "", stages, name=name)


def scheme_from_chain(chain, variants=None, shift_form=SHIFT_THEN_SUBTRACT, parity_bit: int = 1,
                      name: str = "approx") -> ApproxScheme:
    """Kernel for an iteration chain; a shared-u chain forms ``u*x^a`` once up front."""
    if chain.scale_mode != "shared-u":
        return make_scheme(chain.power, chain.c, chain.stages, variants, shift_form, parity_bit, name)
    a, b = chain.power.a, chain.power.b
    u = chain.shared_u
    stages = []
    for p in chain.stages:
        n = p.degree
        sign = 1 if p.leading > 0 else -1
        cs = [f32(ci / u**i) for i, ci in enumerate(p.coefficients[:-1])]
        stages.append(SchemeStage(monic_template(1, b, n, sign, xname="xu"), tuple(cs), "shared-u"))
    prologue = f"xu = {f32(u)!r}*{'*'.join(['x'] * a)}"
    base = make_scheme(chain.power, chain.c, [], [], shift_form, parity_bit, name)
    return replace(base, stages=tuple(stages), prologue=prologue)


def s_alternatives(power: RationalPower, base, degree: int = 1, variant=None, polys=None):
    """The b kernels obtained by adding 0..b-1 to c.

    Adding j to c multiplies z by 2**j and y by 2**(j/b); the polynomial is
    rescaled to compensate (coefficient r gains 2**(-j/b - j*r)), which is exact
    in real arithmetic but rounds differently once stored as binary32.
    """
    from ..minimax import remez_general

    if polys is None:
        poly, _ = remez_general(power.b, degree, base.z_min, base.z_max)
    else:
        poly = polys
    out = []
    for j in range(power.b):
        p = poly.scaled(2.0 ** (-j / power.b), 2.0**j)
        out.append(make_scheme(power, base.c + j, [p], [variant],
                               name=f"s{base.s + j:+d}"))
    return out
