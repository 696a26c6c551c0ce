"""Empirical refinement of magic constants and binary32 coefficients.

Analytic constants are optimal for exact arithmetic; once the kernel rounds to
binary32 a few ulps of adjustment usually pay off.  The search here is a
deterministic coordinate descent: each coordinate (the magic constant, then
each coefficient's bit pattern) is probed at offsets that start at the search
radius and halve whenever neither direction helps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .derive import z_range
from .errors import PreconditionError
from .minimax import linear_closed_form
from .pseudolog import RationalPower
from .scheme.core import (
    SHIFT_THEN_SUBTRACT, SUBTRACT_THEN_SHIFT, ApproxScheme, make_scheme,
)
from .scheme.variants import all_orderings
from .verify import ErrorReport, ScanMode, scan


@dataclass(frozen=True)
class Neighborhood:
    magic_radius: int = 1 << 10
    coeff_radius: int = 1 << 8  # binary32 ulps


def _bits32(v: float) -> int:
    return int(np.float32(v).view(np.int32))


def _from_bits32(i: int) -> float:
    return float(np.int32(i).view(np.float32))


class _Search:
    def __init__(self, scheme, mode, threads, budget, trace):
        self.mode = mode
        self.threads = threads
        self.budget = budget
        self.used = 0
        self.trace = trace
        self.magic = scheme.magic
        self.coeffs = [_bits32(c) for c in scheme.flat_coefficients()]
        self.template = scheme
        self.best_report = None
        self.best_key = None

    def build(self, magic, coeffs):
        return self.template.with_magic(magic).with_coefficients([_from_bits32(c) for c in coeffs])

    def score(self, magic, coeffs):
        rep = scan(self.build(magic, coeffs), mode=self.mode, threads=self.threads)
        return (rep.peak_error, rep.mean_error, magic), rep

    def log(self, magic, coeffs, rep, accepted):
        if self.trace is None:
            return
        rec = {
            "candidate": {"magic": f"0x{magic:08X}",
                          "coefficients": [float.hex(_from_bits32(c)) for c in coeffs]},
            "peak": rep.peak_error,
            "mean": rep.mean_error,
            "accepted": accepted,
        }
        line = json.dumps(rec)
        if callable(self.trace):
            self.trace(line)
        else:
            self.trace.write(line + "\n")

    def start(self):
        self.best_key, self.best_report = self.score(self.magic, self.coeffs)
        self.log(self.magic, self.coeffs, self.best_report, True)

    def try_point(self, magic, coeffs) -> bool:
        if self.used >= self.budget:
            return False
        if not 0 <= magic < 1 << 32:
            return False
        self.used += 1
        key, rep = self.score(magic, coeffs)
        better = key < self.best_key and key[0] <= self.best_key[0]
        # peaks must not get worse; equal peaks fall through to the tie-breaks
        self.log(magic, coeffs, rep, better)
        if better:
            self.best_key, self.best_report = key, rep
            self.magic, self.coeffs = magic, list(coeffs)
        return better

    def descend(self, index: int, radius: int) -> bool:
        """Pattern search on one coordinate (index -1 is the magic constant)."""
        improved = False
        step = radius
        while step >= 1 and self.used < self.budget:
            moved = False
            for sign in (1, -1):
                if index < 0:
                    ok = self.try_point(self.magic + sign * step, self.coeffs)
                else:
                    cs = list(self.coeffs)
                    cs[index] += sign * step
                    ok = self.try_point(self.magic, cs)
                if ok:
                    moved = improved = True
                    break
            if not moved:
                step //= 2
        return improved


def tune_scheme(seed: ApproxScheme, power: RationalPower | None = None, budget: int = 10**5,
                neighborhood: Neighborhood | None = None, stride: int = 256, threads: int | None = None,
                trace=None, confirm: bool = True, tune_magic: bool = True, tune_coefficients: bool = True):
    """Coordinate descent from ``seed``; returns ``(scheme, report)``.

    Candidates are scored on a stride-sampled scan with tie-breaks on mean
    error and then on the smaller magic constant.  With ``confirm`` the winner
    is re-measured exhaustively and the seed is kept if it turns out better.
    ``trace`` receives one JSON line per candidate (a callable or a writable
    file).  ``budget`` counts candidate evaluations, excluding the seed.
    """
    if power is not None and power != seed.power:
        raise PreconditionError("seed power does not match the requested power")
    nb = neighborhood or Neighborhood()
    if budget <= 0:
        mode = ScanMode() if confirm else ScanMode.strided(stride)
        return seed, scan(seed, mode=mode, threads=threads)
    search = _Search(seed, ScanMode.strided(stride), threads, budget, trace)
    search.start()
    coords = ([-1] if tune_magic else []) + (list(range(len(search.coeffs))) if tune_coefficients else [])
    while search.used < budget:
        changed = False
        for k in coords:
            radius = nb.magic_radius if k < 0 else nb.coeff_radius
            changed |= search.descend(k, radius)
            if search.used >= budget:
                break
        if not changed:
            break
    best = search.build(search.magic, search.coeffs)
    if not confirm:
        return best, search.best_report
    rep = scan(best, threads=threads)
    if best != seed:
        seed_rep = scan(seed, threads=threads)
        if (seed_rep.peak_error, seed_rep.mean_error) <= (rep.peak_error, rep.mean_error):
            return seed, seed_rep
    return best, rep


@dataclass(frozen=True)
class VariantChoice:
    ordering: str
    s_offset: int
    shift_form: str
    parity_bit: int | None = None

    def label(self) -> str:
        shift = "shift-first" if self.shift_form == SHIFT_THEN_SUBTRACT else f"C'=2C+{self.parity_bit}"
        return f"{self.ordering} s+{self.s_offset} {shift}"

    def to_dict(self):
        return {"ordering": self.ordering, "s_offset": self.s_offset,
                "shift_form": self.shift_form, "parity_bit": self.parity_bit}


def variant_seeds(power: RationalPower, c: float):
    """Analytic degree-1 kernels for every ordering, s offset and shift parity.

    For b = 2 the two shift parities are ``C' = 2C + 1`` (identical to shifting
    first) and ``C' = 2C``; other b have a single form.
    """
    lo, hi = z_range(power, c)
    base = linear_closed_form(power.b, lo, hi)
    out = []
    for j in range(power.b):
        poly = base.scaled(2.0 ** (-j / power.b), 2.0**j)
        for v in all_orderings(power.a, power.b):
            if v.factored and poly.coefficients[1] >= 0:
                continue
            forms = [(SUBTRACT_THEN_SHIFT, 1), (SUBTRACT_THEN_SHIFT, 0)] if power.b == 2 \
                else [(SHIFT_THEN_SUBTRACT, None)]
            for form, bit in forms:
                name = f"{v.identifier} s+{j}"
                scheme = make_scheme(power, c + j, [poly], [v], form, bit if bit is not None else 1, name)
                if form == SUBTRACT_THEN_SHIFT and bit == 1:
                    # identical bits, shown in the familiar shift-first form
                    scheme = replace(scheme, magic=scheme.magic >> 1, shift_form=SHIFT_THEN_SUBTRACT)
                    choice = VariantChoice(v.identifier, j, SHIFT_THEN_SUBTRACT, None)
                else:
                    choice = VariantChoice(v.identifier, j, form, bit)
                out.append((choice, scheme))
    return out


def explore_variants(seed: ApproxScheme, power: RationalPower | None = None, magic_budget: int = 64,
                     stride: int = 256, threads: int | None = None, confirm_top: int = 0):
    """Rank every degree-1 variant of ``seed``'s analytic constants.

    Each variant gets a magic-only tuning pass (``magic_budget`` candidates).
    Returns ``[(VariantChoice, scheme, ErrorReport)]`` ascending by peak error;
    reports are stride-sampled except for the first ``confirm_top`` entries,
    which are re-measured exhaustively (and re-sorted among themselves).
    """
    power = power or seed.power
    if len(seed.stages) != 1 or len(seed.stages[0].coefficients) not in (1, 2):
        raise PreconditionError("explore_variants needs a single degree-1 stage")
    results = []
    for choice, scheme in variant_seeds(power, seed.c):
        tuned, rep = tune_scheme(scheme, budget=magic_budget, stride=stride, threads=threads,
                                 confirm=False, tune_coefficients=False,
                                 neighborhood=Neighborhood(magic_radius=1 << 10))
        results.append((choice, tuned, rep))
    results.sort(key=lambda r: (r[2].peak_error, r[2].mean_error, r[1].magic))
    if confirm_top:
        head = [(ch, s, scan(s, threads=threads)) for ch, s, _ in results[:confirm_top]]
        head.sort(key=lambda r: (r[2].peak_error, r[2].mean_error, r[1].magic))
        results = head + results[confirm_top:]
    return results


def tuned_bound_ok(report: ErrorReport, theoretical: float, tol: float = 1e-9) -> bool:
    """Float evaluation cannot beat the exact-arithmetic minimax bound."""
    return report.peak_error >= theoretical - tol
