"""Peak relative error of binary32 kernels over the positive normal floats."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import dd
from .errors import ComparisonMismatch, DomainError, PreconditionError
from .pseudolog import RationalPower
from .scheme.core import INF_BITS, SMALLEST_NORMAL_BITS, ApproxScheme, bits_float, float_bits
from .scheme.kernel import REFERENCE_ID, get_kernel

NORMAL_COUNT = INF_BITS - SMALLEST_NORMAL_BITS  # 254 * 2**23
BLOCK = 1 << 23  # one binade; results are reduced block by block in a fixed order


@dataclass(frozen=True)
class ScanMode:
    kind: str = "exhaustive"  # exhaustive | stride | restricted
    stride: int = 1
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if self.kind not in ("exhaustive", "stride", "restricted"):
            raise PreconditionError(f"unknown scan mode {self.kind!r}")
        if self.stride < 1:
            raise PreconditionError("stride must be positive")
        if self.kind == "restricted" and (self.lo is None and self.hi is None):
            raise PreconditionError("restricted mode needs lo and/or hi")

    @classmethod
    def exhaustive(cls):
        return cls()

    @classmethod
    def strided(cls, stride: int):
        return cls("stride", int(stride))

    @classmethod
    def restricted(cls, lo=None, hi=None):
        return cls("restricted", 1, lo, hi)

    def bounds(self):
        """Half-open bit-pattern range [lo, hi) covered by this mode."""
        lo, hi = SMALLEST_NORMAL_BITS, INF_BITS
        if self.kind == "restricted":
            if self.lo is not None:
                lo = max(lo, _bits_ceil(self.lo))
            if self.hi is not None:
                hi = min(hi, _bits_ceil(self.hi))
        if lo >= hi:
            raise PreconditionError("empty scan domain")
        return lo, hi

    def label(self) -> str:
        if self.kind == "stride":
            return f"stride-sampled({self.stride})"
        if self.kind == "restricted":
            return f"restricted({_fmt(self.lo)}, {_fmt(self.hi)})"
        return "exhaustive"


def _fmt(v):
    return "-" if v is None else f"{v:.9g}"


def _bits_ceil(v: float) -> int:
    """Bit pattern of the binary32 value nearest to v.

    Published bounds are binary32 values printed to 8 digits, so the bound is
    the nearest binary32 value and the range is half-open below it.
    """
    return float_bits(np.float32(v))


@dataclass(frozen=True)
class ErrorReport:
    peak_error: float
    argmax_input: float
    argmax_bits: int
    scan_mode: str
    inputs_scanned: int
    reference: str = REFERENCE_ID
    mean_error: float = 0.0
    outside_peak: float | None = None
    outside_argmax: float | None = None
    exponent_peaks: tuple = field(default=(), repr=False)

    def to_dict(self, with_exponents: bool = False):
        d = {
            "peak_error": self.peak_error,
            "argmax_input": self.argmax_input,
            "argmax_bits": f"0x{self.argmax_bits:08X}",
            "scan_mode": self.scan_mode,
            "inputs_scanned": self.inputs_scanned,
            "reference": self.reference,
            "mean_error": self.mean_error,
        }
        if self.outside_peak is not None:
            d["outside_peak"] = self.outside_peak
            d["outside_argmax"] = self.outside_argmax
        if with_exponents:
            d["exponent_peaks"] = list(self.exponent_peaks)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def exponent_csv(self) -> str:
        """Per-binade peak error: biased exponent, unbiased exponent, peak."""
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["biased_exponent", "exponent", "peak_error"])
        for i, e in enumerate(self.exponent_peaks, 1):
            if e >= 0:
                w.writerow([i, i - 127, repr(e)])
        return out.getvalue()


def reference_pow_dd(x, power: RationalPower):
    """x**(-a/b) as a double-double (hi, lo) pair, vectorised.

    A binary64 seed is refined with one Newton step on ``r**b * x**a = 1``
    carried out in double-double arithmetic.
    """
    x = np.asarray(x, dtype=np.float64)
    a, b = power.a, power.b
    if np.any(~(x > 0) | ~np.isfinite(x)):
        raise DomainError("reference_pow needs positive finite inputs")
    # exponent split keeps x**a and r**b in range
    m, e = np.frexp(x)
    q, rem = np.divmod(e * a, b)
    # x^(a/b) = m^(a/b) * 2^(rem/b) * 2^q
    base = dd.dd_from(np.ldexp(1.0, rem))
    ma = dd.dd_pow_int(dd.dd_from(m), a)
    s = dd.dd_mul(ma, base)  # exact value whose b-th root we need, in [2^-a, 2)
    shi = dd.dd_to_float(s)
    r = np.power(shi, -1.0 / b)
    rd = dd.dd_from(r)
    # Newton for r^-b = s: r <- r + r (1 - s r^b) / b
    t = dd.dd_mul(s, dd.dd_pow_int(rd, b))
    one_minus = dd.dd_sub(dd.dd_from(np.ones_like(r)), t)
    corr = dd.dd_mul(rd, one_minus)
    corr = (corr[0] / b, corr[1] / b)
    r = dd.dd_add(rd, corr)
    scale = np.ldexp(1.0, -q)
    return r[0] * scale, r[1] * scale


def reference_pow(x, power: RationalPower):
    """x**(-a/b) to within about one binary64 rounding of the true value."""
    hi, lo = reference_pow_dd(x, power)
    out = hi + lo
    return float(out) if np.ndim(x) == 0 else out


def _blocks(lo: int, hi: int, stride: int):
    """Fixed binade-aligned blocks of the pattern grid lo, lo+stride, ... below hi."""
    out = []
    start = lo
    while start < hi:
        end = min(hi, (start // BLOCK + 1) * BLOCK)
        first = start
        out.append((first, end))
        # next grid point at or after end
        k = -(-(end - lo) // stride)
        start = lo + k * stride
    return out


def _default_threads():
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def _run(scheme: ApproxScheme, lo: int, hi: int, stride: int, threads: int, partitions: int | None):
    kern = get_kernel(scheme)
    coeffs = np.array(scheme.flat_coefficients(), dtype=np.float32)
    magic = int(scheme.magic)
    blocks = _blocks(lo, hi, stride)
    # partitions group consecutive blocks per task; results are still reduced per block
    parts = partitions or threads
    parts = max(1, min(parts, len(blocks)))
    groups = [blocks[i * len(blocks) // parts:(i + 1) * len(blocks) // parts] for i in range(parts)]

    def work(group):
        res = []
        for a, b in group:
            peaks = np.full(256, -1.0)
            best, arg, total, count = kern(a, b, stride, magic, coeffs, peaks)
            res.append((best, arg, total, count, peaks))
        return res

    if threads > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = [r for g in pool.map(work, groups) for r in g]
    else:
        results = [r for g in groups for r in work(g)]
    best, arg, total, count = -1.0, lo, 0.0, 0
    peaks = np.full(256, -1.0)
    for b_, a_, t_, c_, p_ in results:
        if b_ > best:  # strict: the lowest pattern wins ties
            best, arg = b_, a_
        total += t_
        count += c_
        np.maximum(peaks, p_, out=peaks)
    return best, arg, total, count, peaks


def scan(scheme: ApproxScheme, power: RationalPower | None = None, mode: ScanMode | None = None,
         threads: int | None = None, partitions: int | None = None, outside: bool = True) -> ErrorReport:
    """Peak of ``|1 - y(x) * x**(a/b)|`` over the inputs selected by ``mode``.

    NaN outputs count as infinite error.  The result does not depend on
    ``threads`` or ``partitions``.  A restricted scan also measures the rest of
    the normal range unless ``outside`` is false.
    """
    if power is not None and power != scheme.power:
        raise PreconditionError("scheme power does not match the requested power")
    mode = mode or ScanMode()
    threads = threads or _default_threads()
    lo, hi = mode.bounds()
    best, arg, total, count, peaks = _run(scheme, lo, hi, mode.stride, threads, partitions)
    outside_peak = outside_arg = None
    if mode.kind == "restricted" and outside:
        others = []
        if lo > SMALLEST_NORMAL_BITS:
            others.append(_run(scheme, SMALLEST_NORMAL_BITS, lo, 1, threads, partitions))
        if hi < INF_BITS:
            others.append(_run(scheme, hi, INF_BITS, 1, threads, partitions))
        ob, oa = -1.0, None
        for r in others:
            if r[0] > ob:
                ob, oa = r[0], r[1]
        if oa is not None:
            outside_peak, outside_arg = ob, bits_float(oa)
    return ErrorReport(
        peak_error=float(best),
        argmax_input=bits_float(arg),
        argmax_bits=int(arg),
        scan_mode=mode.label(),
        inputs_scanned=int(count),
        mean_error=float(total / count) if count and math.isfinite(total) else math.inf,
        outside_peak=outside_peak,
        outside_argmax=outside_arg,
        exponent_peaks=tuple(float(p) for p in peaks[1:255]),
    )


# -- published catalog -------------------------------------------------------------

def load_catalog():
    text = resources.files("fastroot").joinpath("data/catalog.json").read_text()
    return json.loads(text)


def catalog_entry(entry_id: str):
    cat = load_catalog()
    for e in cat["entries"]:
        if e["id"] == entry_id:
            return e
    raise PreconditionError(f"unknown catalog entry {entry_id!r}; known: {[e['id'] for e in cat['entries']]}")


def catalog_scheme(entry) -> ApproxScheme | None:
    if isinstance(entry, str):
        entry = catalog_entry(entry)
    if entry.get("scheme") is None:
        return None
    d = dict(entry["scheme"])
    d.setdefault("name", entry["id"])
    return ApproxScheme.from_dict(d)


def printed_digits(text: str) -> int:
    mant = text.lower().split("e")[0].replace("-", "").replace(".", "").lstrip("0")
    return len(mant)


def agrees_to_printed_digit(measured: float, published: str) -> bool:
    """True when measured is within one unit of the last printed digit of published."""
    pub = float(published)
    digits = printed_digits(published)
    unit = 10.0 ** (math.floor(math.log10(abs(pub))) - digits + 1)
    return abs(measured - pub) <= unit * (1 + 1e-9)


@dataclass(frozen=True)
class Comparison:
    entry: str
    published: str
    measured: float | None
    passed: bool
    detail: str = ""
    report: ErrorReport | None = None
    checks: tuple = ()  # (label, published, measured, passed) for secondary figures

    def to_dict(self):
        return {
            "entry": self.entry,
            "published": self.published,
            "measured": self.measured,
            "passed": self.passed,
            "detail": self.detail,
            "checks": [list(c) for c in self.checks],
            "report": self.report.to_dict() if self.report else None,
        }


def compare_published(entry_id: str, threads: int | None = None, mode: ScanMode | None = None,
                      raise_on_mismatch: bool = False) -> Comparison:
    """Re-measure a catalog entry and check it against the published figure."""
    entry = catalog_entry(entry_id)
    scheme = catalog_scheme(entry)
    published = entry["published_error"]
    if scheme is None:
        res = Comparison(entry_id, published, None, False, entry.get("note", "constants unavailable"))
        if raise_on_mismatch:
            raise ComparisonMismatch(res.detail, res)
        return res
    dom = entry.get("restricted")
    if mode is None:
        mode = ScanMode.restricted(dom.get("lo"), dom.get("hi")) if dom else ScanMode()
    rep = scan(scheme, mode=mode, threads=threads)
    ok = agrees_to_printed_digit(rep.peak_error, published)
    checks = []
    if dom and dom.get("outside_error") and rep.outside_peak is not None:
        o_ok = agrees_to_printed_digit(rep.outside_peak, dom["outside_error"])
        checks.append(("outside", dom["outside_error"], rep.outside_peak, o_ok))
        ok = ok and o_ok
    detail = f"measured {rep.peak_error:.6e} vs published {published}"
    res = Comparison(entry_id, published, rep.peak_error, ok, detail, rep, tuple(checks))
    if raise_on_mismatch and not ok:
        raise ComparisonMismatch(detail, res)
    return res
