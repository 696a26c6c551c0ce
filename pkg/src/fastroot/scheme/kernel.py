"""Compiled scan kernels.

A scheme's templates are turned into Python source for a numba function that
walks a range of bit patterns, evaluates the scheme in float32 and records the
relative error against a binary64 reference.  The magic constant and the
coefficients are runtime arguments, so one compiled kernel serves every
candidate a tuner tries for the same operation structure.
"""

from __future__ import annotations

import hashlib
import importlib.util
import os
import sys
import tempfile
import threading

import numba  # noqa: F401  generated kernels import it; fail here rather than mid-scan

from . import expr
from .core import SUBTRACT_THEN_SHIFT, ApproxScheme
from .emit import literal

REFERENCE_ID = "binary64-newton"

_lock = threading.Lock()
_cache = {}


def _error_lines(a: int, b: int):
    """Lines computing ``e = |1 - y * x**(a/b)|`` in binary64 from float32 x, y."""
    xa = "*".join(["xd"] * a)
    if b <= 2:
        ref = xa if b == 1 else f"math.sqrt({xa})"
        return [f"e = abs(1.0 - np.float64(y) * {ref})"]
    # With w = y^b x^a, 1 - w^(1/b) = (1 - w) / (1 + r + ... + r^(b-1)) where
    # r = w^(1/b).  The denominator only needs r to a few parts in 1e11, which
    # a short series in w - 1 gives; a libm root per input would dominate the scan.
    yb = "*".join(["yd"] * b)
    q = 1.0 / b
    series = []
    coef = 1.0
    for k in range(1, 6):
        coef *= (q - k + 1) / k
        series.append(coef)
    r = "0.0"
    for c in reversed(series):
        r = f"d*({c!r} + {r})" if r != "0.0" else f"d*{c!r}"
    den = "1.0"
    for _ in range(b - 1):
        den = f"1.0 + r*({den})" if den != "1.0" else "1.0 + r"
    root = "np.cbrt(sa)" if b == 3 else f"sa ** {q!r}"
    return [
        "yd = np.float64(y)",
        f"w = {yb}*{xa}",
        "d = w - 1.0",
        "if abs(d) < 0.015625:",
        f"    r = 1.0 + {r}",
        f"    e = abs(d) / ({den})",
        "else:",
        f"    sa = {xa}",
        f"    ref = {root}",
        f"    ref = ref - (ref*{'*'.join(['ref'] * (b - 1))} - sa) / ({b}.0*{'*'.join(['ref'] * (b - 1))})",
        "    e = abs(1.0 - yd * ref)",
    ]


def divide_by_multiply(a: int, b: int):
    """(M, k) with floor(a*X / b) == (a*X*M) >> k for every X below 2**31 and
    a*X*M below 2**64, or None.  Hardware integer division is slow enough to
    matter in a 2**31-input loop."""
    n_max = a * (1 << 31)
    for k in range(32, 64):
        M = -(-(1 << k) // b)
        if n_max * (M * b - (1 << k)) < (1 << k) and n_max * M < 1 << 64:
            return M, k
    return None


def structure_key(scheme: ApproxScheme):
    return (scheme.power.a, scheme.power.b, scheme.shift_form, scheme.prologue,
            tuple(st.template for st in scheme.stages),
            tuple(len(st.coefficients) for st in scheme.stages))


def kernel_source(scheme: ApproxScheme) -> str:
    a, b = scheme.power.a, scheme.power.b
    lits = {}

    def num(v):
        if v not in lits:
            lits[v] = f"L{len(lits)}"
        return lits[v]

    body = []
    off = 0
    stage_lines = []
    if scheme.prologue_program is not None:
        for name, e in scheme.prologue_program.assigns:
            stage_lines.append(f"t_{name} = {expr.render(e, None, num, var=_var)}")
    slot_names = []
    for st, prog in zip(scheme.stages, scheme.stage_programs):
        base = off

        def slot(i, magnitude, base=base):
            return f"k{base + i}"

        for name, e in prog.assigns:
            stage_lines.append(f"t_{name} = {expr.render(e, slot, num, var=_var)}")
        stage_lines.append(f"y = {expr.render(prog.result, slot, num, var=_var)}")
        off += len(st.coefficients)
    slot_names = [f"k{i}" for i in range(off)]

    if scheme.shift_form == SUBTRACT_THEN_SHIFT:
        coarse = "((magic - i) & 0xFFFFFFFF) >> 1"
    elif b == 1:
        coarse = f"(magic - {a} * i) & 0xFFFFFFFF"
    elif divide_by_multiply(a, b) is not None:
        M, k = divide_by_multiply(a, b)
        coarse = f"(magic - np.int64((np.uint64({a} * i) * np.uint64({M})) >> np.uint64({k}))) & 0xFFFFFFFF"
    else:
        coarse = f"(magic - ({a} * i) // {b}) & 0xFFFFFFFF"

    body += [
        "@numba.njit(nogil=True, cache=CACHE, error_model='numpy')",
        "def scan_range(lo, hi, stride, magic, coeffs, peaks):",
        "    buf = np.empty(2, np.uint32)",
        "    fb = buf.view(np.float32)",
    ]
    for v, n in lits.items():
        body.append(f"    {n} = np.float32({literal(v)})")
    for i, n in enumerate(slot_names):
        body.append(f"    {n} = coeffs[{i}]")
    body += [
        "    best = -1.0",
        "    arg = lo",
        "    total = 0.0",
        "    count = 0",
        "    for i in range(lo, hi, stride):",
        "        buf[0] = np.uint32(i)",
        f"        buf[1] = np.uint32({coarse})",
        "        x = fb[0]",
        "        y = fb[1]",
    ]
    body += ["        " + ln for ln in stage_lines]
    body.append("        xd = np.float64(x)")
    body += ["        " + ln for ln in _error_lines(a, b)]
    body += [
        "        if not e <= 1.0e308:",
        "            e = np.inf",
        "        total += e",
        "        count += 1",
        "        ex = i >> 23",
        "        if e > peaks[ex]:",
        "            peaks[ex] = e",
        "        if e > best:",
        "            best = e",
        "            arg = i",
        "    return best, arg, total, count",
        "",
    ]
    head = ["import math", "", "import numba", "import numpy as np", "", "CACHE = True", "", ""]
    return "\n".join(head + body)


def _var(name):
    return name if name in ("x", "y") else f"t_{name}"


def _cache_dir():
    root = os.environ.get("FASTROOT_CACHE") or os.path.join(
        os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache"),
        "fastroot", "kernels")
    try:
        os.makedirs(root, exist_ok=True)
        return root if os.access(root, os.W_OK) else None
    except OSError:
        return None


def _load(source: str):
    digest = hashlib.sha1(source.encode()).hexdigest()[:16]
    modname = f"fastroot_kernel_{digest}"
    if modname in sys.modules:
        return sys.modules[modname].scan_range
    root = _cache_dir()
    if root is None:
        # no writable cache: compile in memory every process
        root = tempfile.mkdtemp(prefix="fastroot-")
        source = source.replace("CACHE = True", "CACHE = False")
    path = os.path.join(root, modname + ".py")
    if not os.path.exists(path):
        tmp = f"{path}.{os.getpid()}.tmp"
        with open(tmp, "w") as fh:
            fh.write(source)
        os.replace(tmp, path)
    spec = importlib.util.spec_from_file_location(modname, path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    sys.modules[modname] = mod
    return mod.scan_range


def get_kernel(scheme: ApproxScheme):
    """Compiled ``scan_range(lo, hi, stride, magic, coeffs, peaks)`` for this structure."""
    key = structure_key(scheme)
    with _lock:
        fn = _cache.get(key)
        if fn is None:
            fn = _load(kernel_source(scheme))
            _cache[key] = fn
    return fn
