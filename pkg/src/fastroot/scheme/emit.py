"""Source emission for schemes: portable C99 and Python/numpy."""

from __future__ import annotations

import re

from ..errors import PreconditionError
from . import expr
from .core import INF_BITS, SUBTRACT_THEN_SHIFT, U32, ApproxScheme

FORMATS = ("c99", "native")


def literal(v: float) -> str:
    """Nine significant digits: enough to round-trip any binary32 value."""
    return f"{v:.9g}"


def identifier(name: str) -> str:
    ident = re.sub(r"\W", "_", name).strip("_") or "approx"
    return ident if not ident[0].isdigit() else f"k_{ident}"


def _c_divide(scheme: ApproxScheme) -> str:
    a, b = scheme.power.a, scheme.power.b
    if b == 1:
        return "X" if a == 1 else f"{a}u*X"
    if a == 1 and b & (b - 1) == 0:
        return f"(X >> {b.bit_length() - 1})"
    if a == 1:
        return f"X/{b}u"
    if a * (INF_BITS - 1) < U32:
        return f"{a}u*X/{b}u"
    return f"(uint32_t)((uint64_t)X*{a}u/{b}u)"


def _stage_lines(scheme, slot_fmt, num_fmt, assign_fmt, update_fmt):
    lines = []
    if scheme.prologue_program is not None:
        for name, e in scheme.prologue_program.assigns:
            lines.append(assign_fmt(name, expr.render(e, None, num_fmt)))
    for st, prog in zip(scheme.stages, scheme.stage_programs):
        cs = st.coefficients

        def slot(i, magnitude, cs=cs):
            return slot_fmt(abs(cs[i]) if magnitude else cs[i])

        value = cs.__getitem__
        for name, e in prog.assigns:
            lines.append(assign_fmt(name, expr.render(e, slot, num_fmt, slot_value=value)))
        lines.append(update_fmt(expr.render(prog.result, slot, num_fmt, slot_value=value)))
    return lines


def _temporaries(scheme):
    names = []
    if scheme.prologue_program is not None:
        names += list(scheme.prologue_program.temporaries)
    for prog in scheme.stage_programs:
        for n in prog.temporaries:
            if n not in names:
                names.append(n)
    return names


def emit_c99(scheme: ApproxScheme) -> str:
    def num(v):
        s = literal(v) + "f"
        if "e" not in s and "." not in s:
            s = literal(v) + ".0f" if "inf" not in s else s
        return f"({s})" if v < 0 else s

    name = identifier(scheme.name)
    body = ["    uint32_t X, Y;", "    float y;"]
    temps = _temporaries(scheme)
    if temps:
        body.append("    float " + ", ".join(temps) + ";")
    body.append("    memcpy(&X, &x, sizeof X);")
    if scheme.shift_form == SUBTRACT_THEN_SHIFT:
        body.append(f"    Y = (0x{scheme.magic:08X}u - X) >> 1;")
    else:
        body.append(f"    Y = 0x{scheme.magic:08X}u - {_c_divide(scheme)};")
    body.append("    memcpy(&y, &Y, sizeof y);")
    body += _stage_lines(scheme, num, num,
                         lambda n, e: f"    {n} = {e};",
                         lambda e: f"    y = {e};")
    body.append("    return y;")
    head = [
        "#include <stdint.h>",
        "#include <string.h>",
        "",
        "/* every operation rounds to binary32; build without FMA contraction */",
        "#pragma STDC FP_CONTRACT OFF",
        "",
    ]
    if scheme.domain_note:
        head.append(f"/* full accuracy for {scheme.domain_note[0]:.9g} <= x < {scheme.domain_note[1]:.9g} */")
    head.append(f"float {name}(float x)")
    return "\n".join(head + ["{"] + body + ["}", ""])


def emit_native(scheme: ApproxScheme) -> str:
    def num(v):
        return f"np.float32({literal(v)})"

    a, b = scheme.power.a, scheme.power.b
    name = identifier(scheme.name)
    body = [
        "    x = np.asarray(x, dtype=np.float32)",
        "    X = x.view(np.uint32).astype(np.int64)",
    ]
    if scheme.shift_form == SUBTRACT_THEN_SHIFT:
        coarse = f"((0x{scheme.magic:08X} - X) % 4294967296) >> 1"
    else:
        coarse = f"(0x{scheme.magic:08X} - ({a}*X)//{b}) % 4294967296"
    body.append(f"    y = ({coarse}).astype(np.uint32).view(np.float32)")
    lines = _stage_lines(scheme, num, num, lambda n, e: f"        {n} = {e}", lambda e: f"        y = {e}")
    if lines:
        body.append('    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):')
        body += lines
    body.append("    return y")
    head = ["import numpy as np", "", ""]
    doc = [f'    """binary32 approximation of x**(-{a}/{b}); every operation rounds to binary32."""']
    return "\n".join(head + [f"def {name}(x):"] + doc + body + [""])


def emit_source(scheme: ApproxScheme, format: str = "c99") -> str:
    if format == "c99":
        return emit_c99(scheme)
    if format == "native":
        return emit_native(scheme)
    raise PreconditionError(f"unsupported emission format {format!r}; choose from {FORMATS}")


def load_native(source: str, name: str):
    """Execute emitted native source and return the kernel function."""
    ns = {}
    exec(compile(source, f"<fastroot:{name}>", "exec"), ns)
    return ns[identifier(name)]
