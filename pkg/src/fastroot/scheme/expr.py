"""Stage templates: a tiny arithmetic language over binary32 values.

A template is a sequence of ``;``-separated statements.  Every statement but
the last is ``name = expr``; the last is a bare expression whose value becomes
the new ``y``.  Expressions use ``+ - * /``, unary minus, parentheses, float
literals, the variables ``x`` and ``y``, temporaries assigned earlier (they
persist across stages) and coefficient slots ``c0, c1, ...``.

Templates are parsed with :mod:`ast` and kept as trees, so operand order and
grouping are exactly what the template says.  That matters: binary32
multiplication is not associative.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass

import numpy as np

from ..errors import PreconditionError

SLOT = re.compile(r"^c(\d+)$")
_OPS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/"}
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Slot:
    index: int


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class Bin:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Program:
    assigns: tuple  # (name, expr) pairs
    result: object

    @property
    def slots(self) -> int:
        found = set()
        for _, e in self.assigns:
            found |= _slots(e)
        found |= _slots(self.result)
        return max(found) + 1 if found else 0

    @property
    def temporaries(self):
        return tuple(name for name, _ in self.assigns)


def _slots(e):
    if isinstance(e, Slot):
        return {e.index}
    if isinstance(e, Neg):
        return _slots(e.arg)
    if isinstance(e, Bin):
        return _slots(e.left) | _slots(e.right)
    return set()


def _convert(node, known):
    if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
        return Bin(_OPS[type(node.op)], _convert(node.left, known), _convert(node.right, known))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        inner = _convert(node.operand, known)
        if isinstance(inner, Num):
            return Num(-inner.value)
        return Neg(inner)
    if isinstance(node, ast.Constant) and isinstance(node.value, int | float) \
            and not isinstance(node.value, bool):
        return Num(float(np.float32(node.value)))
    if isinstance(node, ast.Name):
        m = SLOT.match(node.id)
        if m:
            return Slot(int(m.group(1)))
        if node.id not in known:
            raise PreconditionError(f"template uses undefined name {node.id!r}")
        return Var(node.id)
    raise PreconditionError(f"unsupported template syntax: {ast.dump(node)}")


def parse(text: str, known=("x", "y")) -> Program:
    known = set(known)
    parts = [p.strip() for p in re.split(r"[;\n]", text) if p.strip()]
    if not parts:
        raise PreconditionError("empty template")
    assigns = []
    for part in parts[:-1]:
        tree = ast.parse(part, mode="exec").body
        if len(tree) != 1 or not isinstance(tree[0], ast.Assign) or len(tree[0].targets) != 1 \
                or not isinstance(tree[0].targets[0], ast.Name):
            raise PreconditionError(f"expected 'name = expr', got {part!r}")
        name = tree[0].targets[0].id
        if name in ("x", "y") or SLOT.match(name):
            raise PreconditionError(f"cannot assign to {name!r}")
        assigns.append((name, _convert(tree[0].value, known)))
        known.add(name)
    try:
        last = ast.parse(parts[-1], mode="eval").body
    except SyntaxError as exc:
        raise PreconditionError(f"bad template expression {parts[-1]!r}") from exc
    return Program(tuple(assigns), _convert(last, known))


def _prec(e):
    if isinstance(e, Bin):
        return _PREC[e.op]
    return 3


def render(e, slot, num, var=lambda n: n, slot_value=None) -> str:
    """Print with the minimum parentheses that preserve the tree in a
    left-associative language (C and Python both qualify).

    With ``slot_value`` given, ``a + c`` where slot c holds a negative value is
    printed as ``a - |c|`` (and ``a - c`` as ``a + |c|``); negation is exact so
    the printed program computes the same values.  ``slot`` then receives a
    second argument asking for the magnitude.
    """
    def go(e):
        if isinstance(e, Num):
            return num(e.value)
        if isinstance(e, Slot):
            return slot(e.index, False)
        if isinstance(e, Var):
            return var(e.name)
        if isinstance(e, Neg):
            inner = go(e.arg)
            return f"-{inner}" if _prec(e.arg) >= 3 else f"-({inner})"
        op = e.op
        p = _PREC[op]
        left = go(e.left)
        if _prec(e.left) < p:
            left = f"({left})"
        r = e.right
        if op in "+-" and isinstance(r, Num) and r.value < 0:
            op = "-" if op == "+" else "+"
            right = num(-r.value)
        elif op in "+-" and isinstance(r, Slot) and slot_value is not None \
                and slot_value(r.index) < 0:
            op = "-" if op == "+" else "+"
            right = slot(r.index, True)
        else:
            right = go(r)
            if _prec(r) <= p:
                right = f"({right})"
        if p == 1:
            return f"{left} {op} {right}"
        return f"{left}{op}{right}"

    return go(e)


def evaluate(prog: Program, env: dict, coeffs):
    """Evaluate with binary32 round-to-nearest-even after every operation.

    ``env`` maps variable names to float32 scalars or arrays and is updated with
    the temporaries; the return value is the new y.
    """
    cs = [np.float32(c) for c in coeffs]

    def ev(e):
        if isinstance(e, Num):
            return np.float32(e.value)
        if isinstance(e, Slot):
            return cs[e.index]
        if isinstance(e, Var):
            return env[e.name]
        if isinstance(e, Neg):
            return -ev(e.arg)
        a = ev(e.left)
        b = ev(e.right)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        return a / b

    with np.errstate(all="ignore"):
        for name, e in prog.assigns:
            env[name] = ev(e)
        return ev(prog.result)


def evaluate_exact(prog: Program, env: dict, coeffs):
    """Same tree evaluated in binary64 (used to check algebraic equivalence)."""
    cs = [float(c) for c in coeffs]

    def ev(e):
        if isinstance(e, Num):
            return e.value
        if isinstance(e, Slot):
            return cs[e.index]
        if isinstance(e, Var):
            return env[e.name]
        if isinstance(e, Neg):
            return -ev(e.arg)
        a, b = ev(e.left), ev(e.right)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        return a / b

    with np.errstate(all="ignore"):
        for name, e in prog.assigns:
            env[name] = ev(e)
        return ev(prog.result)
