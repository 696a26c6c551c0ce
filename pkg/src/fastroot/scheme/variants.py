"""Operation orderings for refinement steps and the templates that realise them.

A product of several factors can be evaluated in many ways in binary32; each
distinct product tree (up to swapping the two operands of a multiply, which
is exact) gives a different rounding pattern.  Trees are tagged by their leaf
letters in evaluation order, with parenthesised groups for products of two
products, e.g. ``xyyc`` is ``((x*y)*y)*c`` and ``(cy)(xy)`` is ``(c*y)*(x*y)``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

from ..errors import PreconditionError

_RANK = {"c": 0, "x": 1, "y": 2, "w": 3}

# Square-root orderings numbered as in the published 3x3 table, read down the columns
FRSR_DIRECT = ("cxyy", "xycy", "yyxc", "cyxy", "xyyc", "(cx)(yy)", "cyyx", "yycx", "(cy)(xy)")
FRSR_FACTORED = ("xyy", "yyx", "xyw", "xwy", "ywx", "xww", "wwx")


def tag(tree) -> str:
    if isinstance(tree, str):
        return tree
    left, right = tree
    if isinstance(right, str):
        return tag(left) + right
    return f"({tag(left)})({tag(right)})"


def _key(tree):
    return tuple(_RANK[ch] if ch in _RANK else -1 for ch in tag(tree))


def _node(a, b):
    # node before leaf; otherwise by leaf ranks
    if isinstance(a, str) and not isinstance(b, str):
        a, b = b, a
    elif isinstance(a, str) == isinstance(b, str) and _key(b) < _key(a):
        a, b = b, a
    return (a, b)


@lru_cache(maxsize=None)
def _trees(leaves: tuple):
    if len(leaves) == 1:
        return (leaves[0],)
    counts = Counter(leaves)
    items = sorted(counts)
    out = {}

    def splits(i, chosen):
        if i == len(items):
            yield chosen
            return
        for k in range(counts[items[i]] + 1):
            yield from splits(i + 1, chosen + (items[i],) * k)

    for left in splits(0, ()):
        if not left or len(left) == len(leaves):
            continue
        rest = list(leaves)
        for ch in left:
            rest.remove(ch)
        for ta in _trees(tuple(sorted(left, key=_RANK.get))):
            for tb in _trees(tuple(sorted(rest, key=_RANK.get))):
                t = _node(ta, tb)
                out[tag(t)] = t
    return tuple(out[k] for k in sorted(out, key=lambda s: ("(" in s, [_RANK.get(ch, -1) for ch in s])))


def product_trees(leaves) -> tuple:
    """All distinct product trees over a multiset of leaf letters."""
    return _trees(tuple(sorted(leaves, key=_RANK.get)))


def tree_expr(tree, names) -> str:
    if isinstance(tree, str):
        return names[tree]
    left, right = tree
    ls = tree_expr(left, names)
    rs = tree_expr(right, names)
    if not isinstance(right, str):
        rs = f"({rs})"
    return f"{ls}*{rs}"


@dataclass(frozen=True)
class OrderingVariant:
    identifier: str
    template: str
    factored: bool
    w_power: int = 0  # number of w factors inside a factored product

    def slots(self, p0: float, p1: float):
        """Slot values realising y * (p0 + p1 z) with this ordering."""
        if not self.factored:
            return (p0, -p1)
        if p1 >= 0:
            raise PreconditionError("factored forms need a negative linear coefficient")
        k = (-p1) ** (1.0 / (self.w_power + 1))
        return (p0 / k, k)


def _z_leaves(a, b, j=0):
    return ("x",) * a + ("y",) * (b - j) + ("w",) * j


def enumerate_orderings(a: int = 1, b: int = 2, degree: int = 1, factored: bool = False):
    """Degree-1 orderings of ``y*(c0 - c1*x^a*y^b)``.

    Direct forms order the product ``c1 * x^a * y^b``; factored forms first
    form ``w = c1*y`` and order ``x^a * y^(b-j) * w^j``.
    """
    if degree != 1:
        raise PreconditionError("ordering variants are defined for degree-1 refinements")
    names = {"c": "c1", "x": "x", "y": "y", "w": "w"}
    out = []
    if not factored:
        trees = product_trees(("c",) + _z_leaves(a, b))
        if (a, b) == (1, 2):
            by_tag = {tag(t): t for t in trees}
            trees = [by_tag[s] for s in FRSR_DIRECT]
        for i, t in enumerate(trees, 1):
            out.append(OrderingVariant(f"d{i}:{tag(t)}", f"y*(c0 - {tree_expr(t, names)})", False))
        return out
    items = []
    for j in range(b + 1):
        for t in product_trees(_z_leaves(a, b, j)):
            items.append((j, t))
    if (a, b) == (1, 2):
        by_tag = {tag(t): (j, t) for j, t in items}
        items = [by_tag[s] for s in FRSR_FACTORED]
    for i, (j, t) in enumerate(items, 1):
        out.append(OrderingVariant(f"f{i}:w(c0-{tag(t)})",
                                   f"w = c1*y; w*(c0 - {tree_expr(t, names)})", True, j))
    return out


def all_orderings(a: int = 1, b: int = 2):
    return enumerate_orderings(a, b, 1, False) + enumerate_orderings(a, b, 1, True)


def find_ordering(identifier: str, a: int = 1, b: int = 2) -> OrderingVariant:
    for v in all_orderings(a, b):
        if v.identifier == identifier:
            return v
    raise PreconditionError(f"unknown ordering {identifier!r} for x^(-{a}/{b})")


def z_expr(a: int, b: int, xname: str = "x") -> str:
    return "*".join([xname] * a + ["y"] * b)


def horner_template(a: int, b: int, degree: int) -> str:
    """General polynomial: ``z = x^a y^b; y*(c0 + z*(c1 + ... z*cn))``."""
    if degree == 0:
        return "y*c0"
    inner = f"c{degree}"
    for i in range(degree - 1, -1, -1):
        inner = f"c{i} + z*{inner}" if i == degree - 1 else f"c{i} + z*({inner})"
    return f"z = {z_expr(a, b)}; y*({inner})"


def alternating_template(a: int, b: int, degree: int) -> str:
    """Horner with subtractions: ``y*(c0 - z*(c1 - z*c2))`` for slots holding
    ``(-1)**i`` times the coefficients.  Negation is exact, so this rounds exactly
    like the plain Horner form."""
    inner = f"c{degree}"
    for i in range(degree - 1, -1, -1):
        inner = f"c{i} - z*{inner}" if i == degree - 1 else f"c{i} - z*({inner})"
    return f"z = {z_expr(a, b)}; y*({inner})"


def monic_template(a: int, b: int, degree: int, sign: int, xname: str = "x") -> str:
    """Signed-monic polynomial: the leading coefficient costs no multiply."""
    if degree == 0:
        return "y"
    if degree == 1:
        op = "+" if sign > 0 else "-"
        return f"y*(c0 {op} {z_expr(a, b, xname)})"
    inner = f"z + c{degree - 1}" if sign > 0 else f"c{degree - 1} - z"
    for i in range(degree - 2, -1, -1):
        inner = f"c{i} + z*({inner})"
    return f"z = {z_expr(a, b, xname)}; y*({inner})"
