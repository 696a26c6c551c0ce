import json
import shutil
import struct
import subprocess
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastroot.chain import build_chain, monicize_chain, shared_u_chain
from fastroot.derive import derive_constants
from fastroot.errors import DomainError, PreconditionError
from fastroot.minimax import linear_closed_form, optimize_monic_c, remez_general
from fastroot.pseudolog import RationalPower
from fastroot.scheme import (
    SUBTRACT_THEN_SHIFT, ApproxScheme, SchemeStage, all_orderings, coarse_bits,
    emit_source, enumerate_orderings, f32, interpret, interpret_exact, load_native, magic_constant,
    magic_to_c, make_scheme, s_alternatives, scheme_from_chain, shift_equivalent, shift_variant,
)
from fastroot.scheme import expr
from fastroot.scheme.emit import identifier
from fastroot.verify import catalog_scheme, load_catalog

FRSR = RationalPower(1, 2)
QUAKE = ApproxScheme(FRSR, 0x5F3759DF, stages=(SchemeStage("h = c1*x; y*(c0 - h*y*y)", (1.5, 0.5)),),
                     name="quake")


def stratified_inputs(per_binade=3937, seed=0):
    """About 10**6 positive normal binary32 values spread evenly over every binade."""
    rng = np.random.default_rng(seed)
    exps = np.arange(1, 255, dtype=np.int64)
    mant = rng.integers(0, 1 << 23, size=(254, per_binade))
    mant[:, 0] = 0
    mant[:, 1] = (1 << 23) - 1
    bits = (exps[:, None] << 23) | mant
    return bits.ravel().astype(np.uint32).view(np.float32)


def analytic_frsr(**kw):
    d = derive_constants(FRSR, -1)
    p = linear_closed_form(2, d.z_min, d.z_max)
    return make_scheme(FRSR, d.c, [p], **kw)


# -- magic constants ---------------------------------------------------------------

def test_magic_frsr():
    assert magic_constant(FRSR, -0.5) == 0x5F200000
    assert magic_constant(FRSR, derive_constants(FRSR, -1).c) == 0x5F200000


def test_magic_reciprocal_bias_only():
    assert magic_constant(RationalPower(1, 1), 0.0) == 0x7F000000 == 2**23 * 254


def test_magic_cube_root_degree2():
    d = derive_constants(RationalPower(1, 3), 0)
    assert d.c == pytest.approx(1 / 3, abs=1e-15)
    assert magic_constant(RationalPower(1, 3), d.c) == 0x54B8E38E


def test_magic_out_of_range():
    with pytest.raises(DomainError):
        magic_constant(FRSR, 1000.0)
    with pytest.raises(DomainError):
        magic_constant(FRSR, -400.0)


def test_magic_rounds_half_to_even():
    # c chosen so the real constant is exactly k + 1/2
    half = 2.0**-23
    assert magic_constant(FRSR, -0.5 + half) == 0x5F200000  # ...000.5 -> even
    assert magic_constant(FRSR, -0.5 + 3 * half) == 0x5F200002  # ...001.5 -> even


@settings(max_examples=200, deadline=None)
@given(st.floats(-2.0, 2.0), st.sampled_from([(1, 2), (1, 1), (1, 3), (2, 3), (3, 2)]))
def test_magic_inverse(c, ab):
    power = RationalPower(*ab)
    C = magic_constant(power, c)
    # half a step of the integer constant: b * 2^-24 (2^-24 itself only for b = 1)
    assert abs(magic_to_c(power, C) - c) <= power.b * 2.0**-24


def test_magic_inverse_audits_published_constants():
    # the degree-1 listing constant sits a few hundred ulps from the analytic s+1 value
    c = magic_to_c(FRSR, 0x5F5FFF00)
    assert abs(c - 0.5) < 1e-3
    assert magic_constant(FRSR, c) == 0x5F5FFF00


# -- shift forms ---------------------------------------------------------------------

def test_shift_variant_doubling():
    assert shift_variant(0x5F200000, 0) == shift_variant(0x5F200000, 0)
    assert shift_variant(0x5F200000, 0).magic == 0xBE400000
    assert shift_variant(0x5F200000, 1).magic == 0xBE400001
    assert shift_variant(0x5F200000, 0).shift_form == SUBTRACT_THEN_SHIFT


def test_shift_variant_overflow():
    with pytest.raises(DomainError):
        shift_variant(0x80000000, 0)
    with pytest.raises(PreconditionError):
        shift_variant(5, 2)


def test_listing3_constant_has_no_shift_first_form():
    step = shift_variant(0xBE167122 >> 1, 0)
    assert step.magic == 0xBE167122
    assert shift_equivalent(step) is None
    assert shift_equivalent(shift_variant(0x5F200000, 1)) == 0x5F200000


@settings(max_examples=50, deadline=None)
@given(st.integers(0x40000000, 0x7FFFFFFF))
def test_odd_doubled_constant_matches_shift_first(C):
    X = np.random.default_rng(C).integers(0x00800000, 0x7F800000, 4096)
    first = ApproxScheme(FRSR, C)
    odd = ApproxScheme(FRSR, 2 * C + 1, SUBTRACT_THEN_SHIFT)
    even = ApproxScheme(FRSR, 2 * C, SUBTRACT_THEN_SHIFT)
    assert np.array_equal(coarse_bits(first, X), coarse_bits(odd, X))
    # the even form rounds the other way exactly when X is odd
    differs = coarse_bits(even, X) != coarse_bits(first, X)
    assert np.array_equal(differs, X % 2 == 1)


def test_subtract_first_only_for_square_roots():
    with pytest.raises(PreconditionError):
        ApproxScheme(RationalPower(1, 3), 0x54B8E38E, SUBTRACT_THEN_SHIFT)


# -- ordering variants ---------------------------------------------------------------

def test_ordering_counts():
    direct = enumerate_orderings(1, 2, 1, factored=False)
    factored = enumerate_orderings(1, 2, 1, factored=True)
    assert len(direct) == 9 and len(factored) == 7
    assert len(all_orderings(1, 2)) == 16
    ids = [v.identifier for v in direct + factored]
    assert len(set(ids)) == 16
    assert "d1:cxyy" in ids and "d9:(cy)(xy)" in ids and "f1:w(c0-xyy)" in ids


def test_ordering_templates():
    by_id = {v.identifier: v for v in all_orderings(1, 2)}
    assert by_id["d1:cxyy"].template == "y*(c0 - c1*x*y*y)"
    assert by_id["d9:(cy)(xy)"].template == "y*(c0 - c1*y*(x*y))"  # (c1*y)*(x*y)
    assert by_id["f1:w(c0-xyy)"].template == "w = c1*y; w*(c0 - x*y*y)"


def test_orderings_need_degree_one():
    with pytest.raises(PreconditionError):
        enumerate_orderings(1, 2, 2)


def test_orderings_algebraically_equivalent():
    d = derive_constants(FRSR, -1)
    p = linear_closed_form(2, d.z_min, d.z_max)
    x = stratified_inputs(64, seed=3)
    want = None
    for v in all_orderings(1, 2):
        s = make_scheme(FRSR, d.c, [p], [v.identifier])
        got = interpret_exact(s, x)
        if want is None:
            y = coarse_bits(s, x.view(np.uint32).astype(np.int64)).astype(np.uint32).view(np.float32)
            y = y.astype(np.float64)
            cs = [f32(c) for c in (p.coefficients[0], -p.coefficients[1])]
            want = y * (cs[0] - cs[1] * x.astype(np.float64) * y * y)
        # slot rounding to binary32 differs between direct and factored forms
        assert np.max(np.abs(got / want - 1)) < (1e-13 if not v.factored else 2e-7)


def test_orderings_exact_coefficients_equivalent():
    # with coefficients that survive the factoring exactly, all 16 agree to 1e-13
    x = stratified_inputs(64, seed=4).astype(np.float64)
    y = 1 / np.sqrt(x) * 1.01
    p0, p1 = 1.5, -0.5
    vals = []
    for v in all_orderings(1, 2):
        s0, s1 = v.slots(p0, p1)
        prog = expr.parse(v.template)
        vals.append(expr.evaluate_exact(prog, {"x": x, "y": y.copy()}, (s0, s1)))
    for v in vals[1:]:
        assert np.max(np.abs(v / vals[0] - 1)) < 1e-13


def test_other_power_orderings():
    assert len(enumerate_orderings(1, 1)) == 3
    assert len(enumerate_orderings(1, 3)) > 9


# -- s alternatives ------------------------------------------------------------------

def test_s_alternatives_counts():
    assert len(s_alternatives(FRSR, derive_constants(FRSR, -1))) == 2
    assert len(s_alternatives(RationalPower(1, 1), derive_constants(RationalPower(1, 1), -1))) == 1
    assert len(s_alternatives(RationalPower(1, 3), derive_constants(RationalPower(1, 3), -1))) == 3


def test_s_alternatives_magics_step_by_one_in_c():
    alts = s_alternatives(FRSR, derive_constants(FRSR, -1))
    assert alts[0].magic == 0x5F200000
    assert alts[1].magic == magic_constant(FRSR, 0.5)
    assert alts[1].c - alts[0].c == pytest.approx(1.0, abs=2**-22)


def test_s_alternatives_match_rederived_minimax():
    power = RationalPower(1, 3)
    base = derive_constants(power, -1)
    alts = s_alternatives(power, base)
    for j, s in enumerate(alts):
        p, _ = remez_general(3, 1, base.z_min * 2**j, base.z_max * 2**j)
        slots = s.stages[0].coefficients
        assert slots[0] == pytest.approx(p.coefficients[0], rel=1e-7)
        assert slots[1] == pytest.approx(-p.coefficients[1], rel=1e-7)


def test_s_alternative_power_of_two_exact_for_reciprocal():
    power = RationalPower(1, 1)
    base = derive_constants(power, -1)
    p = linear_closed_form(1, base.z_min, base.z_max)
    q = p.scaled(0.5, 2.0)
    assert q.coefficients[0] * 2 == p.coefficients[0]
    assert q.coefficients[1] * 4 == p.coefficients[1]


# -- interpreter ---------------------------------------------------------------------

def _f32(v):
    return struct.unpack("<f", struct.pack("<f", v))[0]


def test_quake_at_one_hand_trace():
    X = struct.unpack("<I", struct.pack("<f", 1.0))[0]
    y = struct.unpack("<f", struct.pack("<I", 0x5F3759DF - (X >> 1)))[0]
    h = _f32(0.5 * 1.0)
    t = _f32(_f32(h * y) * y)
    want = _f32(y * _f32(1.5 - t))
    got = interpret(QUAKE, 1.0)
    assert got == want
    assert got == pytest.approx(0.998307, abs=5e-7)


def test_interpret_rejects_non_normal():
    for bad in (0.0, -1.0, 1e-45, np.inf, np.nan):
        with pytest.raises(DomainError):
            interpret(QUAKE, bad)
    with pytest.raises(DomainError):
        interpret(QUAKE, np.array([1.0, 1e-40], dtype=np.float32))


def test_coarse_only_scheme():
    s = ApproxScheme(FRSR, 0x5F37642F)
    x = stratified_inputs(8)
    X = x.view(np.uint32)
    want = (np.uint32(0x5F37642F) - (X >> np.uint32(1))).view(np.float32)
    assert np.array_equal(interpret(s, x).view(np.uint32), want.view(np.uint32))


def test_interpret_near_equioscillation_nodes():
    s = analytic_frsr()
    d = derive_constants(FRSR, -1)
    p = linear_closed_form(2, d.z_min, d.z_max)
    x = np.linspace(1.0, 4.0, 200001, dtype=np.float32)
    err = 1 - interpret_exact(s, x) * np.sqrt(x.astype(np.float64))
    assert np.max(np.abs(err)) == pytest.approx(p.minimax_error, rel=1e-4)


def test_scheme_validation():
    with pytest.raises(PreconditionError):
        SchemeStage("y*c0", (0.1,))  # not a binary32 value
    with pytest.raises(PreconditionError):
        ApproxScheme(FRSR, 1 << 32)
    with pytest.raises(PreconditionError):
        ApproxScheme(FRSR, 0, stages=(SchemeStage("y*(c0 - c1*x)", (1.0,)),))
    with pytest.raises(PreconditionError):
        ApproxScheme(FRSR, 0, stages=(SchemeStage("y*q", ()),))


def test_scheme_json_round_trip():
    for entry in load_catalog()["entries"]:
        s = catalog_scheme(entry)
        if s is None:
            continue
        d = s.to_dict()
        assert d["magic"].startswith("0x")
        back = ApproxScheme.from_dict(json.loads(json.dumps(d)))
        assert back == s
        assert json.dumps(back.to_dict()) == json.dumps(d)


def test_c_property_inverts_magic():
    assert analytic_frsr().c == -0.5
    assert analytic_frsr(shift_form=SUBTRACT_THEN_SHIFT, parity_bit=1).c == pytest.approx(-0.5 + 2**-23)


# -- emission ------------------------------------------------------------------------

def _emit_cases():
    cases = [catalog_scheme(e) for e in load_catalog()["entries"] if e["scheme"] is not None]
    d3 = derive_constants(RationalPower(1, 3), 0)
    cases.append(make_scheme(RationalPower(1, 3), d3.c,
                             [remez_general(3, 2, d3.z_min, d3.z_max)[0]], name="frcr_deg2"))
    c, p = optimize_monic_c(FRSR, 2)
    cases.append(make_scheme(FRSR, c, [p], name="mon2"))
    ch = build_chain(FRSR, -1, [1, 1])
    cases.append(scheme_from_chain(monicize_chain(ch), name="iter_monic"))
    cases.append(scheme_from_chain(shared_u_chain(ch), name="iter_shared"))
    cases.append(analytic_frsr(shift_form=SUBTRACT_THEN_SHIFT, parity_bit=0, name="frsr_even"))
    d = derive_constants(RationalPower(3, 2), -1)
    cases.append(make_scheme(RationalPower(3, 2), d.c, [linear_closed_form(2, d.z_min, d.z_max)],
                             name="pow_m3_2"))
    return cases


def test_emit_listing4_shape():
    src = emit_source(catalog_scheme("listing4"), "c99")
    assert "float FRSR_Deg1(float x)" in src
    assert "Y = 0x5F5FFF00u - (X >> 1);" in src
    assert "y = y*(1.18931651f - x*y*y*0.248899564f);" in src
    assert "memcpy(&X, &x, sizeof X);" in src


def test_emit_listing1_shape():
    src = emit_source(catalog_scheme("listing1"), "c99")
    assert "Y = 0x5F37642Fu - (X >> 1);" in src
    assert "y = " not in src.split("memcpy(&y")[1]


def test_emit_listing10_integer_division():
    src = emit_source(catalog_scheme("listing10"), "c99")
    assert "Y = 0x54B8E38Eu - X/3u;" in src
    assert "z = x*y*y*y;" in src
    assert "y = y*(1.37399483f - z*(0.47285828f - z*0.0928232521f));" in src


def test_emit_two_thirds_uses_wide_product():
    src = emit_source(catalog_scheme("listing8"), "c99")
    assert "0x69BC56FCu - (uint32_t)((uint64_t)X*2u/3u)" in src or "0x69BC56FCu - 2u*X/3u" in src


def test_emit_unsupported_format():
    with pytest.raises(PreconditionError):
        emit_source(QUAKE, "fortran")


def test_emit_identifiers():
    assert identifier("frsr linear") == "frsr_linear"
    assert identifier("3x") == "k_3x"
    assert identifier("---") == "approx"


def test_emit_deterministic():
    for s in _emit_cases():
        assert emit_source(s, "c99") == emit_source(ApproxScheme.from_dict(s.to_dict()), "c99")


@pytest.mark.parametrize("scheme", _emit_cases(), ids=lambda s: s.name)
def test_native_emission_fidelity(scheme):
    fn = load_native(emit_source(scheme, "native"), scheme.name)
    x = stratified_inputs()
    got = np.asarray(fn(x), dtype=np.float32)
    assert np.array_equal(got.view(np.uint32), interpret(scheme, x).view(np.uint32))
    assert isinstance(fn(np.float32(2.0)), (np.floating, np.ndarray))


HARNESS = """
#include <stddef.h>
void apply_all(const float *in, float *out, size_t n)
{
    for (size_t i = 0; i < n; i++)
        out[i] = %s(in[i]);
}
"""


@pytest.mark.skipif(shutil.which("gcc") is None, reason="gcc not available")
def test_c99_emission_fidelity(tmp_path):
    import ctypes

    cases = _emit_cases()
    parts = []
    for i, s in enumerate(cases):
        text = emit_source(s, "c99")
        name = identifier(s.name)
        parts.append(text.replace(f"float {name}(float x)", f"float k{i}_{name}(float x)"))
        parts.append(HARNESS.replace("apply_all", f"apply_{i}") % f"k{i}_{name}")
    src = "\n".join(parts)
    c_file = tmp_path / "kernels.c"
    so_file = tmp_path / "kernels.so"
    c_file.write_text(src)
    subprocess.run(["gcc", "-std=c99", "-O2", "-ffp-contract=off", "-Wall", "-Werror", "-Wno-unknown-pragmas",
                    "-shared", "-fPIC", "-o", str(so_file), str(c_file)], check=True)
    lib = ctypes.CDLL(str(so_file))
    x = stratified_inputs()
    ptr = ctypes.POINTER(ctypes.c_float)
    for i, s in enumerate(cases):
        out = np.empty_like(x)
        fn = getattr(lib, f"apply_{i}")
        fn(x.ctypes.data_as(ptr), out.ctypes.data_as(ptr), ctypes.c_size_t(x.size))
        want = interpret(s, x)
        assert np.array_equal(out.view(np.uint32), want.view(np.uint32)), s.name


def test_magic_constant_exact_fraction():
    # the real-valued constant is an exact rational; no float rounding sneaks in
    exact = Fraction(2**23, 2) * (Fraction(-1, 2) + 127 * 3)
    assert exact == 0x5F200000
