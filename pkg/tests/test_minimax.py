import math

import mpmath
import numpy as np
import pytest
from scipy.optimize import brentq

from fastroot.derive import derive_constants, z_range
from fastroot.errors import PreconditionError, SolverError
from fastroot.minimax import (
    Polynomial, dense_peak, linear_closed_form, optimize_monic_c, relative_error_at,
    relative_error_dd, remez_general, remez_monic,
)
from fastroot.pseudolog import RationalPower

FRSR = (0.75, 27 / 32)
RECIP = (math.sqrt(2) / 2, (3 + 2 * math.sqrt(2)) / 8)


def test_linear_frsr():
    p = linear_closed_form(2, *FRSR)
    assert p.coefficients[0] == pytest.approx(1.68191391, rel=5e-9)
    assert p.coefficients[1] == pytest.approx(-0.703952009, rel=5e-9)
    assert p.minimax_error == pytest.approx(6.50070298e-4, rel=5e-9)


def test_linear_reciprocal():
    p = linear_closed_form(1, *RECIP)
    assert p.coefficients[0] == pytest.approx(2.78648558, rel=5e-9)
    assert p.coefficients[1] == pytest.approx(-1.94090888, rel=5e-9)
    assert p.minimax_error == pytest.approx(1.11591842e-4, rel=5e-9)


def test_linear_unit_interval():
    p = linear_closed_form(1, 1.0, 2.0)
    assert p.coefficients == pytest.approx((24 / 17, -8 / 17), rel=1e-15)
    assert p.minimax_error == pytest.approx(1 / 17, rel=1e-15)
    # three-point equioscillation, checked on a dense grid
    assert dense_peak(p, 1, 10**5) == pytest.approx(1 / 17, rel=1e-9)


def test_linear_equioscillates_at_mid():
    p = linear_closed_form(2, *FRSR)
    c0, c1 = p.coefficients
    zmid = -c0 / (3 * c1)
    eps = p.minimax_error
    assert relative_error_at(p, 2, 0.75) == pytest.approx(eps, rel=1e-9)
    assert relative_error_at(p, 2, zmid) == pytest.approx(-eps, rel=1e-9)
    assert relative_error_at(p, 2, 27 / 32) == pytest.approx(eps, rel=1e-9)


def test_degenerate_interval():
    with pytest.raises(PreconditionError):
        linear_closed_form(2, 1.0, 1.0)
    with pytest.raises(PreconditionError):
        remez_general(2, 1, 0.0, 1.0)
    with pytest.raises(PreconditionError):
        remez_general(2, 9, 0.5, 1.0)


def test_remez_matches_closed_form_random():
    rng = np.random.default_rng(11)
    for _ in range(20):
        b = int(rng.integers(1, 6))
        lo = float(rng.uniform(0.3, 2.0))
        hi = lo * float(rng.uniform(1.01, 2.5))
        ref = linear_closed_form(b, lo, hi)
        p, _ = remez_general(b, 1, lo, hi)
        assert p.coefficients == pytest.approx(ref.coefficients, rel=1e-10)
        assert p.minimax_error == pytest.approx(ref.minimax_error, rel=1e-10)


def test_degree_zero_constant():
    p, eq = remez_general(2, 0, *FRSR)
    f0, f1 = FRSR[0] ** -0.5, FRSR[1] ** -0.5
    assert p.coefficients[0] == pytest.approx(2 * f0 * f1 / (f0 + f1), rel=1e-15)
    assert len(eq.nodes) == 2 and eq.alternates()


@pytest.mark.parametrize("n", range(0, 7))
@pytest.mark.parametrize("b,interval", [(2, FRSR), (1, RECIP), (3, (0.6, 0.9))])
def test_equioscillation_certificate(n, b, interval):
    p, eq = remez_general(b, n, *interval)
    assert len(eq.nodes) == n + 2
    assert eq.nodes[0] == pytest.approx(interval[0], rel=1e-15)
    assert eq.nodes[-1] == pytest.approx(interval[1], rel=1e-15)
    assert all(x < y for x, y in zip(eq.nodes, eq.nodes[1:]))
    assert eq.alternates()
    assert eq.spread() < 1e-11
    assert 0 <= p.minimax_error < 1
    peak = dense_peak(p, b)
    assert p.minimax_error * (1 - 1e-9) <= peak <= p.minimax_error * (1 + 1e-9)


@pytest.mark.parametrize("n", [1, 2, 4])
def test_monic_certificate(n):
    p, eq = remez_monic(2, n, *FRSR, sign=(-1) ** n)
    assert p.leading == (-1) ** n and p.monic_sign == (-1) ** n
    assert len(eq.nodes) == n + 1
    assert eq.alternates() and eq.spread() < 1e-11
    assert dense_peak(p, 2) == pytest.approx(p.minimax_error, rel=1e-9)


def test_monic_degree_zero_is_one():
    p, _ = remez_monic(2, 0, *FRSR, sign=1)
    assert p.coefficients == (1.0,)
    assert p.minimax_error == pytest.approx(1 - math.sqrt(0.75), rel=1e-15)


def test_monic_sign_validation():
    with pytest.raises(PreconditionError):
        remez_monic(2, 1, *FRSR, sign=0)


def test_degree_six_frsr():
    p, _ = remez_general(2, 6, *FRSR)
    assert p.minimax_error == pytest.approx(8.027660e-12, rel=1e-3)


def test_interval_shrinking_monotone():
    for n in (0, 1, 3):
        errs = [remez_general(2, n, 0.75, 0.75 + w)[0].minimax_error
                for w in (0.4, 0.2, 0.1, 0.05, 0.01)]
        assert all(e1 > e2 for e1, e2 in zip(errs, errs[1:]))


@pytest.mark.parametrize("lo,hi", [(0.001, 1000.0), (1e-6, 1e6), (0.5, 1e4)])
def test_wide_interval_error_below_one(lo, hi):
    for b in (1, 2, 3):
        for n in (0, 1, 2):
            p, _ = remez_general(b, n, lo, hi)
            assert 0 <= p.minimax_error < 1


@pytest.mark.parametrize("b,n", [(1, 2), (2, 3), (3, 1)])
def test_scale_equivariance(b, n):
    lo, hi = 0.7, 0.95
    e1 = remez_general(b, n, lo, hi)[0].minimax_error
    e2 = remez_general(b, n, 1.0, hi / lo)[0].minimax_error
    assert e1 == pytest.approx(e2, rel=1e-12)


def test_narrow_interval_stays_accurate():
    eps = 3.16943580e-7
    p, eq = remez_general(2, 2, (1 - eps) ** 2, (1 + eps) ** 2)
    assert eq.spread() < 1e-11
    assert dense_peak(p, 2, 10**5) == pytest.approx(p.minimax_error, rel=1e-6)


def test_relative_error_identity():
    one = Polynomial((1.0,), 0, 1, (0.5, 2.0), 0.0)
    assert relative_error_at(one, 3, 1.0) == 0.0


def test_dd_error_agrees_with_mpmath():
    p, _ = remez_general(2, 6, *FRSR)
    z = np.linspace(*FRSR, 17)
    got = relative_error_dd(p, 2, z)
    with mpmath.workdps(50):
        want = [float(1 - mpmath.sqrt(mpmath.mpf(v)) * p.eval_mp(v)) for v in z]
    assert np.max(np.abs(got - want)) < 1e-22


def test_json_round_trip():
    p, _ = remez_general(3, 4, 0.6, 0.9)
    q = Polynomial.from_dict(p.to_dict())
    assert q == p and q.local == p.local


def test_solver_error_carries_best():
    with pytest.raises(SolverError) as info:
        remez_general(2, 5, *FRSR, maxiter=1)
    poly, eq, _ = info.value.best
    assert poly.degree == 5


def test_optimize_monic_zero():
    c, p = optimize_monic_c(RationalPower(1, 2), 0, -1)
    assert p.coefficients == (1.0,)
    assert p.minimax_error == pytest.approx(3.4212e-2, rel=1e-4)


def test_optimize_monic_deterministic():
    a = optimize_monic_c(RationalPower(1, 2), 1, -1)
    b = optimize_monic_c(RationalPower(1, 2), 1, -1)
    assert a[0] == b[0] and a[1].coefficients == b[1].coefficients


def _general_lead_minus(power, n, sign):
    def f(t):
        lo, hi = z_range(power, -1 + t)
        return remez_general(power.b, n, lo, hi)[0].leading - sign
    return f


def test_optimize_monic_coincides_with_signed_monic_general():
    power = RationalPower(1, 2)
    c, p = optimize_monic_c(power, 1, -1)
    assert p.minimax_error < 8.802292e-4
    t_root = brentq(_general_lead_minus(power, 1, -1), 0.1, 0.25, xtol=1e-14)
    assert c == pytest.approx(-1 + t_root, abs=1e-6)


def test_optimize_monic_counterexample():
    # for the reciprocal with a cubic the general fit is signed-monic at some c,
    # but that c is not the monic optimum
    power = RationalPower(1, 1)
    c, p = optimize_monic_c(power, 3, -1)
    t_root = brentq(_general_lead_minus(power, 3, -1), 0.85, 0.95, xtol=1e-14)
    assert abs(c - (-1 + t_root)) > 0.1
    lo, hi = z_range(power, -1 + t_root)
    at_root = remez_monic(1, 3, lo, hi, -1)[0].minimax_error
    assert p.minimax_error < at_root
    # the optimum found sits at the rho-optimal constant
    assert c == pytest.approx(derive_constants(power, -1).c, abs=1e-6)


def test_monic_degree_six_frsr():
    _, p = optimize_monic_c(RationalPower(1, 2), 6, -1)
    assert p.minimax_error == pytest.approx(8.027828e-12, rel=1e-3)
