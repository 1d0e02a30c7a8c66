import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hmmrd.reaction import (BarkleyParams, barkley, constant_reaction, growth_admissibility_check,
                            linear_reaction, nullcline_diagnostics, zero_reaction)

EX1 = BarkleyParams(rho=0.005, a=0.3, b=0.01)


def test_barkley_pointwise_value():
    # 1/rho * u (1-u) (u - (v+b)/a) in exact rationals
    rho, a, b = Fraction(5, 1000), Fraction(3, 10), Fraction(1, 100)
    u, v = Fraction(1, 2), Fraction(1, 10)
    exact = u * (1 - u) * (u - (v + b) / a) / rho
    assert exact == Fraction(20, 3)
    assert barkley(EX1).f(0.5, 0.1) == pytest.approx(float(exact), rel=1e-14)


def test_barkley_roots_and_g():
    r = barkley(EX1)
    v = np.linspace(-1, 2, 31)
    np.testing.assert_array_equal(r.f(np.zeros_like(v), v), 0.0)
    np.testing.assert_array_equal(r.f(np.ones_like(v), v), 0.0)
    s = np.linspace(-3, 3, 13)
    np.testing.assert_array_equal(r.g(s, s), 0.0)
    assert r.f(0.0, 0.0) == 0.0 and r.g(0.0, 0.0) == 0.0
    assert r.f(1.0, 1.0) == 0.0 and r.g(1.0, 1.0) == 0.0


def test_barkley_sign_structure():
    r = barkley(EX1)
    nc = nullcline_diagnostics(EX1)
    for v in (0.0, 0.05, 0.1):
        th = float(nc.threshold(v))
        assert 0 < th < 1
        lo = np.linspace(th * 1e-3, th * (1 - 1e-3), 50)
        hi = np.linspace(th + 1e-3 * (1 - th), 1 - 1e-3, 50)
        assert np.all(r.f(lo, v) < 0)
        assert np.all(r.f(hi, v) > 0)


def test_threshold_and_fixed_points():
    nc = nullcline_diagnostics(EX1)
    assert float(nc.threshold(0.0)) == pytest.approx(1 / 30, rel=1e-14)
    other = nullcline_diagnostics(BarkleyParams(rho=0.9, a=0.3, b=0.01))
    assert nc.fixed_points == other.fixed_points == ((0.0, 0.0), (1.0, 1.0))
    assert "u = v" in nc.v_line


@given(s=st.floats(-10, 10), x1=st.floats(-10, 10), x2=st.floats(-10, 10))
def test_affine_in_second_argument(s, x1, x2):
    r = barkley(EX1)
    if abs(x1 - x2) < 1e-3:
        return
    q = (r.f(s, x1) - r.f(s, x2)) / (x1 - x2)
    assert q == pytest.approx(float(r.f2(s)), rel=1e-7, abs=1e-7 * (1 + abs(float(r.f1(s)))))
    qg = (r.g(s, x1) - r.g(s, x2)) / (x1 - x2)
    assert qg == pytest.approx(r.alpha, rel=1e-9)


def test_parameter_validation():
    with pytest.raises(ValueError):
        BarkleyParams(rho=0.0, a=0.3, b=0.01)
    with pytest.raises(ValueError):
        BarkleyParams(rho=0.1, a=-1.0, b=0.01)


def test_zero_and_constant_kinetics():
    z = zero_reaction()
    assert z.is_zero and np.all(z.f(np.ones(3), np.ones(3)) == 0)
    c = constant_reaction(2.0, -1.0)
    np.testing.assert_array_equal(c.f(np.zeros(2), np.ones(2)), 2.0)
    np.testing.assert_array_equal(c.g(np.zeros(2), np.ones(2)), -1.0)


def test_growth_linear_kinetics_global():
    rep = growth_admissibility_check(linear_reaction(0.5, -2.0, r=0.3, c=1.0, alpha=-1.0))
    assert rep.admissible
    assert rep.c2 == pytest.approx(2.0)
    assert rep.c1 == pytest.approx(0.5, abs=1e-9)
    assert rep.c3 == pytest.approx(0.3)
    assert rep.c4 == pytest.approx(1.0)
    assert rep.c5 == 0.0


def test_growth_barkley_global_inadmissible():
    rep = growth_admissibility_check(barkley(EX1))
    assert not rep.admissible
    assert math.isinf(rep.c2) and math.isinf(rep.c3)
    assert any("f1" in n for n in rep.notes)


def test_growth_barkley_interval():
    rep = growth_admissibility_check(barkley(EX1), interval=(-0.1, 1.1))
    assert rep.admissible and all(math.isfinite(c) for c in rep.constants)
    s = np.linspace(-0.1, 1.1, 100001)
    # sampled maxima bound the function on a finer grid up to sampling error
    assert np.abs(barkley(EX1).f1(s)).max() <= rep.c1 * (1 + 1e-3)
    assert rep.c3 == pytest.approx(np.abs(barkley(EX1).f2(s)).max(), rel=1e-3)
    with pytest.raises(ValueError):
        growth_admissibility_check(barkley(EX1), interval=(1.0, 0.0))
