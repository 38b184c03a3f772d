import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cycleforge.canonical import (CanonicalAneg, CanonicalApos, formula_residuals, pushforward_coefficients,
                                  random_osc, to_canonical, to_canonical_aneg, to_canonical_apos,
                                  verify_conjugacy)
from cycleforge.fieldcore import OscParams, classify

coef = st.floats(-1, 1, allow_nan=False)


@st.composite
def osc(draw, regime):
    a, b = draw(st.floats(0.25, 4.0)), draw(st.floats(0.25, 4.0))
    a, b = (a, -b) if regime == "apos" else (-a, b)
    return OscParams(a, b, *[draw(coef) for _ in range(6)], eps=draw(st.floats(-0.1, 0.1)))


def test_identity_scaling():
    p = OscParams(1.0, -1.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, eps=0.01)
    c = to_canonical_apos(p)
    assert [c.d1, c.d2, c.d3, c.d4, c.d5, c.d6] == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]
    assert verify_conjugacy(p) < 1e-12


def test_apos_exponents():
    assert to_canonical_apos(OscParams(4.0, -1.0, c3=1.0)).d3 == pytest.approx(0.5)
    assert to_canonical_apos(OscParams(4.0, -1.0, c1=1.0)).d1 == pytest.approx(1 / 32)


def test_aneg_examples():
    assert to_canonical_aneg(OscParams(-0.5, 1.0, c4=1.0)).e4 == pytest.approx(1.0)
    c = to_canonical_aneg(OscParams(-1.0, 1.0))
    assert all(v == 0 for v in c.coeffs.values())
    e5 = to_canonical_aneg(OscParams(-1.0, 1.0, c5=1.0)).e5
    assert e5 == pytest.approx(1 / (8 * math.sqrt(2)), rel=1e-14)
    assert e5 == pytest.approx(0.0883883476, rel=1e-9)


def test_wrong_regime_rejected():
    with pytest.raises(ValueError):
        to_canonical_apos(OscParams(-1.0, 1.0))
    with pytest.raises(ValueError):
        to_canonical_aneg(OscParams(1.0, -1.0))
    with pytest.raises(ValueError):
        CanonicalApos(-1.0, 1.0)
    with pytest.raises(ValueError):
        CanonicalAneg(1.0, -1.0)
    with pytest.raises(ValueError):
        CanonicalApos(1.0, -1.0, d1=math.nan)


@pytest.mark.parametrize("a,b", [(4.0, -1.0), (-1.0, 1.0)])
def test_conjugacy_examples(a, b):
    rng = np.random.default_rng(3)
    p = OscParams(a, b, *rng.uniform(-1, 1, 6), eps=0.03)
    assert verify_conjugacy(p, 100) < 1e-10


def test_conjugacy_needs_samples():
    with pytest.raises(ValueError):
        verify_conjugacy(OscParams(1.0, -1.0), 0)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["apos", "aneg"]).flatmap(osc))
def test_conjugacy_property(p):
    assert verify_conjugacy(p, 50) < 1e-10
    assert max(formula_residuals(p).values()) < 1e-10


@settings(max_examples=30, deadline=None)
@given(osc("apos"))
def test_apos_linear_and_cubic_part(p):
    f = to_canonical(p).field()
    t1, t2 = f.terms(1), f.terms(2)
    assert t1 == {(0, 1): 1.0}
    assert t2[(1, 0)] == -1.0
    assert t2[(3, 0)] == pytest.approx(-2 * p.b / p.a ** 2, rel=1e-15)


@settings(max_examples=30, deadline=None)
@given(osc("aneg"))
def test_aneg_equilibria(p):
    c = to_canonical(p).with_(eps=0.0)
    f = c.field()
    assert classify(f.jacobian(0.0, 0.0))[0] == "Center"
    q1 = c.a / math.sqrt(c.b)
    assert q1 == pytest.approx(c.saddle)
    assert max(abs(v) for v in f(q1, 0.0)) < 1e-12
    assert classify(f.jacobian(q1, 0.0))[0] == "Saddle"
    assert classify(f.jacobian(c.mirror_center, 0.0))[0] == "Center"


def test_pushforward_expansion_matches_formulas():
    p = random_osc(np.random.default_rng(11), "aneg")
    ref = pushforward_coefficients(p)
    c = to_canonical(p)
    assert c.e5 == pytest.approx(ref[(6, 1)], rel=1e-12)
    assert c.e3 == pytest.approx(ref[(0, 1)], rel=1e-12, abs=1e-14)
