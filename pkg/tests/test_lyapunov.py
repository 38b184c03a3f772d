import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cycleforge.canonical import CanonicalAneg, CanonicalApos, random_osc, to_canonical
from cycleforge.lyapunov import (FORWARD_SIGN, aneg_chain, apos_chain, closed_v_aneg, closed_v_apos,
                                 displacement_fit, numeric_series)
from cycleforge.simulate import IntegratorConfig


def test_v1_is_one_and_first_constant():
    sp = closed_v_apos(CanonicalApos(1.0, -1.0, d2=1.0, d4=1.0, eps=0.01))
    assert sp.entries[0] == (0, 1.0, True)
    assert sp.value(1) == pytest.approx(-0.01 * math.pi, rel=1e-15)
    assert sp.valid(1) and not sp.valid(2)


def test_v3_vanishes_on_bracket_zero():
    sp = closed_v_apos(CanonicalApos(1.0, -1.0, d2=-3.0, d4=1.0, eps=0.01))
    assert sp.value(1) == 0.0 and sp.valid(2)


def test_closed_forms_reject_trace_and_zero_eps():
    with pytest.raises(ValueError):
        closed_v_apos(CanonicalApos(1.0, -1.0, d3=0.1, eps=0.01))
    with pytest.raises(ValueError):
        closed_v_apos(CanonicalApos(1.0, -1.0, d2=1.0))
    with pytest.raises(ValueError):
        closed_v_aneg(CanonicalAneg(-1.0, 1.0, e3=0.1, eps=0.01))


def test_center_chain_gives_center():
    # the full substitution chain with d4 = 0 leaves every coefficient zero
    a, b, eps, d4 = 1.3, -0.7, 0.02, 0.0
    d6 = 12 * a * a * b * d4 ** 3 * eps ** 2 / (5 * (7 * b * b - 3 * a ** 4 * d4 ** 2 * eps ** 2))
    c = CanonicalApos(a, b, d2=-3 * d4, d1=-6 * b * d4 / a ** 2 - 5 * d6,
                      d5=6 * d4 ** 3 * eps ** 2 / 5 - 16 * b * d6 / a ** 2, d4=d4, d6=d6, eps=eps)
    assert all(v == 0 for v in closed_v_apos(c).values)
    ser = numeric_series(c.field(), 11)
    assert max(abs(ser.u(i)) for i in range(2, 12)) < 1e-9


def test_aneg_v3_example():
    c = CanonicalAneg(-1.0, 1.0, e7=1.0, eps=0.01)
    v3 = closed_v_aneg(c).value(1)
    assert v3 == pytest.approx(3 * math.pi * 0.01 / 8, rel=1e-14)
    assert numeric_series(c.field(), 3).u(3) == pytest.approx(v3, rel=1e-9)


def test_aneg_v3_zero_substitution():
    a, b, e4, e7 = -1.2, 0.8, 0.4, -0.3
    e2 = -3 * (2 * a * e4 + math.sqrt(b) * e7) / (2 * a)
    assert closed_v_aneg(CanonicalAneg(a, b, e2=e2, e4=e4, e7=e7, eps=0.01)).value(1) == pytest.approx(0, abs=1e-17)


def test_series_of_center():
    ser = numeric_series(CanonicalApos(1.0, -1.0).field(), 11)
    assert ser.u(1) == pytest.approx(1.0, abs=1e-14)
    assert max(abs(ser.u(i)) for i in range(2, 12)) < 1e-10


def test_series_rejects_non_rotation():
    with pytest.raises(ValueError):
        numeric_series(CanonicalApos(1.0, -1.0, d3=0.5, eps=0.1).field(), 5)
    with pytest.raises(ValueError):
        numeric_series(CanonicalApos(1.0, -1.0).field(), 13)


@pytest.mark.parametrize("regime", ["apos", "aneg"])
def test_oracle_agreement_each_stage(regime):
    rng = np.random.default_rng(5)
    for _ in range(4):
        c = to_canonical(random_osc(rng, regime))
        c = c.with_(d3=0.0) if regime == "apos" else c.with_(e3=0.0)
        for k in range(5 if regime == "apos" else 4):
            ck = apos_chain(c, k) if regime == "apos" else aneg_chain(c, k)
            sp = closed_v_apos(ck) if regime == "apos" else closed_v_aneg(ck)
            assert sp.valid(k + 1)
            u = numeric_series(ck.field(), 2 * k + 3).u(2 * k + 3)
            assert sp.value(k + 1) == pytest.approx(u, rel=1e-6, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_even_coefficients_vanish_on_chain(seed):
    rng = np.random.default_rng(seed)
    c = apos_chain(to_canonical(random_osc(rng, "apos")).with_(d3=0.0), 4)
    ser = numeric_series(c.field(), 11)
    assert max(abs(ser.u(i)) for i in range(2, 12, 2)) < 1e-10


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_low_even_coefficients_vanish(seed):
    c = to_canonical(random_osc(np.random.default_rng(seed), "apos")).with_(d3=0.0)
    ser = numeric_series(c.field(), 4)
    assert abs(ser.u(2)) < 1e-10 and abs(ser.u(4)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(1e-4, 0.1))
def test_v3_linear_in_eps(d2, d4, eps):
    c = CanonicalApos(1.0, -1.0, d2=d2, d4=d4, eps=eps)
    assert closed_v_apos(c.with_(eps=eps / 2)).value(1) == pytest.approx(closed_v_apos(c).value(1) / 2,
                                                                         rel=1e-14, abs=1e-300)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_validity_flags(seed):
    rng = np.random.default_rng(seed)
    c = to_canonical(random_osc(rng, "apos")).with_(d3=0.0)
    sp = closed_v_apos(c)
    tol = 1e-9 * abs(c.eps)
    for k in range(1, 6):
        assert sp.valid(k) == all(abs(sp.value(j)) < tol for j in range(1, k))


def test_v11_surrogate_sign():
    rng = np.random.default_rng(2)
    for _ in range(4):
        c = aneg_chain(to_canonical(random_osc(rng, "aneg", eps=0.01)).with_(e3=0.0), 4)
        S = closed_v_aneg(c).surrogate
        assert np.sign(S) == np.sign(numeric_series(c.field(), 11).u(11))


def test_displacement_fit_leading_term():
    # only V3 nonzero; forward displacement is FORWARD_SIGN * V3 r^3 at leading order
    c = CanonicalApos(1.0, -1.0, d2=0.5, eps=0.05)
    V3 = closed_v_apos(c).value(1)
    cfg = IntegratorConfig(rel_tol=1e-13, abs_tol=1e-14)
    ratios = []
    for scale in (1.0, 0.5):
        radii = [scale * 0.02 * 1.3 ** k for k in range(8)]
        fit = displacement_fit(c.field(), radii, cfg)
        ratios.append(fit["coefficients"][3] / (FORWARD_SIGN * V3))
        assert np.sign(fit["displacement"][0]) == FORWARD_SIGN * np.sign(V3)
    assert abs(ratios[-1] - 1) < 0.05
    assert abs(ratios[-1] - 1) <= abs(ratios[0] - 1) + 1e-6


def test_displacement_fit_center_and_validation():
    fit = displacement_fit(CanonicalApos(1.0, -1.0).field())
    assert max(abs(d) for d in fit["displacement"]) < 1e-9
    with pytest.raises(ValueError):
        displacement_fit(CanonicalApos(1.0, -1.0).field(), [0.01, 0.02, 0.3])
