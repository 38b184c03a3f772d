import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cycleforge import melnikov as mk
from cycleforge.bautin import (drift_series, e92_threshold, evaluated_drift, loop_base_check, predict, realize,
                               schedule_mixed_aneg, schedule_mixed_apos, schedule_small_aneg,
                               schedule_small_apos, working_eps)
from cycleforge.canonical import CanonicalApos
from cycleforge.fieldcore import classify, divergence_at
from cycleforge.lyapunov import FORWARD_SIGN, closed_v_apos, numeric_series


def test_d6_assignment():
    sch = schedule_small_apos(5, free_signs={"d4": 1, "d63": 1})
    assert sch.coefficient("d62") == pytest.approx(-12 / 35)
    c = realize(sch, 0.01)
    assert c.d6 == pytest.approx(-12 / 35 * 1e-4 + 1e-6, rel=1e-14)


def test_small_apos_rejections():
    with pytest.raises(ValueError):
        schedule_small_apos(6)
    with pytest.raises(ValueError):
        schedule_small_apos(3, free_signs={"d54": 1})
    with pytest.raises(ValueError):
        schedule_small_apos(2, base=(-1.0, 1.0))
    with pytest.raises(ValueError):
        schedule_small_apos(1, free_signs={"d4": 0})


def test_degrees_and_constraints():
    sch = schedule_small_apos(5)
    assert len(sch.poly("d2")) - 1 <= 6
    for name, sign, thr in sch.sign_constraints:
        assert sign * (sch.coefficient(name) - thr) > 0


@pytest.mark.parametrize("d4", [1, -1])
def test_single_cycle_branch(d4):
    sch = schedule_small_apos(1, free_signs={"d4": d4})
    assert [n for n, _, _ in sch.sign_constraints] == ["d4", "d63"]
    c = realize(sch, 0.01)
    V11 = closed_v_apos(c).value(5)
    assert np.sign(FORWARD_SIGN * V11) == -d4
    assert predict(sch).configuration == (1, 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.sampled_from([1, -1]), st.floats(5e-3, 0.01))
def test_alternation_and_hierarchy(s, d4, eps):
    # below eps ~ 3e-3 the eps^6 part of d2 = -3 d4 + d26 eps^6 is lost to rounding
    sch = schedule_small_apos(s, free_signs={"d4": d4})
    ev = evaluated_drift(sch, eps)
    vals = [v for _, v in ev]
    assert [int(np.sign(v)) for v in vals] == [d[2] for d in sch.drift]
    for inner, outer in zip(vals, vals[1:]):
        assert inner * outer < 0
        assert abs(inner) / abs(outer) < 0.1


def test_realized_spectrum_matches_series():
    c = realize(schedule_small_apos(2), 0.01)
    V = closed_v_apos(c).values
    ser = numeric_series(c.field(), 11)
    assert V[2] == pytest.approx(ser.u(7), rel=1e-6)


def test_eps_to_zero_tends_to_center():
    sch = schedule_small_apos(5)
    big = [abs(v) for _, v in evaluated_drift(sch, 1e-2)]
    small = [abs(v) for _, v in evaluated_drift(sch, 1e-4)]
    assert all(s < b for s, b in zip(small, big))
    assert max(small) < 1e-6


def test_realize_rejects_bad_eps():
    sch = schedule_small_apos(1)
    for e in (0.0, 0.2, math.nan):
        with pytest.raises(ValueError):
            realize(sch, e)


def test_mixed_apos_relations():
    sch = schedule_mixed_apos(0, 3)
    ratio_1 = sch.coefficient("d12") / sch.coefficient("d52")
    ratio_2 = sch.coefficient("d23") / sch.coefficient("d13")
    assert ratio_1 == pytest.approx(2 / 3 * 1 / -1, rel=1e-12)
    assert ratio_2 == pytest.approx(3 / 14 * 1 / -1, rel=1e-12)
    assert predict(sch).configuration == (0, 3)


@pytest.mark.parametrize("s,m", [(0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3)])
def test_mixed_apos_configurations(s, m):
    sch = schedule_mixed_apos(s, m)
    p = predict(sch)
    assert p.configuration == (s, m)
    ev = evaluated_drift(sch, 0.01)
    assert [int(np.sign(v)) for _, v in ev] == [d[2] for d in sch.drift]


def test_mixed_apos_loop_base_zeroes_splitting_and_divergence():
    sch = schedule_mixed_apos(1, 3)
    c = realize(sch, 1e-3)
    assert abs(mk.m1_closed(c)) < 1e-3 * max(abs(v) for v in c.coeffs.values())
    # eps^0 layer of the loop items is empty: every coefficient starts at order eps
    assert all(sch.poly(n)[0] == 0 for n in ("d1", "d2", "d5"))


@pytest.mark.parametrize("s,m", [(2, 1), (2, 3), (3, 2), (4, 1)])
def test_mixed_apos_rank_limit(s, m):
    with pytest.raises(ValueError):
        schedule_mixed_apos(s, m)


def test_mixed_apos_bounds():
    with pytest.raises(ValueError):
        schedule_mixed_apos(0, 4)
    with pytest.raises(ValueError):
        schedule_mixed_apos(3, 3)


def test_printed_loop_base_consistency_reported():
    rep = loop_base_check(1.3, -0.7, 0.2, 0.5, -0.3)
    # printed d10 follows from the printed d50 through phi2
    assert rep["d10"]["chain_discrepancy"] < 1e-12
    for key in ("d50", "d10", "d20"):
        assert set(rep[key]) >= {"printed", "derived", "discrepancy"}
    c = CanonicalApos(1.3, -0.7, d3=0.2, d4=0.5, d6=-0.3, d5=rep["d50"]["derived"], d1=rep["d10"]["derived"],
                      d2=rep["d20"]["derived"])
    assert abs(mk.m1_closed(c)) < 1e-10
    assert abs(mk.div_p2(c.with_(eps=1.0))) < 1e-10
    assert abs(mk.loop_stability_integral(c)) < 1e-8


def test_printed_loop_base_values_match_phi_chain():
    # expected to fail: the printed eps^0 d50 and d20 differ from the phi-derived ones
    rep = loop_base_check(1.3, -0.7, 0.2, 0.5, -0.3)
    assert max(rep[k]["discrepancy"] for k in ("d50", "d10", "d20")) < 1e-10


def _quad_m1(c):
    return mk.M1_ORIENTATION * mk.m1_flow(c)[0]


def test_printed_splitting_term_from_third_layer():
    a, b, d23 = 1.3, -0.7, 0.8
    c = CanonicalApos(a, b, d2=d23)
    assert _quad_m1(c) == pytest.approx(-a ** 4 * d23 / (15 * math.sqrt(2) * b * b), rel=1e-6)


@pytest.mark.parametrize("a,b", [(1.0, -1.0), (1.3, -0.7)])
def test_printed_divergence_term_from_second_layer(a, b):
    # second layer keeps the splitting zero: d2 = 3 a^2 d1 / (14 b); the a != 1 case is expected to fail
    d12 = 0.9
    c = CanonicalApos(a, b, d1=d12, d2=3 * a * a * d12 / (14 * b))
    assert abs(mk.m1_flow(c)[0]) < 1e-12
    div = divergence_at(c.with_(eps=1.0).field(), (c.saddle, 0.0))
    assert div == pytest.approx(a ** 2 * d12 / (7 * b * b), rel=1e-6)


def test_printed_splitting_term_from_first_layer():
    # expected to fail: with the first layer d5 = d51 and d1, d2 keeping splitting and
    # divergence at zero, neither the splitting nor the stability integral equals the printed term
    a, b, d51 = 1.0, -1.0, 1.0
    c = mk.on_loop_manifold(CanonicalApos(a, b, d5=d51))
    assert c.d1 == pytest.approx(2 * a * a * d51 / (3 * b), rel=1e-12)
    assert abs(divergence_at(c.with_(eps=1.0).field(), (c.saddle, 0.0))) < 1e-12
    printed = -a ** 7 * d51 / (315 * math.sqrt(-2 * b ** 7))
    m1, stab = _quad_m1(c), mk.loop_stability_integral(c)
    assert math.isclose(m1, printed, rel_tol=1e-6) or math.isclose(stab, printed, rel_tol=1e-6), (m1, stab, printed)


def test_small_aneg_base_and_chain():
    sch = schedule_small_aneg(5)
    a, b = sch.base
    e7, e4 = sch.coefficient("e70"), sch.coefficient("e40")
    assert sch.coefficient("e20") == pytest.approx(-3 * math.sqrt(b) * e7 / (2 * a) - 3 * e4)
    assert sch.coefficient("e91") == pytest.approx(-2 * a * sch.coefficient("e51") / (7 * math.sqrt(b)))
    assert sch.coefficient("e12") == pytest.approx(2 * e4 * e7 ** 2 / 3)
    thr = e92_threshold(a, b, e4, sch.coefficient("e60"), e7, sch.coefficient("e80"))
    assert sch.coefficient("e92") - thr >= max(abs(thr), 1.0) - 1e-12
    signs = {n: s for n, s, _ in sch.sign_constraints}
    assert signs["e51"] == 1 and signs["e24"] == -1


@pytest.mark.parametrize("sign", [1, -1])
def test_aneg_focus_stability_follows_trace_coefficient(sign):
    sch = schedule_small_aneg(5)
    c = realize(sch, 0.01)
    c = c.with_(e3=sign * abs(c.e3))
    kind, eig = classify(c.field().jacobian(0.0, 0.0))
    assert kind == "WeakFocus"
    assert np.sign(eig[0].real) == sign


@pytest.mark.parametrize("s", range(1, 6))
def test_small_aneg_alternation(s):
    sch = schedule_small_aneg(s)
    ev = evaluated_drift(sch, 0.01)
    assert [int(np.sign(v)) for _, v in ev] == [d[2] for d in sch.drift]
    assert predict(sch).configuration == (2 * s, 0)


def test_twelve_cycle_configuration():
    sch = schedule_mixed_aneg(2, 2, 2)
    p = predict(sch)
    assert p.configuration == (4, 8) and sum(p.configuration) == 12
    assert 0.01 in [round(e, 12) for e in working_eps(sch, grid=(0.01,))]


@pytest.mark.parametrize("m,k,expected", [(0, 1, (0, 1)), (1, 1, (0, 4)), (1, 2, (0, 5)), (2, 1, (0, 7))])
def test_mixed_aneg_loop_counts(m, k, expected):
    sch = schedule_mixed_aneg(0, m, k)
    assert predict(sch).configuration == expected
    ev = evaluated_drift(sch, 0.01)
    assert [int(np.sign(v)) for _, v in ev] == [d[2] for d in sch.drift]


def test_mixed_aneg_narrow_window():
    sch = schedule_mixed_aneg(3, 0, 1)
    good = working_eps(sch)
    assert good and max(good) < 0.01


@pytest.mark.parametrize("cfg", [(4, 0, 1), (5, 0, 2), (3, 2, 1), (0, 3, 1), (1, 0, 3)])
def test_mixed_aneg_rejections(cfg):
    with pytest.raises(ValueError):
        schedule_mixed_aneg(*cfg)


def test_drift_series_leading_orders():
    sch = schedule_mixed_apos(0, 3)
    ser = drift_series(sch)
    for q, layer, sign in sch.drift:
        # trace and V carry an extra factor eps; the loop functionals do not
        lead = layer + (q not in ("I", "Dv", "M"))
        nz = np.flatnonzero(np.abs(ser[q]) > 1e-9)
        assert nz[0] == lead and np.sign(ser[q][lead]) == sign


def test_schedule_serializes():
    d = schedule_mixed_aneg(1, 1, 2).to_dict()
    assert d["regime"] == "Aneg" and d["target"] == [1, 1, 2]
    assert set(d["assignments"]) == {f"e{k}" for k in range(1, 10)}
