import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cycleforge.bautin import realize, schedule_small_apos
from cycleforge.canonical import CanonicalApos, canonical_energy, to_canonical
from cycleforge.fieldcore import OscParams
from cycleforge.lyapunov import FORWARD_SIGN, closed_v_apos
from cycleforge.simulate import (IntegratorConfig, OrbitEscape, displacement, find_cycles, integrate,
                                 noise_scale, parallel_map, poincare_return, scan_ladder, threads)

TIGHT = IntegratorConfig(rel_tol=2.3e-14, abs_tol=1e-14)
PRECISE = IntegratorConfig(rel_tol=1e-12, abs_tol=1e-14)
CENTER = CanonicalApos(1.0, -1.0)


@pytest.mark.parametrize("kw", [{"rel_tol": 1e-16}, {"abs_tol": 1e-3}, {"order": 4}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        IntegratorConfig(**kw)


def test_threads_env(monkeypatch):
    monkeypatch.setenv("CYCLEFORGE_THREADS", "3")
    assert threads() == 3
    monkeypatch.setenv("CYCLEFORGE_THREADS", "zero")
    with pytest.raises(ValueError):
        threads()
    monkeypatch.delenv("CYCLEFORGE_THREADS")
    assert threads() == 1
    assert parallel_map(abs, [-1, 2, -3], workers=2) == [1, 2, 3]


def test_energy_conserved_over_100_revolutions():
    f = CENTER.field()
    _, T = poincare_return(f, 0.4, PRECISE)
    tr = integrate(f, (0.4, 0.0), 100 * T, PRECISE)
    z = tr(np.linspace(0, 100 * T, 5001))
    H = canonical_energy(CENTER, z[0], z[1])
    assert np.max(np.abs(H - H[0])) < 1e-10


def test_small_orbit_period_is_two_pi():
    _, T = poincare_return(CENTER.field(), 1e-4, PRECISE)
    assert T == pytest.approx(2 * math.pi, abs=1e-6)


def test_odd_symmetry_of_orbits():
    c = CanonicalApos(1.0, -1.0, d1=0.3, d2=-0.2, d3=0.05, d4=0.4, eps=0.05)
    f = c.field()
    ts = np.linspace(0, 5, 50)
    z1 = integrate(f, (0.3, 0.1), 5, PRECISE)(ts)
    z2 = integrate(f, (-0.3, -0.1), 5, PRECISE)(ts)
    assert np.max(np.abs(z1 + z2)) < 1e-10


def test_forward_backward_reversibility():
    c = CanonicalApos(1.0, -1.0, d2=0.5, d3=0.02, eps=0.05)
    f = c.field()
    cfg = IntegratorConfig(rel_tol=1e-13, abs_tol=1e-14)
    end = integrate(f, (0.3, 0.0), 10.0, cfg).z[:, -1]
    back = integrate(f, tuple(end), -10.0, cfg).z[:, -1]
    assert np.max(np.abs(back - [0.3, 0.0])) < 100 * cfg.abs_tol


def test_escape_is_reported():
    with pytest.raises(OrbitEscape):
        integrate(CENTER.field(), (0.9, 0.0), 50.0, IntegratorConfig(box=5.0))
    with pytest.raises(OrbitEscape):
        poincare_return(CENTER.field(), 0.8)


def test_center_returns_to_itself():
    f = CENTER.field()
    for x0 in (0.01, 0.1, 0.3, 0.6):
        h, _ = poincare_return(f, x0, PRECISE)
        assert abs(h - x0) < 1e-10
        assert abs(displacement(f, x0, PRECISE)) < 1e-12


def test_displacement_sign_follows_first_constant():
    c = CanonicalApos(1.0, -1.0, d2=1.0, d4=1.0, eps=0.01)
    V3 = closed_v_apos(c).value(1)
    d = displacement(c.field(), 0.02, PRECISE)
    assert np.sign(d) == FORWARD_SIGN * np.sign(V3)
    assert d == pytest.approx(FORWARD_SIGN * V3 * 0.02 ** 3, rel=1e-2)


def test_energy_and_geometric_displacement_agree():
    c = CanonicalApos(1.0, -1.0, d2=1.0, d3=0.01, eps=0.05)
    f = c.field()
    geo = poincare_return(f, 0.2, PRECISE)[0] - 0.2
    assert displacement(f, 0.2, PRECISE) == pytest.approx(geo, rel=1e-7)


def test_scan_ladder_rules():
    xs = scan_ladder(1e-3, 0.5, 16)
    assert xs[0] == pytest.approx(1e-3) and xs[-1] == pytest.approx(0.5)
    assert np.allclose(np.diff(np.log(xs)), np.log(xs[1] / xs[0]))
    with pytest.raises(ValueError):
        scan_ladder(0.5, 0.1, 16)
    with pytest.raises(ValueError):
        scan_ladder(0.1, 0.5, 4)


def test_no_cycles_without_perturbation():
    rep = find_cycles(CENTER.field(), (1e-3, 0.6), 12, PRECISE)
    assert rep.cycles == []
    assert max(abs(d) for _, d in rep.displacement_samples) < 1e-9
    # a centre is a continuum of closed orbits: every bracket is degenerate
    assert rep.unresolved


@pytest.fixture(scope="module")
def two_cycles():
    # d(r) ~ pi eps (d3 r + d2 r^3 / 4 + d1 r^5 / 8) vanishes near r = 0.1 and r = 0.3
    c = CanonicalApos(1.0, -1.0, d1=8.0, d2=-0.4, d3=0.0009, eps=0.05)
    return c, find_cycles(c.field(), (0.01, 0.6), 16, TIGHT, loop_extent=c.saddle)


def test_two_nested_cycles(two_cycles):
    c, rep = two_cycles
    xs = [cy.section_x for cy in rep.cycles]
    assert len(xs) == 2
    assert xs[0] == pytest.approx(0.1, rel=0.2) and xs[1] == pytest.approx(0.3, rel=0.2)
    assert all(b - a > 10 * rep.xtol for a, b in zip(xs, xs[1:]))
    assert [cy.stability for cy in rep.cycles] == ["Stable", "Unstable"]
    for cy in rep.cycles:
        assert cy.hyperbolic and abs(cy.derivative) > 10 * rep.xtol
        assert cy.amplitude_class == ("Large" if cy.max_abs_x > c.saddle else "Small")
        assert cy.period == pytest.approx(2 * math.pi, rel=0.1)


def test_bracket_contains_cycle(two_cycles):
    c, rep = two_cycles
    f = c.field()
    samples = rep.displacement_samples
    for cy in rep.cycles:
        lo = max(x for x, _ in samples if x <= cy.section_x)
        hi = min(x for x, _ in samples if x >= cy.section_x)
        d_lo = dict(samples)[lo]
        d_hi = dict(samples)[hi]
        assert np.sign(d_lo) != np.sign(d_hi)
        assert abs(poincare_return(f, cy.section_x, TIGHT)[0] - cy.section_x) < 1e-8


def test_report_serializes(two_cycles):
    d = two_cycles[1].to_dict()
    assert {"cycles", "displacement_samples", "search_interval", "unresolved"} <= set(d)


@pytest.fixture(scope="module")
def hopf_family():
    out = {}
    for eps in (0.005, 0.01, 0.02):
        c = realize(schedule_small_apos(1), eps)
        rep = find_cycles(c.field(), (0.08, 0.5), 8, TIGHT, loop_extent=c.saddle)
        out[eps] = [cy.section_x for cy in rep.cycles]
    return out


def test_single_cycle_radius_scales_like_root_eps(hopf_family):
    # the cycle sits where V9 r^9 balances V11 r^11 and V9 / V11 is proportional to eps
    xs = [hopf_family[e] for e in (0.005, 0.01, 0.02)]
    assert all(len(x) == 1 for x in xs)
    r = [x[0] for x in xs]
    assert r[1] / r[0] == pytest.approx(math.sqrt(2), rel=0.02)
    assert r[2] / r[1] == pytest.approx(math.sqrt(2), rel=0.02)


def test_single_cycle_shrinks_as_eps_grows(hopf_family):
    # expected to fail: the radius grows with eps (see the scaling test above)
    r = [hopf_family[e][0] for e in (0.005, 0.01, 0.02)]
    assert r[0] > r[1] > r[2]


def test_mirror_focus_cycles_are_mirror_images():
    c = to_canonical(OscParams(-1.0, 1.0, c2=1.0, c3=-0.49, eps=0.05))
    f = c.field()
    left = find_cycles(f, (0.02, 0.5), 10, TIGHT)
    right = find_cycles(f, (0.02, 0.5), 10, TIGHT, center=(c.mirror_center, 0.0), direction=-1)
    assert len(left.cycles) == 1 and len(right.cycles) == 1
    assert right.cycles[0].section_x == pytest.approx(left.cycles[0].section_x, abs=1e-8)
    assert right.cycles[0].stability == left.cycles[0].stability


@settings(max_examples=10, deadline=None)
@given(st.floats(0.02, 0.5))
def test_noise_scale_positive(r):
    c = CanonicalApos(1.0, -1.0, d2=1.0, eps=0.05)
    assert noise_scale(c.field(), r) > 0
    assert noise_scale(CENTER.field(), r) == 0.0 or noise_scale(CENTER.field(), r) > 0
