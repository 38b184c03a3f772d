"""Separatrix loops, first-order Melnikov integrals and loop stability.

apos: the saddles (+-x_s, 0), x_s = a / sqrt(-2b), are joined by the arcs
    y = +-(sqrt(-b)/a) (x_s^2 - x^2)
at energy level -a^2 / 8b.  Upper arc A1 runs left to right.

aneg: with u = x sqrt(b)/a the level a^2/8b reads
    y^2 = (a^2/4b) (u - 1)^2 (1 + 2u - u^2),
a figure eight through the saddle q1 (u = 1).  L_r (u in [1 - sqrt2, 1])
surrounds the origin, L_l (u in [1, 1 + sqrt2]) surrounds q2.

Every closed form below has a quadrature counterpart.  Quadratures follow
the unperturbed flow.  Endpoint singularities of dt = dx / y are removed by
the substitution (offset from endpoint) = s^2, with the offset fed exactly
into the factored level-set formula so no cancellation occurs near the
saddles.

Frozen orientation signs (closed = sign * flow-oriented quadrature):
M1 over A1 carries -1, M2 over the upper half of L_r carries +1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from math import comb
from typing import Callable, Dict, Tuple

import numpy as np
from scipy import integrate

from .canonical import APOS_MONOMIALS, ANEG_MONOMIALS, CanonicalAneg, CanonicalApos, canonical_energy
from .fieldcore import Equilibrium, classify

SQ2 = math.sqrt(2.0)
PI = math.pi

M1_ORIENTATION = -1
M2_ORIENTATION = +1
QUAD_TOL = 1e-10
N_SAMPLES = 2048


@dataclass(frozen=True)
class Arc:
    name: str
    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class LoopGeometry:
    kind: str  # "Heteroclinic" or "Homoclinic"
    arcs: Tuple[Arc, ...]
    saddles: Tuple[Equilibrium, ...]
    level: float
    a: float
    b: float

    def arc(self, name: str) -> Arc:
        for arc in self.arcs:
            if arc.name == name:
                return arc
        raise KeyError(name)


@dataclass(frozen=True)
class MelnikovResult:
    closed_form: float
    quadrature: float
    abs_error_estimate: float
    orientation_sign: int

    @property
    def agrees(self) -> bool:
        diff = abs(self.closed_form - self.orientation_sign * self.quadrature)
        return diff <= max(1e-8, 1e-6 * abs(self.quadrature))


class QuadratureError(ArithmeticError):
    pass


def _cheb01(n: int) -> np.ndarray:
    """n Chebyshev–Lobatto points on [0, 1], ascending."""
    return 0.5 * (1 - np.cos(np.pi * np.arange(n) / (n - 1)))


def _saddle(c, x: float) -> Equilibrium:
    kind, eig = classify(c.with_(eps=0.0).field().jacobian(x, 0.0))
    return Equilibrium((x, 0.0), kind, eig)


# ------------------------------------------------------------------ geometry

def _apos_y(a, b, dl, dr):
    """Upper-arc height from the offsets dl = x + x_s, dr = x_s - x."""
    return math.sqrt(-b) / a * dl * dr if np.isscalar(dl) else np.sqrt(-b) / a * dl * dr


def loop_apos(a: float, b: float) -> LoopGeometry:
    if not (a > 0 and b < 0):
        raise ValueError("heteroclinic loop needs a > 0, b < 0")
    xs = a / math.sqrt(-2 * b)
    t = _cheb01(N_SAMPLES)
    dl = 2 * xs * t
    dr = 2 * xs - dl
    x = -xs + dl
    yu = _apos_y(a, b, dl, dr)
    c = CanonicalApos(a, b)
    arcs = (Arc("A1", x, yu), Arc("A2", x[::-1].copy(), -yu[::-1]))
    return LoopGeometry("Heteroclinic", arcs, (_saddle(c, xs), _saddle(c, -xs)), -a * a / (8 * b), a, b)


def _aneg_y(a, b, one_minus_u, u_minus_lo, hi_minus_u):
    """|y| on the figure eight from exact offsets in u."""
    return abs(a) / (2 * math.sqrt(b)) * np.abs(one_minus_u) * np.sqrt(u_minus_lo * hi_minus_u)


def loop_aneg(a: float, b: float) -> LoopGeometry:
    if not (a < 0 and b > 0):
        raise ValueError("homoclinic loops need a < 0, b > 0")
    sb = math.sqrt(b)
    lo, hi = 1 - SQ2, 1 + SQ2
    t = _cheb01(N_SAMPLES)
    arcs = []
    # L_r: u from 1 down to 1 - sqrt2 on the upper half (x increases since a < 0)
    u = 1 - SQ2 * t
    y = _aneg_y(a, b, SQ2 * t, SQ2 * (1 - t), hi - u)
    x = a * u / sb
    arcs += [Arc("Lr_upper", x, y), Arc("Lr_lower", x[::-1].copy(), -y[::-1])]
    # L_l: u from 1 + sqrt2 down to 1 on the upper half
    u = hi - SQ2 * t
    y = _aneg_y(a, b, -SQ2 * (1 - t), u - lo, SQ2 * t)
    x = a * u / sb
    arcs += [Arc("Ll_upper", x, y), Arc("Ll_lower", x[::-1].copy(), -y[::-1])]
    c = CanonicalAneg(a, b)
    return LoopGeometry("Homoclinic", tuple(arcs), (_saddle(c, a / sb),), a * a / (8 * b), a, b)


def level_residual(g: LoopGeometry) -> float:
    c = CanonicalApos(g.a, g.b) if g.kind == "Heteroclinic" else CanonicalAneg(g.a, g.b)
    return max(float(np.max(np.abs(canonical_energy(c, arc.x, arc.y) - g.level))) for arc in g.arcs)


# --------------------------------------------------------------- quadrature

def _q_tables(c) -> Tuple[Dict[int, float], float, float]:
    """Split Q = (G(x) + k2 y^2 + k4 y^4) y into the x-polynomial G and k2, k4."""
    mono = APOS_MONOMIALS if c.regime == "apos" else ANEG_MONOMIALS
    G: Dict[int, float] = {}
    k2 = k4 = 0.0
    for name, (i, j) in mono.items():
        v = getattr(c, name)
        if j == 1:
            G[i] = G.get(i, 0.0) + v
        elif j == 3:
            k2 += v
        else:
            k4 += v
    return G, k2, k4


def _poly(G: Dict[int, float], x):
    return sum(v * x ** i for i, v in G.items()) if G else 0.0 * x


def _quad_pieces(pieces, tol: float = QUAD_TOL):
    total = err = 0.0
    for fn, lo, hi in pieces:
        with np.errstate(all="ignore"):
            with warnings.catch_warnings():
                warnings.simplefilter("error", integrate.IntegrationWarning)
                try:
                    v, e = integrate.quad(fn, lo, hi, epsabs=tol * 1e-3, epsrel=1e-13, limit=400)
                except integrate.IntegrationWarning as exc:
                    raise QuadratureError(str(exc)) from exc
        if not math.isfinite(v):
            raise QuadratureError("non-finite quadrature value")
        total += v
        err += e
    if err > tol:
        raise QuadratureError(f"quadrature error {err:.2e} exceeds {tol:.1e}")
    return total, err


def _apos_pieces(c: CanonicalApos, integrand: Callable):
    """Split A1 at x = 0 and substitute offset = s^2 on each half.

    ``integrand(x, y)`` is the density with respect to x.
    """
    a, b = c.a, c.b
    xs = c.saddle
    S = math.sqrt(xs)

    def left(s):
        dl = s * s
        x = -xs + dl
        return integrand(x, _apos_y(a, b, dl, 2 * xs - dl)) * 2 * s

    def right(s):
        dr = s * s
        x = xs - dr
        return integrand(x, _apos_y(a, b, 2 * xs - dr, dr)) * 2 * s

    return [(left, 0.0, S), (right, 0.0, S)]


def _aneg_pieces(c: CanonicalAneg, integrand: Callable):
    """Upper half of L_r in u, split at the midpoint; density is w.r.t. x (flow order)."""
    a, b = c.a, c.b
    sb = math.sqrt(b)
    lo, hi = 1 - SQ2, 1 + SQ2
    mid = 0.5 * (1 + lo)
    jac = abs(a) / sb  # dx = (a/sqrt b) du and u decreases along the flow
    S1 = math.sqrt(1 - mid)
    S2 = math.sqrt(mid - lo)

    def near_saddle(s):
        om = s * s
        u = 1 - om
        y = _aneg_y(a, b, om, u - lo, hi - u)
        return integrand(a * u / sb, y) * jac * 2 * s

    def near_turn(s):
        ul = s * s
        u = lo + ul
        y = _aneg_y(a, b, 1 - u, ul, hi - u)
        return integrand(a * u / sb, y) * jac * 2 * s

    return [(near_saddle, 0.0, S1), (near_turn, 0.0, S2)]


def _q_density(c):
    G, k2, k4 = _q_tables(c)
    return lambda x, y: (_poly(G, x) + k2 * y * y + k4 * y ** 4) * y


def _stability_density(c):
    G, k2, k4 = _q_tables(c)
    return lambda x, y: (_poly(G, x) + 3 * k2 * y * y + 5 * k4 * y ** 4) / y


# ------------------------------------------------------------- apos closed

def m1_closed(c: CanonicalApos) -> float:
    """Melnikov integral over A1 (overall sign is the published one, -1 times the flow integral)."""
    a, b = c.a, c.b
    return (198 * a ** 6 * b * c.d1 - 924 * a ** 4 * b ** 2 * c.d2 + 9240 * a ** 2 * b ** 3 * c.d3
            - 1584 * a ** 4 * b ** 2 * c.d4 - 55 * a ** 8 * c.d5 + 320 * a ** 6 * b * c.d6) / (13860 * SQ2 * b ** 4)


def m1_flow(c: CanonicalApos) -> Tuple[float, float]:
    """Flow-oriented integral of Q1 dx over A1 (A2 gives the same value, Q being odd in y)."""
    return _quad_pieces(_apos_pieces(c, _q_density(c)))


def m1_quadrature(c: CanonicalApos, g: LoopGeometry | None = None) -> MelnikovResult:
    if g is not None and (g.kind != "Heteroclinic" or (g.a, g.b) != (c.a, c.b)):
        raise ValueError("loop geometry does not match the parameters")
    val, err = m1_flow(c)
    return MelnikovResult(m1_closed(c), val, err, M1_ORIENTATION)


def phi1(c: CanonicalApos) -> float:
    """d2 making M1 vanish."""
    a, b = c.a, c.b
    return (-12 * c.d4 / 7 - 5 * a ** 4 * c.d5 / (84 * b ** 2)
            + a ** 2 * (99 * c.d1 + 160 * c.d6) / (462 * b) + 10 * b * c.d3 / a ** 2)


def div_p2(c: CanonicalApos) -> float:
    """Divergence at the saddle once d2 = phi1 (includes the factor eps)."""
    a, b = c.a, c.b
    return c.eps * (-22 * a ** 6 * c.d5 + a ** 4 * b * (33 * c.d1 - 40 * c.d6)
                    + 198 * a ** 2 * b ** 2 * c.d4 - 924 * c.d3 * b ** 3) / (231 * b ** 3)


def phi2(c: CanonicalApos) -> float:
    """d1 making div_p2 vanish."""
    a, b = c.a, c.b
    return 40 * c.d6 / 33 + 2 * a ** 2 * c.d5 / (3 * b) - 6 * c.d4 * b / a ** 2 + 28 * c.d3 * b ** 2 / a ** 4


def phi3(c: CanonicalApos) -> float:
    """The published d5 discriminator for loop stability, as printed (carries eps).

    It does not zero the stability integral; see ``phi3_corrected``.
    """
    a, b = c.a, c.b
    return c.eps * 6 * b * (-100 * a ** 4 * c.d6 + 231 * a ** 2 * b * c.d4 + 308 * c.d3 * b ** 2) / (11 * a ** 6)


def phi3_corrected(c: CanonicalApos) -> float:
    """d5 at which the stability integral over A1 vanishes (with d1 = phi2, d2 = phi1)."""
    a, b = c.a, c.b
    return (9240 * b ** 3 * c.d3 - 290 * b * a ** 4 * c.d6) / (77 * a ** 6)


def on_loop_manifold(c: CanonicalApos) -> CanonicalApos:
    """Impose d1 = phi2 then d2 = phi1 so the loop persists with zero saddle divergence."""
    c = c.with_(d1=phi2(c))
    return c.with_(d2=phi1(c))


def stability_closed_apos(c: CanonicalApos) -> float:
    """Closed value of the A1 integral of dQ/dy dt, valid once d1 = phi2 and d2 = phi1."""
    a, b = c.a, c.b
    return SQ2 * (-9240 * b ** 3 * c.d3 + 290 * b * a ** 4 * c.d6 + 77 * a ** 6 * c.d5) / (3465 * b ** 3)


# ------------------------------------------------------------- aneg closed

def m2_closed(c: CanonicalAneg) -> float:
    a, b = c.a, c.b
    sb = math.sqrt(b)
    e1, e2, e3, e4, e5, e6, e7, e8, e9 = (getattr(c, f"e{k}") for k in range(1, 10))
    return a ** 2 / (110880 * b ** 4) * (
        32 * SQ2 * (1155 * b ** 3 * e3 + 99 * a ** 2 * b ** 2 * (21 * e2 + 2 * e4) + 32263 * a ** 6 * e5
                    + 5 * a ** 4 * b * (1551 * e1 + 8 * e6) + 1155 * a * b ** 2.5 * e7
                    + 3927 * a ** 3 * b ** 1.5 * e8 + 15675 * a ** 5 * sb * e9)
        - 3465 * a * (32 * a ** 3 * b * e1 + 8 * a * b ** 2 * e2 + 134 * a ** 5 * e5 + 4 * b ** 2.5 * e7
                      + 16 * a ** 2 * b ** 1.5 * e8 + 65 * a ** 4 * sb * e9) * PI)


def m2_flow(c: CanonicalAneg) -> Tuple[float, float]:
    """Flow-oriented integral of Q2 dx over the upper half of L_r."""
    return _quad_pieces(_aneg_pieces(c, _q_density(c)))


def m2_quadrature(c: CanonicalAneg, g: LoopGeometry | None = None) -> MelnikovResult:
    if g is not None and (g.kind != "Homoclinic" or (g.a, g.b) != (c.a, c.b)):
        raise ValueError("loop geometry does not match the parameters")
    val, err = m2_flow(c)
    return MelnikovResult(m2_closed(c), val, err, M2_ORIENTATION)


def phi1_aneg(c: CanonicalAneg) -> float:
    """e2 making M2 vanish."""
    a, b = c.a, c.b
    sb = math.sqrt(b)
    e1, e3, e4, e5, e6, e7, e8, e9 = c.e1, c.e3, c.e4, c.e5, c.e6, c.e7, c.e8, c.e9
    return 1 / (5544 * a ** 2 * b ** 2 * (12 * SQ2 - 5 * PI)) * (
        -32 * SQ2 * (1155 * b ** 3 * e3 + 198 * a ** 2 * b ** 2 * e4 + 32263 * a ** 6 * e5
                     + 5 * a ** 4 * b * (1551 * e1 + 8 * e6) + 1155 * a * b ** 2.5 * e7
                     + 3927 * a ** 3 * b ** 1.5 * e8 + 15675 * a ** 5 * sb * e9)
        + 3465 * a * (32 * a ** 3 * b * e1 + 134 * a ** 5 * e5 + 4 * b ** 2.5 * e7
                      + 16 * a ** 2 * b ** 1.5 * e8 + 65 * a ** 4 * sb * e9) * PI)


def div_q1(c: CanonicalAneg) -> float:
    """Divergence at q1 once e2 = phi1_aneg (includes the factor eps)."""
    a, b = c.a, c.b
    sb = math.sqrt(b)
    e1, e3, e4, e5, e6, e7, e8, e9 = c.e1, c.e3, c.e4, c.e5, c.e6, c.e7, c.e8, c.e9
    return c.eps / (5544 * b ** 3 * (12 * SQ2 - 5 * PI)) * (
        -64 * SQ2 * (-462 * b ** 3 * e3 + 99 * a ** 2 * b ** 2 * e4 + 15092 * a ** 6 * e5
                     + a ** 4 * b * (2838 * e1 + 20 * e6) - 462 * a * b ** 2.5 * e7
                     + 924 * a ** 3 * b ** 1.5 * e8 + 6798 * a ** 5 * sb * e9)
        + 3465 * (24 * a ** 4 * b * e1 - 8 * b ** 3 * e3 + 126 * a ** 6 * e5 - 4 * a * b ** 2.5 * e7
                  + 8 * a ** 3 * b ** 1.5 * e8 + 57 * a ** 5 * sb * e9) * PI)


def phi2_aneg(c: CanonicalAneg) -> float:
    """e1 making div_q1 vanish."""
    a, b = c.a, c.b
    sb = math.sqrt(b)
    e3, e4, e5, e6, e7, e8, e9 = c.e3, c.e4, c.e5, c.e6, c.e7, c.e8, c.e9
    return 1 / (264 * a ** 4 * b * (688 * SQ2 - 315 * PI)) * (
        64 * SQ2 * (462 * b ** 3 * e3 - 99 * a ** 2 * b ** 2 * e4 - 15092 * a ** 6 * e5 - 20 * a ** 4 * b * e6
                    + 462 * a * b ** 2.5 * e7 - 924 * a ** 3 * b ** 1.5 * e8 - 6798 * a ** 5 * sb * e9)
        + 3465 * (126 * a ** 6 * e5 + sb * (-8 * b ** 2.5 * e3 - 4 * a * b ** 2 * e7
                                             + 8 * a ** 3 * b * e8 + 57 * a ** 5 * e9)) * PI)


def phi3_aneg(c: CanonicalAneg) -> float:
    """The published e5 discriminator, as printed (carries eps).

    It does not zero the stability integral; see ``phi3_aneg_corrected``.
    """
    a, b = c.a, c.b
    sb = math.sqrt(b)
    e3, e4, e6, e7, e8, e9 = c.e3, c.e4, c.e6, c.e7, c.e8, c.e9
    b15, b25 = b ** 1.5, b ** 2.5
    K1 = 1 / (22 * a ** 6 * (-429824 + 40320 * SQ2 - 99225 * PI + 154035 * SQ2 * PI))
    inner = (-39424 * b25 * e3 - 3252480 * SQ2 * b25 * e3 - 1626240 * a ** 2 * b15 * e4
             - 665280 * SQ2 * a ** 2 * b15 * e4 - 622080 * a ** 4 * sb * e6 - 134400 * SQ2 * a ** 4 * sb * e6
             - 39424 * a * b ** 2 * e7 - 73920 * SQ2 * a * b ** 2 * e7 + 78848 * a ** 3 * b * e8
             + 147840 * SQ2 * a ** 3 * b * e8 - 630784 * a ** 5 * e9 - 123200 * SQ2 * a ** 5 * e9
             + 1034880 * SQ2 * b25 * e3 * PI + 582120 * SQ2 * a ** 2 * b15 * e4 * PI
             + 184800 * SQ2 * a ** 4 * sb * e6 * PI + 32340 * SQ2 * a * b ** 2 * e7 * PI
             - 64680 * SQ2 * a ** 3 * b * e8 * PI - 121275 * a ** 5 * e9 * PI + 266805 * SQ2 * a ** 5 * e9 * PI)
    return c.eps * K1 * (-3 * sb * inner)


def on_loop_manifold_aneg(c: CanonicalAneg) -> CanonicalAneg:
    """Impose e1 = phi2_aneg then e2 = phi1_aneg."""
    c = c.with_(e1=phi2_aneg(c))
    return c.with_(e2=phi1_aneg(c))


def _wallis(jmax: int) -> np.ndarray:
    W = np.zeros(jmax + 1)
    W[0] = PI / 2
    if jmax >= 1:
        W[1] = 1.0
    for j in range(2, jmax + 1):
        W[j] = (j - 1) / j * W[j - 2]
    return W


def _moments(kmax: int) -> np.ndarray:
    """J_k = integral of u^k / sqrt(1 + 2u - u^2) over [1 - sqrt2, 1].

    With u = 1 - sqrt2 sin(p), J_k = integral_0^{pi/2} (1 - sqrt2 sin p)^k dp.
    """
    W = _wallis(kmax)
    return np.array([sum(comb(k, j) * (-SQ2) ** j * W[j] for j in range(k + 1)) for k in range(kmax + 1)])


def stability_closed_aneg(c: CanonicalAneg, rel_tol: float = 1e-9) -> float:
    """Integral of dQ2/dy dt over the whole of L_r, by exact moments.

    Needs vanishing divergence at q1 (otherwise the integral diverges).
    """
    from numpy.polynomial import polynomial as P

    a, b = c.a, c.b
    sb = math.sqrt(b)
    G, k2, k4 = _q_tables(c)
    # G as a polynomial in u, x = a u / sqrt b
    g = np.zeros(7)
    for i, v in G.items():
        g[i] += v * (a / sb) ** i
    scale = max(1e-300, float(np.max(np.abs(g))))
    quo, rem = P.polydiv(g, np.array([1.0, -1.0]))  # divide by (1 - u)
    if abs(rem[0]) > rel_tol * scale:
        raise ArithmeticError("divergence at the saddle is nonzero: stability integral diverges")
    cc = a * a / (4 * b)  # y^2 = cc (1-u)^2 w
    w = np.array([1.0, 2.0, -1.0])
    one_m_u = np.array([1.0, -1.0])
    num = P.polyadd(quo, 3 * k2 * cc * P.polymul(one_m_u, w))
    num = P.polyadd(num, 5 * k4 * cc * cc * P.polymul(P.polypow(one_m_u, 3), P.polymul(w, w)))
    J = _moments(len(num) - 1)
    # integrand g / y dx = 2 N(u) / sqrt(w) du on one half; two halves
    return float(4 * np.dot(num, J))


def phi3_aneg_corrected(c: CanonicalAneg) -> float:
    """e5 zeroing the L_r stability integral once e1 = phi2_aneg and e2 = phi1_aneg."""
    def value(e5):
        return stability_closed_aneg(on_loop_manifold_aneg(c.with_(e5=e5)))

    i0, i1 = value(0.0), value(1.0)
    if i1 == i0:
        raise ArithmeticError("stability integral does not depend on e5")
    return -i0 / (i1 - i0)


# ----------------------------------------------------------- stability

def loop_stability_integral(c, g: LoopGeometry | None = None) -> float:
    """Integral of dQ/dy along the unperturbed loop in time (dt = dx / y).

    apos: over A1.  aneg: over the whole of L_r.  Raises QuadratureError
    when the saddle divergence is nonzero, because the integral then diverges.
    """
    if g is not None and (g.a, g.b) != (c.a, c.b):
        raise ValueError("loop geometry does not match the parameters")
    dens = _stability_density(c)
    if c.regime == "apos":
        val, _ = _quad_pieces(_apos_pieces(c, dens), tol=1e-9)
        return val
    val, _ = _quad_pieces(_aneg_pieces(c, dens), tol=1e-9)
    return 2 * val
