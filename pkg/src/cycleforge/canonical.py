"""Rescalings that bring the oscillator to its two canonical forms.

a > 0, b < 0 ("apos"): X = sqrt(a) x, T = sqrt(a) t gives

    X' = Y,  Y' = -X - (2b/a^2) X^3 + eps (d3 + d2 X^2 + d1 X^4 + d4 Y^2 + d5 X^6 + d6 Y^4) Y

with d_k = c_k / a^(m_k/2), m = (5, 3, 1, 1, 7, 1) for d1..d6.

a < 0, b > 0 ("aneg"): shift the centre p1 = (sqrt(-a/2b), 0) to the origin,
then X = sqrt(-2a) x, T = sqrt(-2a) t gives

    Y' = -X + (3 sqrt(b)/2a) X^2 - (b/2a^2) X^3
         + eps (e3 + e7 X + e2 X^2 + e8 X^3 + e1 X^4 + e9 X^5 + e5 X^6 + e4 Y^2 + e6 Y^4) Y
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from math import comb
from typing import Dict, Tuple

import numpy as np

from .fieldcore import EPS_MAX, OscParams, PlanarField, build_system

SQ2 = math.sqrt(2.0)

# exponent of sqrt(a) dividing c_k in the apos rescaling, indexed d1..d6
APOS_EXPONENTS = (5, 3, 1, 1, 7, 1)

# monomial (i, j) of X^i Y^j carrying each aneg coefficient
ANEG_MONOMIALS = {
    "e3": (0, 1), "e7": (1, 1), "e2": (2, 1), "e8": (3, 1), "e1": (4, 1),
    "e9": (5, 1), "e5": (6, 1), "e4": (0, 3), "e6": (0, 5),
}
APOS_MONOMIALS = {"d3": (0, 1), "d2": (2, 1), "d1": (4, 1), "d4": (0, 3), "d5": (6, 1), "d6": (0, 5)}


def _check_finite(obj):
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, float) and not math.isfinite(v):
            raise ValueError(f"{f.name} is not finite")


@dataclass(frozen=True)
class CanonicalApos:
    a: float
    b: float
    d1: float = 0.0
    d2: float = 0.0
    d3: float = 0.0
    d4: float = 0.0
    d5: float = 0.0
    d6: float = 0.0
    eps: float = 0.0

    def __post_init__(self):
        if not (self.a > 0 and self.b < 0):
            raise ValueError(f"apos form needs a > 0, b < 0 (got a={self.a}, b={self.b})")
        _check_finite(self)

    regime = "apos"

    @property
    def coeffs(self) -> Dict[str, float]:
        return {f"d{k}": getattr(self, f"d{k}") for k in range(1, 7)}

    def with_(self, **kw) -> "CanonicalApos":
        return replace(self, **kw)

    @property
    def saddle(self) -> float:
        """Abscissa of the right saddle; the left one is its negative."""
        return self.a / math.sqrt(-2 * self.b)

    def energy_terms(self):
        return {(0, 2): 0.5, (2, 0): 0.5, (4, 0): self.b / (2 * self.a ** 2)}

    def q_terms(self):
        q = {APOS_MONOMIALS[k]: self.eps * v for k, v in self.coeffs.items()}
        return {m: v for m, v in q.items() if v != 0}

    def field(self) -> PlanarField:
        return PlanarField.hamiltonian_plus(self.energy_terms(), self.q_terms(), name="apos")


@dataclass(frozen=True)
class CanonicalAneg:
    a: float
    b: float
    e1: float = 0.0
    e2: float = 0.0
    e3: float = 0.0
    e4: float = 0.0
    e5: float = 0.0
    e6: float = 0.0
    e7: float = 0.0
    e8: float = 0.0
    e9: float = 0.0
    eps: float = 0.0

    def __post_init__(self):
        if not (self.a < 0 and self.b > 0):
            raise ValueError(f"aneg form needs a < 0, b > 0 (got a={self.a}, b={self.b})")
        _check_finite(self)

    regime = "aneg"

    @property
    def coeffs(self) -> Dict[str, float]:
        return {f"e{k}": getattr(self, f"e{k}") for k in range(1, 10)}

    def with_(self, **kw) -> "CanonicalAneg":
        return replace(self, **kw)

    @property
    def saddle(self) -> float:
        """q1, the image of the original origin."""
        return self.a / math.sqrt(self.b)

    @property
    def mirror_center(self) -> float:
        """q2, the image of the second centre of the original system."""
        return 2 * self.a / math.sqrt(self.b)

    def energy_terms(self):
        sb = math.sqrt(self.b)
        return {(0, 2): 0.5, (2, 0): 0.5, (3, 0): -sb / (2 * self.a),
                (4, 0): self.b / (8 * self.a ** 2)}

    def q_terms(self):
        q = {ANEG_MONOMIALS[k]: self.eps * v for k, v in self.coeffs.items()}
        return {m: v for m, v in q.items() if v != 0}

    def field(self) -> PlanarField:
        return PlanarField.hamiltonian_plus(self.energy_terms(), self.q_terms(), name="aneg")


def canonical_energy(c, x, y):
    """Unperturbed first integral of a canonical form."""
    tot = 0.0
    for (i, j), v in c.energy_terms().items():
        tot = tot + v * x ** i * y ** j
    return tot


def to_canonical_apos(p: OscParams) -> CanonicalApos:
    if not (p.a > 0 and p.b < 0):
        raise ValueError("to_canonical_apos needs a > 0 and b < 0")
    sa = math.sqrt(p.a)
    d = {f"d{k}": p.c[k - 1] / sa ** APOS_EXPONENTS[k - 1] for k in range(1, 7)}
    return CanonicalApos(p.a, p.b, eps=p.eps, **d)


def to_canonical_aneg(p: OscParams) -> CanonicalAneg:
    if not (p.a < 0 and p.b > 0):
        raise ValueError("to_canonical_aneg needs a < 0 and b > 0")
    a, b = p.a, p.b
    c1, c2, c3, c4, c5, c6 = p.c
    A = -a
    sA, sb = math.sqrt(A), math.sqrt(b)
    e = dict(
        e1=(2 * c1 * b - 15 * a * c5) / (8 * SQ2 * A ** 2.5 * b),
        e2=(15 * a ** 2 * c5 - 12 * a * c1 * b + 4 * c2 * b ** 2) / (8 * SQ2 * A ** 1.5 * b ** 2),
        e3=-(a ** 3 * c5 - 2 * a ** 2 * c1 * b + 4 * a * c2 * b ** 2 - 8 * c3 * b ** 3) / (8 * SQ2 * sA * b ** 3),
        e4=c4 / math.sqrt(-2 * a),
        e5=c5 / (8 * SQ2 * A ** 3.5),
        e6=c6 / math.sqrt(-2 * a),
        e7=(3 * a ** 2 * c5 - 4 * a * c1 * b + 4 * c2 * b ** 2) / (4 * SQ2 * sA * b ** 2.5),
        e8=-(5 * a * c5 - 2 * c1 * b) / (2 * SQ2 * A ** 1.5 * b ** 1.5),
        e9=3 * c5 / (4 * SQ2 * A ** 2.5 * sb),
    )
    return CanonicalAneg(a, b, eps=p.eps, **e)


def to_canonical(p: OscParams):
    return to_canonical_apos(p) if p.a > 0 else to_canonical_aneg(p)


def _scales(p: OscParams) -> Tuple[float, float]:
    """(shift, k): X = k (x - shift), T = k t, Y = y."""
    if p.a > 0:
        return 0.0, math.sqrt(p.a)
    return math.sqrt(-p.a / (2 * p.b)), math.sqrt(-2 * p.a)


def pushforward(p: OscParams, X, Y):
    """Original field expressed in canonical coordinates and time."""
    shift, k = _scales(p)
    f1, f2 = build_system(p)(shift + X / k, Y)
    return f1, f2 / k


def verify_conjugacy(p: OscParams, n_samples: int = 100, seed: int = 0) -> float:
    """Largest relative mismatch between pushed-forward and canonical fields.

    Points are drawn uniformly in the unit disk of canonical coordinates.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    r = np.sqrt(rng.uniform(0, 1, n_samples))
    th = rng.uniform(0, 2 * np.pi, n_samples)
    X, Y = r * np.cos(th), r * np.sin(th)
    g1, g2 = pushforward(p, X, Y)
    h1, h2 = to_canonical(p).field()(X, Y)
    num = np.hypot(g1 - h1, g2 - h2)
    den = np.maximum(np.hypot(h1, h2), np.hypot(g1, g2))
    return float(np.max(num / np.maximum(den, 1e-300)))


def pushforward_coefficients(p: OscParams) -> Dict[Tuple[int, int], float]:
    """Monomial coefficients of eps*Q after the change of variables, by binomial expansion.

    Independent of the closed coefficient formulas, so each formula can be
    checked on its own.
    """
    shift, k = _scales(p)
    out: Dict[Tuple[int, int], float] = {}
    q = {(0, 1): p.c3, (2, 1): p.c2, (4, 1): p.c1, (0, 3): p.c4, (6, 1): p.c5, (0, 5): p.c6}
    for (i, j), c in q.items():
        for m in range(i + 1):
            # c * (shift + X/k)^i Y^j / k  ->  X^m Y^j
            v = c * comb(i, m) * shift ** (i - m) / k ** m / k
            out[(m, j)] = out.get((m, j), 0.0) + v
    return out


def formula_residuals(p: OscParams) -> Dict[str, float]:
    """Per-coefficient relative error of the closed formulas against the expansion."""
    c = to_canonical(p)
    mono = APOS_MONOMIALS if p.a > 0 else ANEG_MONOMIALS
    ref = pushforward_coefficients(p)
    scale = max(1e-300, max(abs(v) for v in ref.values()) if ref else 0.0)
    extra = set(ref) - set(mono.values())
    res = {name: abs(getattr(c, name) - ref.get(m, 0.0)) / scale for name, m in mono.items()}
    for m in extra:
        if abs(ref[m]) > 1e-12 * scale:
            res[f"unmatched{m}"] = abs(ref[m]) / scale
    return res


def random_osc(rng: np.random.Generator, regime: str, eps: float | None = None) -> OscParams:
    """Admissible random parameters: |a|, |b| in [0.5, 2], c in [-1, 1]."""
    a = rng.uniform(0.5, 2.0)
    b = rng.uniform(0.5, 2.0)
    if regime == "apos":
        b = -b
    else:
        a = -a
    c = rng.uniform(-1, 1, 6)
    e = rng.uniform(0.01, 0.05) if eps is None else eps
    return OscParams(a, b, *c, eps=min(e, EPS_MAX))
