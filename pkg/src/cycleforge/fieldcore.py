"""Polynomial planar vector fields for the Rayleigh–Liénard oscillator.

The oscillator is

    x' = y
    y' = -a x - 2 b x^3 + eps * (c3 + c2 x^2 + c1 x^4 + c4 y^2 + c5 x^6 + c6 y^4) * y

Note the cubic stiffness convention: ``b`` is the coefficient that appears
as ``2 b x^3`` in the force, so the energy carries ``b x^4 / 2``.  Forgetting
this factor of two is the easiest way to get every downstream formula wrong.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.signal import convolve2d

MAX_DEGREE = 8
EPS_MAX = 0.1

Monomial = Tuple[int, int]


def _table(terms: Dict[Monomial, float]) -> np.ndarray:
    tab = np.zeros((MAX_DEGREE + 1, MAX_DEGREE + 1))
    for (i, j), v in terms.items():
        if i + j > MAX_DEGREE:
            raise ValueError(f"monomial x^{i} y^{j} exceeds degree {MAX_DEGREE}")
        tab[i, j] += v
    return tab


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def poly_eval(tab: np.ndarray, x, y):
    """Evaluate a coefficient table ``tab[i, j]`` of x^i y^j."""
    return npoly.polyval2d(x, y, tab)


def poly_dx(tab: np.ndarray) -> np.ndarray:
    out = np.zeros_like(tab)
    d = npoly.polyder(tab, axis=0)
    out[: d.shape[0], :] = d
    return out


def poly_dy(tab: np.ndarray) -> np.ndarray:
    out = np.zeros_like(tab)
    d = npoly.polyder(tab, axis=1)
    out[:, : d.shape[1]] = d
    return out


def poly_mul(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    # direct 2-D convolution of coefficient tables; products that should
    # cancel (Hamiltonian part of the energy rate) cancel exactly
    return convolve2d(p, q)


def terms_of(tab: np.ndarray) -> Dict[Monomial, float]:
    """Nonzero monomials of a table, exponents as plain ints."""
    ii, jj = np.nonzero(tab)
    return {(int(i), int(j)): float(tab[i, j]) for i, j in zip(ii, jj)}


@dataclass(frozen=True)
class OscParams:
    """Physical parameters of the oscillator (b multiplies 2x^3 in the force)."""

    a: float
    b: float
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0
    c4: float = 0.0
    c5: float = 0.0
    c6: float = 0.0
    eps: float = 0.0
    eps_max: float = field(default=EPS_MAX, compare=False)

    def __post_init__(self):
        if self.a == 0 or self.b == 0 or self.a * self.b >= 0:
            raise ValueError(f"need a*b < 0, got a={self.a}, b={self.b}")
        if abs(self.eps) > self.eps_max:
            raise ValueError(f"|eps|={abs(self.eps)} exceeds eps_max={self.eps_max}")

    @property
    def c(self) -> Tuple[float, ...]:
        return (self.c1, self.c2, self.c3, self.c4, self.c5, self.c6)

    @property
    def regime(self) -> str:
        return "apos" if self.a > 0 else "aneg"


@dataclass(frozen=True)
class PlanarField:
    """x' = F1(x, y), y' = F2(x, y) with dense coefficient tables.

    ``energy`` optionally holds the first integral of the unperturbed
    part.  When present, return maps measure the energy gained over a
    revolution instead of differencing positions (see ``simulate``).
    """

    f1: np.ndarray
    f2: np.ndarray
    energy: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "f1", _frozen(self.f1))
        object.__setattr__(self, "f2", _frozen(self.f2))
        if self.energy is not None:
            object.__setattr__(self, "energy", _frozen(self.energy))

    @classmethod
    def from_terms(cls, f1: Dict[Monomial, float], f2: Dict[Monomial, float],
                   energy: Optional[Dict[Monomial, float]] = None, name: str = "") -> "PlanarField":
        e = None if energy is None else _table(energy)
        return cls(_table(f1), _table(f2), e, name)

    @classmethod
    def hamiltonian_plus(cls, energy: Dict[Monomial, float], q: Dict[Monomial, float],
                         name: str = "") -> "PlanarField":
        """x' = H_y, y' = -H_x + q(x, y).

        Building the conservative part from H itself makes the energy rate
        H_x F1 + H_y F2 reduce to H_y q with no rounding residue.
        """
        h = _table(energy)
        return cls(poly_dy(h), -poly_dx(h) + _table(q), h, name)

    # -- evaluation ----------------------------------------------------
    def __call__(self, x, y):
        return poly_eval(self.f1, x, y), poly_eval(self.f2, x, y)

    def rhs(self, t, z):
        return np.array(self(z[0], z[1]))

    def terms(self, component: int) -> Dict[Monomial, float]:
        return terms_of(self.f1 if component == 1 else self.f2)

    @property
    def degree(self) -> int:
        deg = 0
        for tab in (self.f1, self.f2):
            for i, j in zip(*np.nonzero(tab)):
                deg = max(deg, int(i + j))
        return deg

    def jacobian(self, x: float, y: float) -> np.ndarray:
        return np.array([
            [poly_eval(poly_dx(self.f1), x, y), poly_eval(poly_dy(self.f1), x, y)],
            [poly_eval(poly_dx(self.f2), x, y), poly_eval(poly_dy(self.f2), x, y)],
        ])

    def divergence_table(self) -> np.ndarray:
        return poly_dx(self.f1) + poly_dy(self.f2)

    def energy_rate(self) -> np.ndarray:
        """Coefficient table of dH/dt along the field."""
        if self.energy is None:
            raise ValueError("field carries no energy function")
        return poly_mul(poly_dx(self.energy), self.f1) + poly_mul(poly_dy(self.energy), self.f2)

    def __add__(self, other: "PlanarField") -> "PlanarField":
        return PlanarField(self.f1 + other.f1, self.f2 + other.f2)


@dataclass(frozen=True)
class Equilibrium:
    position: Tuple[float, float]
    kind: str  # "Center", "Saddle" or "WeakFocus"
    eigen: Tuple[complex, complex]


def _q_terms(c1, c2, c3, c4, c5, c6, eps) -> Dict[Monomial, float]:
    q = {(0, 1): c3, (2, 1): c2, (4, 1): c1, (0, 3): c4, (6, 1): c5, (0, 5): c6}
    return {k: eps * v for k, v in q.items() if eps * v != 0}


def energy_terms(p: OscParams) -> Dict[Monomial, float]:
    return {(0, 2): 0.5, (2, 0): 0.5 * p.a, (4, 0): 0.5 * p.b}


def build_system(p: OscParams) -> PlanarField:
    """The oscillator as a polynomial field of degree 7."""
    return PlanarField.hamiltonian_plus(
        energy_terms(p), _q_terms(p.c1, p.c2, p.c3, p.c4, p.c5, p.c6, p.eps), name="oscillator")


def hamiltonian(p: OscParams, x, y):
    if p.eps != 0:
        raise ValueError("the energy is a first integral only for eps = 0")
    return 0.5 * (y * y + p.a * x * x + p.b * x ** 4)


def divergence_at(f: PlanarField, pt: Tuple[float, float]) -> float:
    return float(poly_eval(f.divergence_table(), pt[0], pt[1]))


def classify(jac: np.ndarray, tol: float = 1e-14) -> Tuple[str, Tuple[complex, complex]]:
    """Kind and eigenvalues of a 2x2 Jacobian from its characteristic polynomial."""
    tr = float(jac[0, 0] + jac[1, 1])
    det = float(jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0])
    disc = cmath.sqrt(tr * tr - 4 * det)
    eig = ((tr + disc) / 2, (tr - disc) / 2)
    if det < 0:
        kind = "Saddle"
    elif abs(tr) <= tol and det > 0:
        kind = "Center"
    else:
        kind = "WeakFocus"
    return kind, eig


def equilibria(p: OscParams) -> list:
    """Origin and the pair (±sqrt(-a/2b), 0) of the unperturbed system."""
    if p.eps != 0:
        raise ValueError("equilibria are computed for the unperturbed system (eps = 0)")
    f = build_system(p)
    s = math.sqrt(-p.a / (2 * p.b))
    out = []
    for pos in ((0.0, 0.0), (s, 0.0), (-s, 0.0)):
        kind, eig = classify(f.jacobian(*pos))
        out.append(Equilibrium(pos, kind, eig))
    return out


def sample_points(rng: np.random.Generator, n: int, radius: float = 1.0) -> Iterable[Tuple[float, float]]:
    """Uniform points in a disk."""
    r = radius * np.sqrt(rng.uniform(0, 1, n))
    th = rng.uniform(0, 2 * np.pi, n)
    return list(zip(r * np.cos(th), r * np.sin(th)))
