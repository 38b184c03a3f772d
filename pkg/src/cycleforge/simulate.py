"""Orbit integration, Poincaré return maps and limit-cycle location.

The section is the horizontal ray from a chosen centre, to the right
(direction=+1) or to the left (direction=-1).  Orbits of both canonical
forms turn clockwise, so a right ray is met from above and a left ray from
below.

Displacement.  Near a weak focus d(r) = h(r) - r is many orders of
magnitude smaller than r, and differencing two positions loses it.  When
the field carries its unperturbed energy E, the integrator also carries
W' = dE/dt (an exact polynomial) and the displacement delta solves

    E(start + delta) - E(start) = W

along the ray, by Newton on the Taylor expansion of E about the start.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import optimize
from scipy.integrate import solve_ivp

from .fieldcore import PlanarField, poly_eval


class IntegrationError(RuntimeError):
    """Step-size failure or other solver breakdown."""


class OrbitEscape(IntegrationError):
    """The orbit left the bounding box or failed to return to the section."""


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-12
    abs_tol: float = 1e-14
    max_step: float = math.inf
    order: int = 8
    max_events: int = 1
    box: float = 50.0  # half-width of the escape box around the centre
    max_time: float = 1e3

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            v = getattr(self, name)
            if not (1e-14 <= v <= 1e-6):
                raise ValueError(f"{name}={v} outside [1e-14, 1e-6]")
        if self.order not in (5, 8):
            raise ValueError("order must be 5 or 8")
        if not self.max_step > 0 or not self.box > 0 or not self.max_time > 0:
            raise ValueError("max_step, box and max_time must be positive")
        if self.max_events < 1:
            raise ValueError("max_events must be >= 1")

    @property
    def method(self) -> str:
        return "DOP853" if self.order == 8 else "RK45"

    def with_(self, **kw) -> "IntegratorConfig":
        d = asdict(self)
        d.update(kw)
        return IntegratorConfig(**d)


@dataclass
class Trajectory:
    t: np.ndarray
    z: np.ndarray  # shape (2, n)
    sol: Callable = field(repr=False)

    def __call__(self, t):
        return self.sol(t)


def threads() -> int:
    """Worker cap from CYCLEFORGE_THREADS (default 1)."""
    raw = os.environ.get("CYCLEFORGE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"CYCLEFORGE_THREADS must be an integer, got {raw!r}") from exc
    return max(1, n)


def parallel_map(fn, items: Sequence, workers: Optional[int] = None) -> list:
    n = threads() if workers is None else max(1, workers)
    items = list(items)
    if n == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=min(n, len(items))) as ex:
        return list(ex.map(fn, items))


def _escape_event(center, box):
    cx, cy = center

    def ev(t, z):
        return box - max(abs(z[0] - cx), abs(z[1] - cy))

    ev.terminal = True
    return ev


def _check(sol):
    if sol.status == -1:
        raise IntegrationError(sol.message)


def integrate(f: PlanarField, x0: Tuple[float, float], t_span: float, cfg: IntegratorConfig | None = None,
              center: Tuple[float, float] = (0.0, 0.0)) -> Trajectory:
    """Dense-output integration over [0, t_span] (negative t_span runs backwards)."""
    cfg = cfg or IntegratorConfig()
    sol = solve_ivp(f.rhs, (0.0, t_span), np.asarray(x0, float), method=cfg.method, rtol=cfg.rel_tol,
                    atol=cfg.abs_tol, max_step=cfg.max_step, dense_output=True,
                    events=[_escape_event(center, cfg.box)])
    _check(sol)
    if sol.status == 1:
        raise OrbitEscape(f"orbit left the box of half-width {cfg.box} at t={sol.t[-1]:.6g}")
    return Trajectory(sol.t, sol.y, sol.sol)


# ------------------------------------------------------------- return map

def _augmented(f: PlanarField, center, with_energy: bool):
    """Field plus the swept angle about ``center`` and, optionally, the energy gained."""
    rate = f.energy_rate() if with_energy else None
    cx, cy = center

    def rhs(t, z):
        u, v = f(z[0], z[1])
        dx, dy = z[0] - cx, z[1] - cy
        turn = (dx * v - dy * u) / (dx * dx + dy * dy)
        if rate is None:
            return np.array([u, v, turn])
        return np.array([u, v, turn, poly_eval(rate, z[0], z[1])])

    return rhs


def _one_turn(f, r, cfg, center, direction, with_energy):
    """Integrate from the section point until the swept angle reaches one full turn.

    Tracking the angle keeps the whole return in one integration, so no
    interpolated state is ever restarted and the start point itself never
    triggers the section event.
    """
    cx, cy = center
    if not r > 0:
        raise ValueError("section coordinate must be positive")
    start = np.array([cx + direction * r, cy, 0.0] + ([0.0] if with_energy else []))
    # the angle is excluded from step control; the energy gain is controlled
    # against the size of its own rate, otherwise its quadrature error dominates
    atol = [cfg.abs_tol, cfg.abs_tol, 1e6]
    if with_energy:
        th = np.linspace(0, 2 * np.pi, 32, endpoint=False)
        scale = np.max(np.abs(poly_eval(f.energy_rate(), cx + r * np.cos(th), cy + r * np.sin(th))))
        atol.append(max(cfg.rel_tol * 1e-2 * scale, 1e-300))

    def turn(t, z):
        return abs(z[2]) - 2 * np.pi

    turn.terminal = True
    turn.direction = 1
    sol = solve_ivp(_augmented(f, center, with_energy), (0.0, cfg.max_time), start, method=cfg.method,
                    rtol=cfg.rel_tol, atol=atol, max_step=cfg.max_step,
                    events=[turn, _escape_event(center, cfg.box)])
    _check(sol)
    if len(sol.t_events[1]):
        raise OrbitEscape("orbit left the escape box before returning to the section")
    if not len(sol.t_events[0]):
        raise OrbitEscape(f"orbit did not wind around the centre within t={cfg.max_time}")
    z = sol.y_events[0][0]
    if (z[0] - cx) * direction <= 0:
        raise OrbitEscape("orbit does not wind around the centre")
    return start, z, float(sol.t_events[0][0])


def poincare_return(f: PlanarField, x0: float, cfg: IntegratorConfig | None = None,
                    center: Tuple[float, float] = (0.0, 0.0), direction: int = 1) -> Tuple[float, float]:
    """First return (distance from centre along the ray) and the return time."""
    cfg = cfg or IntegratorConfig()
    _, z, t = _one_turn(f, x0, cfg, center, direction, False)
    return float(math.hypot(z[0] - center[0], z[1] - center[1])), t


def _ray_poly(f: PlanarField, center, direction) -> np.ndarray:
    """E(cx + direction*s, cy) as a polynomial in s."""
    cx, cy = center
    E = f.energy
    out = np.zeros(1)
    for i in range(E.shape[0]):
        ci = sum(E[i, j] * cy ** j for j in range(E.shape[1]))
        if ci:
            out = P.polyadd(out, ci * P.polypow([cx, direction], i))
    return out


def _solve_increment(p: np.ndarray, s0: float, W: float) -> float:
    """delta with p(s0 + delta) - p(s0) = W, without forming the difference."""
    c = []
    d = p.copy()
    fact = 1.0
    for k in range(1, len(p)):
        d = P.polyder(d)
        fact *= k
        c.append(P.polyval(s0, d) / fact)
    c = np.array(c)
    if c[0] <= 0:
        raise ValueError("energy does not increase outward along the section")
    delta = W / c[0]
    for _ in range(50):
        pw = delta ** np.arange(1, len(c) + 1)
        g = np.dot(c, pw) - W
        dg = np.dot(c * np.arange(1, len(c) + 1), pw / delta) if delta != 0 else c[0]
        step = g / dg
        delta -= step
        if abs(step) <= 1e-16 * max(abs(delta), 1e-300):
            break
    return float(delta)


def displacement(f: PlanarField, r: float, cfg: IntegratorConfig | None = None,
                 center: Tuple[float, float] = (0.0, 0.0), direction: int = 1) -> float:
    """d(r) = h(r) - r, by the energy increment when the field carries an energy."""
    cfg = cfg or IntegratorConfig()
    if f.energy is None:
        h, _ = poincare_return(f, r, cfg, center, direction)
        return h - r
    _, z, _ = _one_turn(f, r, cfg, center, direction, True)
    return _solve_increment(_ray_poly(f, center, direction), r, float(z[3]))


# ------------------------------------------------------------ cycle search

@dataclass(frozen=True)
class CycleInfo:
    section_x: float
    period: float
    stability: str  # "Stable" or "Unstable"
    amplitude_class: str  # "Small" or "Large"
    derivative: float
    hyperbolic: bool
    max_abs_x: float


@dataclass
class LimitCycleReport:
    cycles: List[CycleInfo]
    displacement_samples: List[Tuple[float, float]]
    search_interval: Tuple[float, float]
    unresolved: List[float]
    xtol: float
    noise_floor: float

    def to_dict(self) -> dict:
        return {
            "cycles": [asdict(c) for c in self.cycles],
            "displacement_samples": [list(s) for s in self.displacement_samples],
            "search_interval": list(self.search_interval),
            "unresolved": list(self.unresolved),
            "xtol": self.xtol,
            "noise_floor": self.noise_floor,
        }


class _D:
    """Picklable displacement closure for process pools."""

    def __init__(self, f, cfg, center, direction):
        self.f, self.cfg, self.center, self.direction = f, cfg, center, direction

    def __call__(self, r):
        try:
            return displacement(self.f, r, self.cfg, self.center, self.direction)
        except OrbitEscape:
            return math.nan


def noise_scale(f: PlanarField, r: float, center: Tuple[float, float] = (0.0, 0.0)) -> float:
    """Size against which the round-off in d(r) is measured.

    With an energy the displacement is W / (dE/ds), and the error in W is
    proportional to the size of the energy rate over one turn; without one
    the return point itself carries the error, so the scale is r.
    """
    if f.energy is None:
        return r
    cx, cy = center
    th = np.linspace(0, 2 * np.pi, 32, endpoint=False)
    rate = np.max(np.abs(poly_eval(f.energy_rate(), cx + r * np.cos(th), cy + r * np.sin(th))))
    return float(2 * np.pi * rate / r)


def scan_ladder(lo: float, hi: float, n: int) -> np.ndarray:
    if not (0 < lo < hi):
        raise ValueError("scan interval must satisfy 0 < lo < hi")
    if n < 8:
        raise ValueError("n_scan must be >= 8")
    return np.geomspace(lo, hi, n)


def _max_abs_x(f, r, cfg, center, direction, period):
    tr = integrate(f, (center[0] + direction * r, center[1]), period, cfg, center)
    ts = np.linspace(0, period, 2001)
    return float(np.max(np.abs(tr(ts)[0] - center[0])))


def find_cycles(f: PlanarField, interval: Tuple[float, float], n_scan: int = 64,
                cfg: IntegratorConfig | None = None, center: Tuple[float, float] = (0.0, 0.0),
                direction: int = 1, loop_extent: Optional[float] = None, xtol: float = 1e-8,
                noise_floor: float = 1e-15, workers: Optional[int] = None) -> LimitCycleReport:
    """Scan d on a geometric ladder, bracket sign changes and bisect each to xtol.

    A cycle is Stable when d > 0 just inside and d < 0 just outside.
    Stability comes from the signs at the bracket ends.  Cycles whose
    finite-difference |d'| does not exceed 10 * xtol are kept, marked
    non-hyperbolic and also listed as unresolved, as are brackets whose
    sign change lies below the noise level and local minima of |d| below
    it with no sign change.  The noise level at x is
    ``noise_floor * noise_scale(f, x)``; the default suits rel_tol near 2e-14, where the observed error is about 2e-16 of the scale.
    """
    cfg = cfg or IntegratorConfig()
    xs = scan_ladder(interval[0], interval[1], n_scan)
    dfun = _D(f, cfg, center, direction)
    ds = np.array(parallel_map(dfun, xs, workers))
    samples = [(float(x), float(d)) for x, d in zip(xs, ds)]
    floor = [noise_floor * noise_scale(f, x, center) for x in xs]
    cycles: List[CycleInfo] = []
    unresolved: List[float] = []
    for i in range(len(xs) - 1):
        d0, d1 = ds[i], ds[i + 1]
        if not (math.isfinite(d0) and math.isfinite(d1)):
            continue
        if d0 == 0 or np.sign(d0) != np.sign(d1):
            if abs(d0) <= floor[i] and abs(d1) <= floor[i + 1]:
                # a sign flip inside the integration noise is not evidence of a cycle
                unresolved.append(float(math.sqrt(xs[i] * xs[i + 1])))
                continue
            root = optimize.bisect(dfun, xs[i], xs[i + 1], xtol=xtol) if d0 != 0 else xs[i]
            # the bracket ends carry the reliable signs; d near the root is noise-limited
            stab = "Stable" if (d0 > 0 or (d0 == 0 and d1 < 0)) else "Unstable"
            h = max(xtol, 1e-4 * root)
            deriv = (dfun(root + h) - dfun(root - h)) / (2 * h)
            _, period = poincare_return(f, root, cfg, center, direction)
            mx = _max_abs_x(f, root, cfg, center, direction, period)
            amp = "Large" if (loop_extent is not None and mx > loop_extent) else "Small"
            hyp = bool(abs(deriv) > 10 * xtol)
            cycles.append(CycleInfo(float(root), period, stab, amp, float(deriv), hyp, mx))
            if not hyp:
                unresolved.append(float(root))
    for i in range(1, len(xs) - 1):
        a, b, c = abs(ds[i - 1]), abs(ds[i]), abs(ds[i + 1])
        if b <= floor[i] and b <= a and b <= c and np.sign(ds[i - 1]) == np.sign(ds[i + 1]) == np.sign(ds[i]):
            unresolved.append(float(xs[i]))
    return LimitCycleReport(cycles, samples, (float(interval[0]), float(interval[1])), sorted(unresolved), xtol,
                            noise_floor)
