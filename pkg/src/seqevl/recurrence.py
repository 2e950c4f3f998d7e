"""Measures of fast-returning sets for sequential orbits.

The sets of interest are {x : |composition_n(x) - x| <= eps}, their unions
over short time horizons, and the local version near a reference point.
Measures come from deterministic stratified grids with vectorized bisection
at boundary crossings, not Monte Carlo, so tiny components near the neutral
fixed point are resolved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .maps import ALPHA_STAR, ParameterSchedule

BISECT_TOL = 1e-10


@dataclass(frozen=True)
class RecurrenceParams:
    """Exponents for the short-return sets and the local recurrence bound.

    varsigma = 1/(1+alpha_star) - kappa*(1+xi) is the decay exponent of the
    union-set measure; the local bound needs varsigma > beta with
    gamma*(varsigma - beta) > 1, which forces kappa*(1+xi) well below the
    block exponents used on the extreme-value side.
    """

    alpha_star: float = ALPHA_STAR
    beta: float = 0.3
    kappa: float = 0.2
    xi: float = 0.05
    gamma: float = 3.0
    enforce_local_bound: bool = True

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if not 0.0 < self.kappa < self.beta:
            raise ValueError("kappa must lie in (0, beta)")
        if not 0.0 < self.xi < 1.0:
            raise ValueError("xi must lie in (0, 1)")
        if self.kappa * (1.0 + self.xi) >= self.beta:
            raise ValueError("kappa*(1+xi) must stay below beta")
        if self.enforce_local_bound:
            if self.varsigma <= self.beta:
                raise ValueError("local bound needs varsigma > beta")
            if self.gamma * (self.varsigma - self.beta) <= 1.0:
                raise ValueError("local bound needs gamma*(varsigma-beta) > 1")

    @property
    def varsigma(self) -> float:
        return 1.0 / (1.0 + self.alpha_star) - self.kappa * (1.0 + self.xi)

    def horizon(self, j: float) -> int:
        return math.floor(j ** (self.kappa * (1.0 + self.xi)))


def orbit_displacement(schedule: ParameterSchedule, n: int, x) -> np.ndarray:
    """composition_n(x) - x as a compensated sum of per-step increments.

    Each step moves a point by 2^a y^(1+a) (left branch) or y - 1 (right
    branch); accumulating these closed forms avoids the cancellation that
    computing T(y) - y directly suffers near the neutral fixed point, where
    the increment is O(y^(1+a)).
    """
    y = np.array(x, dtype=float, copy=True, ndmin=1)
    s = np.zeros_like(y)
    comp = np.zeros_like(y)
    for a in schedule.alphas(n):
        d = np.where(y < 0.5, 2.0 ** a * y ** (1.0 + a), y - 1.0)
        t = s + d
        comp += np.where(np.abs(s) >= np.abs(d), (s - t) + d, (d - t) + s)
        s = t
        y = np.minimum(y + d, 1.0)
    return s + comp


def min_orbit_displacement(schedule: ParameterSchedule, horizon: int, x) -> np.ndarray:
    """min over 1 <= i <= horizon of |composition_i(x) - x|, one orbit pass."""
    y = np.array(x, dtype=float, copy=True, ndmin=1)
    s = np.zeros_like(y)
    comp = np.zeros_like(y)
    best = np.full_like(y, np.inf)
    for a in schedule.alphas(horizon):
        d = np.where(y < 0.5, 2.0 ** a * y ** (1.0 + a), y - 1.0)
        t = s + d
        comp += np.where(np.abs(s) >= np.abs(d), (s - t) + d, (d - t) + s)
        s = t
        y = np.minimum(y + d, 1.0)
        best = np.minimum(best, np.abs(s + comp))
    return best


def _bisect_crossings(gfun, lo, hi, g_lo):
    """Vectorized bisection for roots of the inside/outside indicator.

    lo, hi bracket one sign change each; returns points within BISECT_TOL of
    the boundary.  The indicator is (g <= 0), so ties land on the inside.
    """
    lo = lo.copy()
    hi = hi.copy()
    lo_inside = g_lo <= 0.0
    for _ in range(60):
        if np.max(hi - lo) < BISECT_TOL:
            break
        mid = 0.5 * (lo + hi)
        mid_inside = gfun(mid) <= 0.0
        same = mid_inside == lo_inside
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


def _measure_below(nodes: np.ndarray, g: np.ndarray, gfun) -> float:
    """Measure of {g <= 0} from node values plus bisection at sign changes.

    Cells whose endpoints agree count fully or not at all; a component that
    enters and leaves within one cell is missed, which is the O(cell width)
    error this estimator quotes.
    """
    inside = g <= 0.0
    widths = np.diff(nodes)
    total = float(np.sum(widths[inside[:-1] & inside[1:]]))
    cross = np.nonzero(inside[:-1] != inside[1:])[0]
    if cross.size:
        roots = _bisect_crossings(gfun, nodes[cross], nodes[cross + 1], g[cross])
        parts = np.where(inside[cross], roots - nodes[cross], nodes[cross + 1] - roots)
        total += float(np.sum(parts))
    return total


def _stratified_nodes(resolution: int) -> np.ndarray:
    # geometric fill below the first uniform cell: return sets concentrate
    # mass near the neutral fixed point at scales the uniform grid misses
    nodes = np.linspace(0.0, 1.0, resolution + 1)
    sub = nodes[1] * 2.0 ** -np.arange(1.0, 44.0)
    return np.unique(np.concatenate([nodes, sub[sub > 1e-15]]))


def measure_En_eps(schedule: ParameterSchedule, n: int, eps: float,
                   resolution: int = 4096) -> float:
    """Lebesgue measure of {x : |composition_n(x) - x| <= eps}."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")
    nodes = _stratified_nodes(resolution)

    def g(x):
        return np.abs(orbit_displacement(schedule, n, x)) - eps

    return _measure_below(nodes, g(nodes), g)


def measure_Ej(schedule: ParameterSchedule, j: float, params: RecurrenceParams,
               resolution: int = 4096) -> float:
    """Measure of the union over i <= horizon(j) of the 2/j return sets.

    One orbit pass per grid point stores min_i |composition_i(x) - x|; the
    union is then a single sublevel-set measurement.
    """
    if j < 2:
        raise ValueError("j must be at least 2")
    horizon = params.horizon(j)
    if horizon < 1:
        return 0.0
    eps = 2.0 / j
    nodes = _stratified_nodes(resolution)

    def g(x):
        return min_orbit_displacement(schedule, horizon, x) - eps

    return _measure_below(nodes, g(nodes), g)


def local_recurrence_at(schedule: ParameterSchedule, zeta: float, j: float,
                        params: RecurrenceParams, resolution: int = 2048) -> float:
    """Measure of the j^-gamma ball at zeta intersected with the union set
    at scale j^gamma, by dense sampling inside the ball.

    The companion bound local_recurrence_bound holds for almost every zeta
    once j is large enough, with a non-constructive onset, so callers report
    violations per j instead of failing hard.
    """
    if not 0.0 < zeta < 1.0:
        raise ValueError("zeta must lie in (0, 1)")
    radius = j ** -params.gamma
    big_j = j ** params.gamma
    horizon = params.horizon(big_j)
    if horizon < 1:
        return 0.0
    eps = 2.0 / big_j
    lo, hi = max(0.0, zeta - radius), min(1.0, zeta + radius)
    nodes = np.linspace(lo, hi, resolution + 1)

    def g(x):
        return min_orbit_displacement(schedule, horizon, x) - eps

    return _measure_below(nodes, g(nodes), g)


def local_recurrence_bound(j: float, params: RecurrenceParams) -> float:
    return 2.0 * j ** (-params.gamma * (1.0 + params.beta))


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of log ys against log xs."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])
