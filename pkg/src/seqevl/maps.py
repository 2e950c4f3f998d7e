"""The intermittent interval maps and their parameter schedules.

Each map has a neutral fixed point at 0 (left branch tangent to the
identity) and a uniformly expanding right branch.  Compositions are taken
in schedule order: step i of an orbit applies the i-th scheduled map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._rng import philox_stream

ALPHA_STAR = 1.0 / 7.0


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")


def _check_domain(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("points must lie in [0, 1]")
    return x


def lsv_apply(alpha: float, x):
    """Evaluate the map: x(1 + 2^alpha x^alpha) on [0, 1/2), 2x - 1 on [1/2, 1]."""
    _check_alpha(alpha)
    x = _check_domain(x)
    left = x * (1.0 + 2.0 ** alpha * x ** alpha)
    out = np.where(x < 0.5, left, 2.0 * x - 1.0)
    # the left branch tends to 1 at x=1/2-; guard against rounding above 1
    out = np.minimum(out, 1.0)
    return out if out.ndim else float(out)


def lsv_derivative(alpha: float, x):
    """One-sided derivative; x = 1/2 uses the right branch, so T'(1/2) = 2."""
    _check_alpha(alpha)
    x = _check_domain(x)
    left = 1.0 + 2.0 ** alpha * (1.0 + alpha) * x ** alpha
    out = np.where(x < 0.5, left, 2.0)
    return out if out.ndim else float(out)


def lsv_left_inverse(alpha: float, y, tol: float = 1e-13, max_iter: int = 200):
    """Unique x in [0, 1/2] with x(1 + 2^alpha x^alpha) = y.

    Newton iteration seeded at y/2; any entry that has not met `tol` after
    `max_iter` sweeps falls back to bisection.  The residual bound |T(x)-y|
    <= tol implies |x - x*| <= tol because T' >= 1.
    """
    _check_alpha(alpha)
    y = _check_domain(y)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    c = 2.0 ** alpha
    x = y / 2.0
    resid = x * (1.0 + c * x ** alpha) - y
    for _ in range(max_iter):
        live = np.abs(resid) > tol
        if not live.any():
            break
        xl = x[live]
        step = resid[live] / (1.0 + c * (1.0 + alpha) * xl ** alpha)
        xl = np.clip(xl - step, 0.0, 0.5)
        x[live] = xl
        resid[live] = xl * (1.0 + c * xl ** alpha) - y[live]
    bad = np.abs(resid) > tol
    if bad.any():  # safeguard; Newton converges in a handful of sweeps in practice
        lo = np.zeros(int(bad.sum()))
        hi = np.full(int(bad.sum()), 0.5)
        yb = y[bad]
        for _ in range(120):
            mid = 0.5 * (lo + hi)
            high = mid * (1.0 + c * mid ** alpha) > yb
            hi = np.where(high, mid, hi)
            lo = np.where(high, lo, mid)
        x[bad] = 0.5 * (lo + hi)
    return float(x[0]) if scalar else x


def lsv_preimages(alpha: float, y):
    """Both branch preimages of y: (left in [0, 1/2], right in [1/2, 1])."""
    y = _check_domain(y)
    return lsv_left_inverse(alpha, y), (np.asarray(y, dtype=float) + 1.0) / 2.0


def apply_map_batch(alpha: float, x: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """One map step on a batch of points, without domain re-validation.

    Meant for Monte Carlo inner loops; callers guarantee x in [0, 1].
    """
    if out is None:
        out = np.empty_like(x)
    left = x < 0.5
    xl = x[left]
    np.multiply(x, 2.0, out=out)
    out -= 1.0
    out[left] = xl * (1.0 + 2.0 ** alpha * xl ** alpha)
    np.minimum(out, 1.0, out=out)
    return out


@dataclass(frozen=True)
class ParameterSchedule:
    """Sequence of map exponents, one per composition step (1-based).

    Modes: "constant", "periodic", "explicit", "iid".  The iid mode draws
    uniform exponents from (lo, hi) on a dedicated counter-based stream, so
    the schedule never interferes with sampling randomness.  Exponents above
    `alpha_star` are rejected at construction.
    """

    mode: str
    alpha_star: float = ALPHA_STAR
    alpha: float | None = None
    cycle: tuple[float, ...] | None = None
    lo: float | None = None
    hi: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha_star < 1.0:
            raise ValueError("alpha_star must lie in (0, 1)")
        if self.mode == "constant":
            self._require_valid((self.alpha,))
        elif self.mode in ("periodic", "explicit"):
            if not self.cycle:
                raise ValueError(f"{self.mode} schedule needs a nonempty exponent list")
            self._require_valid(self.cycle)
        elif self.mode == "iid":
            if self.lo is None or self.hi is None or not 0.0 < self.lo < self.hi:
                raise ValueError("iid schedule needs 0 < lo < hi")
            self._require_valid((self.lo, self.hi))
        else:
            raise ValueError(f"unknown schedule mode {self.mode!r}")

    def _require_valid(self, alphas):
        for a in alphas:
            if a is None or not 0.0 < a <= self.alpha_star:
                raise ValueError(
                    f"exponent {a!r} outside (0, alpha_star={self.alpha_star}]")

    @classmethod
    def constant(cls, alpha: float, alpha_star: float = ALPHA_STAR):
        return cls(mode="constant", alpha=alpha, alpha_star=alpha_star)

    @classmethod
    def periodic(cls, cycle, alpha_star: float = ALPHA_STAR):
        return cls(mode="periodic", cycle=tuple(cycle), alpha_star=alpha_star)

    @classmethod
    def explicit(cls, alphas, alpha_star: float = ALPHA_STAR):
        return cls(mode="explicit", cycle=tuple(alphas), alpha_star=alpha_star)

    @classmethod
    def iid_uniform(cls, lo: float, hi: float, seed: int,
                    alpha_star: float = ALPHA_STAR):
        return cls(mode="iid", lo=lo, hi=hi, seed=seed, alpha_star=alpha_star)

    def alphas(self, n: int) -> np.ndarray:
        """Exponents of the first n maps; alphas(m) is always a prefix of alphas(n)."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        if self.mode == "constant":
            return np.full(n, self.alpha)
        if self.mode == "periodic":
            c = np.asarray(self.cycle)
            return np.tile(c, n // c.size + 1)[:n]
        if self.mode == "explicit":
            if n > len(self.cycle):
                raise ValueError("explicit schedule shorter than requested length")
            return np.asarray(self.cycle[:n])
        gen = philox_stream(self.seed, "schedule", "iid-alphas")
        return self.lo + (self.hi - self.lo) * gen.random(n)

    def alpha_at(self, i: int) -> float:
        """Exponent of the i-th map, i >= 1."""
        if i < 1:
            raise ValueError("map index starts at 1")
        return float(self.alphas(i)[-1])

    def sup_alpha(self) -> float:
        """Supremum of the exponent sequence, independent of the horizon."""
        if self.mode == "constant":
            return float(self.alpha)
        if self.mode in ("periodic", "explicit"):
            return float(max(self.cycle))
        return float(self.hi)

    def max_alpha(self, n: int) -> float:
        if n == 0:
            return self.alpha_star
        return float(np.max(self.alphas(n)))

    def min_alpha(self, n: int) -> float:
        if n == 0:
            return self.alpha_star
        return float(np.min(self.alphas(n)))

    def fingerprint(self, n: int) -> bytes:
        return np.ascontiguousarray(self.alphas(n)).tobytes()


def sequential_orbit(schedule: ParameterSchedule, x0: float, n: int) -> np.ndarray:
    """Orbit (x0, T_1 x0, T_2 T_1 x0, ..., composition of n maps applied to x0)."""
    x0 = float(_check_domain(x0))
    alphas = schedule.alphas(n)
    orbit = np.empty(n + 1)
    orbit[0] = x0
    x = x0
    for i, a in enumerate(alphas):
        x = lsv_apply(a, x)
        orbit[i + 1] = x
    return orbit
