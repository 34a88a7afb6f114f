"""Phase-plane engine for round normal foliations.

A tube ``f(t)^2 g_{S^n} + dt^2`` with ``f' > 0`` is described by the curve
``y = f'`` as a function of the radius ``x = f``.  The Hawking-type quantity

    C(x) = x^{n-1} (1 - y^2)

is constant exactly along scalar-flat (Schwarzschild) profiles, and

    R = n C'(x) / x^n,        PSC margin = C' / ((n-1) x^{n-1} y),

so positive scalar curvature is the statement that ``C`` increases.  Profiles
store ``C'`` alongside the samples so that these quantities are exact on
orbit segments rather than limited by differencing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .config import tolerances
from .geomcore import RadialGrid, WarpedMetric, sphere_volume


class GluingError(ValueError):
    """Raised when two profiles cannot be joined by a PSC bridge."""


@dataclass(frozen=True, eq=False)
class PlanarProfile:
    x: np.ndarray
    y: np.ndarray
    n: int
    dC: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, float)
        y = np.asarray(self.y, float)
        dC = np.asarray(self.dC, float)
        for name, arr in (("x", x), ("y", y), ("dC", dC)):
            object.__setattr__(self, name, arr)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"profile {name} contains non-finite values")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not (x.shape == y.shape == dC.shape) or x.size < 2:
            raise ValueError("x, y and dC must be equal-length arrays with at least 2 samples")
        if np.any(np.diff(x) <= 0) or x[0] <= 0:
            raise ValueError("x must be positive and strictly increasing")
        if np.any(y[1:] <= 0) or y[0] < 0:
            raise ValueError("y must be positive (zero allowed only at a leading horizon)")
        if np.any(y > 1 + 1e-12):
            raise ValueError("y must not exceed 1")

    @property
    def C(self) -> np.ndarray:
        return self.x ** (self.n - 1) * (1 - self.y ** 2)

    @property
    def yprime(self) -> np.ndarray:
        n, x, y = self.n, self.x, self.y
        with np.errstate(divide="ignore", invalid="ignore"):
            return ((n - 1) * x ** (n - 2) * (1 - y ** 2) - self.dC) / (2 * x ** (n - 1) * y)

    @property
    def psc_margin(self) -> np.ndarray:
        """``(1-y^2)/(xy) - 2y'/(n-1)``; exact zero wherever ``C' = 0``."""
        den = (self.n - 1) * self.x ** (self.n - 1) * self.y
        out = np.zeros_like(self.x)
        np.divide(self.dC, den, out=out, where=self.dC != 0)
        return out

    @property
    def scalar_curvature(self) -> np.ndarray:
        return self.n * self.dC / self.x ** self.n

    def to_tube(self, points: int) -> WarpedMetric:
        """Arclength tube profile over the sampled radius range (requires y > 0)."""
        if self.y[0] <= 0:
            raise ValueError("arclength parametrization starts past the horizon")
        from scipy.interpolate import CubicSpline

        inv = CubicSpline(self.x, 1.0 / self.y)
        t = np.concatenate([[0.0], np.cumsum([inv.integrate(a, b) for a, b in zip(self.x[:-1], self.x[1:])])])
        grid = RadialGrid(0.0, float(t[-1]), points)
        f = CubicSpline(t, self.x)(grid.samples)
        return WarpedMetric("tube", self.n, grid, f)


@dataclass(frozen=True)
class SchwarzschildOrbit:
    C: float
    n: int

    @property
    def mass(self) -> float:
        return self.C / 2

    @property
    def horizon_radius(self) -> float:
        return self.C ** (1.0 / (self.n - 1)) if self.C > 0 else 0.0

    def y(self, x):
        x = np.asarray(x, float)
        if np.any(x < self.horizon_radius * (1 - 1e-15)):
            raise ValueError("radius inside the horizon")
        return np.sqrt(np.clip(1 - self.C * x ** (1 - self.n), 0.0, None))

    def band(self, x0: float, x1: float, points: int) -> PlanarProfile:
        """Samples of the orbit on ``[x0, x1]`` (uniform in x)."""
        if not x1 > x0:
            raise ValueError("band needs x1 > x0")
        x = np.linspace(x0, x1, points)
        y = self.y(x)
        if x0 == self.horizon_radius:
            y[0] = 0.0
        return PlanarProfile(x, y, self.n, np.zeros(points))

    def tube_profile(self, x0: float, length: float, points: int) -> WarpedMetric:
        """Arclength profile ``f`` with ``f(0) = x0`` solving ``f'' = (n-1) C f^{-n} / 2``."""
        y0 = float(self.y(x0))
        n, C = self.n, self.C
        grid = RadialGrid(0.0, length, points)
        sol = solve_ivp(
            lambda t, s: [s[1], 0.5 * (n - 1) * C * s[0] ** (-n)],
            (0.0, length), [x0, y0], method="DOP853", t_eval=grid.samples, rtol=1e-13, atol=1e-14,
        )
        if not sol.success:
            raise RuntimeError(sol.message)
        return WarpedMetric("tube", n, grid, sol.y[0])


def orbit(x0: float, y0: float, n: int) -> SchwarzschildOrbit:
    if not x0 > 0 or not 0 <= y0 <= 1:
        raise ValueError("orbit needs x0 > 0 and y0 in [0, 1]")
    return SchwarzschildOrbit(C=float(x0 ** (n - 1) * (1 - y0 ** 2)), n=int(n))


def orbit_rk4(x0: float, y0: float, n: int, x_end: float, step: float = 1e-4):
    """Classical RK4 for the equality case ``(1-y^2)/(xy) = 2y'/(n-1)``.

    Starting on a horizon (``y0 = 0``) the equation is singular, so ``w = y^2``
    is integrated instead: ``w' = (n-1)(1-w)/x``.
    """
    if y0 > 0:
        def rhs(x, y):
            return (n - 1) * (1 - y * y) / (2 * x * y)
        state = y0
    else:
        def rhs(x, w):
            return (n - 1) * (1 - w) / x
        state = 0.0
    steps = int(np.ceil((x_end - x0) / step))
    hh = (x_end - x0) / steps
    xs = x0 + hh * np.arange(steps + 1)
    out = np.empty(steps + 1)
    out[0] = state
    for i in range(steps):
        x = xs[i]
        k1 = rhs(x, state)
        k2 = rhs(x + hh / 2, state + hh / 2 * k1)
        k3 = rhs(x + hh / 2, state + hh / 2 * k2)
        k4 = rhs(x + hh, state + hh * k3)
        state = state + hh / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = state
    return xs, (out if y0 > 0 else np.sqrt(np.clip(out, 0, None)))


def _check_order(p1: PlanarProfile, p2: PlanarProfile):
    if p1.n != p2.n:
        raise ValueError("profiles have different dimensions")
    if not p1.x[-1] < p2.x[0]:
        raise ValueError("radius ranges overlap: p1 must end before p2 starts")


def gluing_feasible(p1: PlanarProfile, p2: PlanarProfile) -> bool:
    """Whether p2 starts strictly below the Schwarzschild orbit leaving p1."""
    _check_order(p1, p2)
    orb = SchwarzschildOrbit(float(p1.C[-1]), p1.n)
    return bool(p2.y[0] < orb.y(p2.x[0]))


def _h_left(s):
    # 1 at s = 0 and 0 at s = 1, first and second derivatives vanishing at both ends
    return (1 - s) ** 3 * (1 + 3 * s + 6 * s * s)


def _taylor_exp(dC, ddC):
    """Positive function matching (dC, ddC) at its base point; zero if dC vanishes."""
    if abs(dC) <= 1e-14:
        return 0.0, 0.0
    return float(dC), float(ddC / dC)


def _end_slope(p: PlanarProfile, at_end: bool) -> float:
    if p.x.size < 3:
        return 0.0
    d = np.gradient(p.dC, p.x, edge_order=2)
    return float(d[-1] if at_end else d[0])


_GAUSS = np.polynomial.legendre.leggauss(8)


def _bridge_samples(x1, x2, w, points, dense=64):
    body = np.linspace(x1, x2, points + 2)[1:-1]
    left = x1 + w * np.linspace(0, 1, dense + 1)[1:]
    right = x2 - w * np.linspace(0, 1, dense + 1)[1:]
    xs = np.unique(np.concatenate([body, left, right]))
    return xs[(xs > x1) & (xs < x2)]


def glue_profiles(p1: PlanarProfile, p2: PlanarProfile, window: float = 0.05,
                  points: int = 512, max_attempts: int = 30) -> PlanarProfile:
    """Join p1 and p2 by a bridge along which ``C`` increases strictly.

    The bridge prescribes ``C'`` as two decaying end terms (which reproduce
    the one-sided values and slopes of ``C'`` so the junctions are C^2) plus a
    positive bump whose amplitude closes the gap ``C2 - C1``.  ``window`` is the
    initial decay length as a fraction of the bridge length; on failure the
    windows are halved and the bump is pushed outward.
    """
    _check_order(p1, p2)
    if p2.y[0] <= 0:
        raise GluingError("p2 starts on a horizon (y = 0); no mean-convex bridge can end there")
    if not gluing_feasible(p1, p2):
        raise GluingError("gluing condition (2′) violated")
    n = p1.n
    x1, x2 = float(p1.x[-1]), float(p2.x[0])
    C1, C2 = float(p1.C[-1]), float(p2.C[0])
    L = x2 - x1
    a1, g1 = _taylor_exp(p1.dC[-1], _end_slope(p1, True))
    a2, g2 = _taylor_exp(p2.dC[0], _end_slope(p2, False))
    nodes, weights = _GAUSS
    w = window * L
    p = 2
    for _ in range(max_attempts):
        xs = _bridge_samples(x1, x2, w, points)
        edges = np.concatenate([[x1], xs, [x2]])
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * np.diff(edges)
        q = mid[:, None] + half[:, None] * nodes[None, :]

        def ends(x):
            sl = np.clip((x - x1) / w, 0, 1)
            sr = np.clip((x2 - x) / w, 0, 1)
            return a1 * np.exp(g1 * (x - x1)) * _h_left(sl) + a2 * np.exp(g2 * (x - x2)) * _h_left(sr)

        def bump(x):
            s = (x - x1) / L
            return s ** p * (1 - s) ** 2

        I_end = (ends(q) * weights).sum(axis=1) * half
        I_bump = (bump(q) * weights).sum(axis=1) * half
        K = (C2 - C1 - I_end.sum()) / I_bump.sum()
        if K > 0:
            C = C1 + np.cumsum(I_end + K * I_bump)[:-1]
            dC = ends(xs) + K * bump(xs)
            if np.all(dC > 0) and np.all(C < xs ** (n - 1)):
                y = np.sqrt(1 - C * xs ** (1 - n))
                if np.all(y > 0):
                    return PlanarProfile(
                        np.concatenate([p1.x, xs, p2.x]),
                        np.concatenate([p1.y, y, p2.y]),
                        n,
                        np.concatenate([p1.dC, dC, p2.dC]),
                    )
        p += 1
        w *= 0.5
    raise GluingError("no strictly PSC bridge found within the attempt budget")


def bend_and_glue(m1: float, m2: float, rho1: float, rho2: float, n: int = 2,
                  x_max: float | None = None, points: int = 512, window: float = 0.05) -> PlanarProfile:
    """Mass-m1 Schwarzschild from its horizon to rho1 joined to mass-m2 beyond rho2."""
    if not m2 > m1:
        raise ValueError("bend_and_glue needs m2 > m1")
    if not rho2 > rho1:
        raise ValueError("bend_and_glue needs rho2 > rho1")
    o1 = SchwarzschildOrbit(2.0 * m1, n)
    o2 = SchwarzschildOrbit(2.0 * m2, n)
    if not rho1 > o1.horizon_radius:
        raise ValueError("rho1 must lie outside the inner horizon")
    if not rho2 > o2.horizon_radius:
        raise GluingError("rho2 lies inside the outer horizon; the mean-curvature comparison fails")
    x_max = 2.0 * rho2 if x_max is None else float(x_max)
    inner = o1.band(o1.horizon_radius, rho1, points) if m1 > 0 else o1.band(rho1 / points, rho1, points)
    outer = o2.band(rho2, x_max, points)
    return glue_profiles(inner, outer, window=window, points=points)


def torpedo_cap(alpha: float, beta: float, r1: float, points: int = 1024):
    """Planar cap with curvature ``sin(theta) / (2 r)`` closing at ``r = alpha``.

    Returns ``(r, u)`` on ``(alpha, r1]``; ``u(r1) = beta`` and ``u' -> -inf``
    as ``r -> alpha``.  ``theta`` is the tangent angle from the horizontal.
    """
    if not alpha > 0 or not r1 > alpha:
        raise ValueError("torpedo_cap needs alpha > 0 and r1 > alpha")
    r = np.linspace(alpha, r1, points + 1)[1:]
    return r, torpedo_u(alpha, beta, r1, r)


def torpedo_u(alpha, beta, r1, r):
    r = np.asarray(r, float)
    return beta + 2 * np.sqrt(alpha) * (np.sqrt(r1 - alpha) - np.sqrt(r - alpha))


def torpedo_residual(alpha, beta, r1, r) -> np.ndarray:
    """``kappa - sin(theta)/(2r)`` from analytic derivatives of the cap."""
    r = np.asarray(r, float)
    up = -np.sqrt(alpha / (r - alpha))
    upp = 0.5 * np.sqrt(alpha) * (r - alpha) ** -1.5
    kappa = upp / (1 + up * up) ** 1.5
    sin_theta = -up / np.sqrt(1 + up * up)
    return kappa - sin_theta / (2 * r)


def adm_mass(p: PlanarProfile, tail: int = 16) -> float:
    """Mass of the terminal Schwarzschild segment (last ``tail`` samples)."""
    tail = min(max(tail, 2), p.x.size)
    C = p.C[-tail:]
    drift = float(C.max() - C.min())
    tol = tolerances().orbit_drift * max(1.0, abs(float(C[-1])))
    if drift > tol:
        raise ValueError(f"terminal segment is not Schwarzschild (orbit-constant drift {drift:.3e})")
    return float(C[-1]) / 2


def penrose_bound(volume: float, n: int) -> float:
    if volume < 0:
        raise ValueError("volume must be nonnegative")
    return 0.5 * (volume / sphere_volume(n)) ** ((n - 1) / n)
