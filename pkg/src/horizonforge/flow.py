"""Rotationally symmetric Ricci flow on closed spheres with an eigenvalue monitor.

States are kept in the conformally round gauge

    g = e^{2w(x)} (dx^2 + sin^2 x g_{S^{n-1}}),   0 <= x <= pi,

which every rotationally symmetric sphere admits.  ``dg/dt = -2 Ric`` is
composed with the radial diffeomorphism generated by ``V d/dx`` that keeps the
gauge, where ``(V / sin x)_x = -(n - 2)(K_tan - K_rad) / sin x``.  The result
is a single scalar equation

    w_t = e^{-2w} (w_xx + (2n - 3) w_x cot x + (n - 2) w_x^2 - (n - 1))
          + V (cot x + w_x)

whose pole terms are regular for even ``w``.  Time stepping is Heun's method
under a parabolic step limit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.interpolate import CubicSpline

from ._fd import derivative, even_fill
from .config import tolerances
from .geomcore import RadialGrid, WarpedMetric, polar_sincos, sphere_volume, warped_closed_scalar
from .spectral import lambda1


class FlowError(ValueError):
    pass


def _rhs(n, h, w, sin_x, cos_x):
    wx = derivative(w, h, 1, parity=1)
    wxx = derivative(w, h, 2, parity=1)
    g = np.empty_like(w)
    g[1:-1] = wx[1:-1] * cos_x[1:-1] / sin_x[1:-1]
    g[0], g[-1] = wxx[0], wxx[-1]  # w_x cot x -> w_xx at a pole
    e = np.exp(-2 * w)
    # K_tan - K_rad in this gauge; vanishes at a smooth pole
    src = -(n - 2) * e * (wxx - g - wx ** 2)
    q = np.zeros_like(w)
    q[1:-1] = src[1:-1] / sin_x[1:-1]
    J = cumulative_simpson(q, dx=h, initial=0)
    J -= 0.5 * J[-1]  # balanced choice of the conformal Killing component
    V = sin_x * J
    return e * (wxx + (2 * n - 3) * g + (n - 2) * wx ** 2 - (n - 1)) + cos_x * J + V * wx


def to_conformal_gauge(m: WarpedMetric) -> np.ndarray:
    """``w`` on the uniform grid of ``[0, pi]`` with ``m.grid.points`` samples.

    The new coordinate ``y`` solves ``dy / sin y = a dx / phi``; its free
    dilation is fixed so that the two poles are treated symmetrically.
    """
    if m.kind != "closed_sphere" or not m.pole_closure:
        raise FlowError("the flow needs a closed sphere with pole closure")
    N = m.grid.points
    xi = np.linspace(0.0, np.pi, N)
    a = m.a * (m.grid.b - m.grid.a) / np.pi
    phi = m.profile
    sx = polar_sincos(RadialGrid(0.0, np.pi, N))[0]
    integrand = np.zeros(N)
    integrand[1:-1] = a[1:-1] / phi[1:-1] - 1.0 / sx[1:-1]
    D = cumulative_simpson(integrand, dx=xi[1], initial=0)
    D -= 0.5 * (D[0] + D[-1])
    half = np.tan(xi[1:-1] / 2) * np.exp(D[1:-1])
    y = np.concatenate([[0.0], 2 * np.arctan(half), [np.pi]])
    w = np.zeros(N)
    w[1:-1] = np.log(phi[1:-1] / np.sin(np.minimum(y[1:-1], np.pi - y[1:-1])))
    w = even_fill(w)
    return CubicSpline(y, w)(xi)


def _state(n, grid, w):
    e = np.exp(w)
    phi = e * polar_sincos(grid)[0]
    return WarpedMetric("closed_sphere", n, grid, phi, True, e)


@dataclass(eq=False)
class FlowTrajectory:
    times: np.ndarray
    states: list
    k: float
    lambda1_series: np.ndarray
    volume_series: np.ndarray
    total_scalar: np.ndarray
    blow_up: bool = False
    steps: int = 0
    _lambda_cache: dict = field(default_factory=dict, repr=False)

    def lambda1_for(self, k: float, scheme: str = "fd4") -> np.ndarray:
        if k == self.k and scheme == "fd4":
            return self.lambda1_series
        key = (float(k), scheme)
        if key not in self._lambda_cache:
            self._lambda_cache[key] = np.array([lambda1(m, k, scheme=scheme).lambda1 for m in self.states])
        return self._lambda_cache[key]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t", "r_max", "lambda1", "volume"])
            for t, m, lam, vol in zip(self.times, self.states, self.lambda1_series, self.volume_series):
                out.writerow([f"{t:.17g}", f"{float(np.max(m.profile)):.17g}", f"{lam:.17g}", f"{vol:.17g}"])


def evolve(initial: WarpedMetric, dt: float, T: float, k: float = 0.5,
           monitor_every: int = 10, cfl: float = 0.2) -> FlowTrajectory:
    """Integrate to time ``T`` with steps at most ``dt``.

    A state is recorded (with its ``lambda_1`` for ``k``, volume and total
    scalar curvature) every ``monitor_every`` steps and at ``T``.  States are
    returned in the conformally round gauge on ``[0, pi]``.  If the curvature
    exceeds the blow-up threshold, or the step limit underflows, the partial
    trajectory is returned with ``blow_up`` set.
    """
    if initial.kind != "closed_sphere" or not initial.pole_closure:
        raise FlowError("the flow needs a closed sphere with pole closure")
    if not dt > 0 or not T > 0:
        raise FlowError("dt and T must be positive")
    warped_closed_scalar(initial)  # validates the closure invariant
    n = initial.n
    grid = RadialGrid(0.0, np.pi, initial.grid.points)
    h = grid.h
    sin_x, cos_x = polar_sincos(grid)
    w = to_conformal_gauge(initial)
    blow = tolerances().curvature_blowup
    t = 0.0
    times, states, lams, vols, tot = [], [], [], [], []

    def record(t, w):
        m = _state(n, grid, w)
        R = warped_closed_scalar(m)
        times.append(t)
        states.append(m)
        lams.append(lambda1(m, k, scheme="fd4", R=R).lambda1)
        vols.append(m.volume())
        tot.append(float(sphere_volume(n - 1) * simpson(R * m.volume_density(), x=grid.samples)))
        return R

    record(t, w)
    steps = 0
    blown = False
    while t < T * (1 - 1e-14):
        step = min(dt, cfl * np.exp(2 * np.min(w)) * h ** 2, T - t)
        if step < 1e-14 * max(1.0, T):
            blown = True
            break
        k1 = _rhs(n, h, w, sin_x, cos_x)
        k2 = _rhs(n, h, w + step * k1, sin_x, cos_x)
        w = w + 0.5 * step * (k1 + k2)
        t += step
        steps += 1
        if not np.all(np.isfinite(w)):
            blown = True
            break
        if steps % monitor_every == 0 or t >= T * (1 - 1e-14):
            try:
                R = record(t, w)
            except ValueError:
                blown = True
                break
            if np.max(np.abs(R)) > blow:
                blown = True
                break
    return FlowTrajectory(np.array(times), states, float(k), np.array(lams), np.array(vols),
                          np.array(tot), blown, steps)


def volume_identity_residual(traj: FlowTrajectory) -> np.ndarray:
    """Relative gap between ``-d vol/dt`` (centered differences of the recorded
    volumes, non-uniform spacing) and the total scalar curvature."""
    t, V = traj.times, traj.volume_series
    if t.size < 3:
        raise FlowError("trajectory too short")
    h0, h1 = t[1:-1] - t[:-2], t[2:] - t[1:-1]
    dV = (-(h1 / (h0 * (h0 + h1))) * V[:-2] + ((h1 - h0) / (h0 * h1)) * V[1:-1]
          + (h0 / (h1 * (h0 + h1))) * V[2:])
    return np.abs(-dV - traj.total_scalar[1:-1]) / np.abs(traj.total_scalar[1:-1])


@dataclass(frozen=True)
class MonotonicityReport:
    k: float
    times: np.ndarray
    dlambda_dt: np.ndarray
    min_rate: float
    strictly_increasing: bool


def monotonicity_report(traj: FlowTrajectory, k: float, allow_below_quarter: bool = False) -> MonotonicityReport:
    """Centered differences of ``lambda_1(-Delta + kR)`` along the flow."""
    if k < 0.25 and not allow_below_quarter:
        raise FlowError("monotonicity needs k >= 1/4 (pass allow_below_quarter to explore)")
    if traj.times.size < 3:
        raise FlowError("trajectory too short (< 3 samples)")
    lam = traj.lambda1_for(k)
    t = traj.times
    h0, h1 = t[1:-1] - t[:-2], t[2:] - t[1:-1]
    rate = (-(h1 / (h0 * (h0 + h1))) * lam[:-2] + ((h1 - h0) / (h0 * h1)) * lam[1:-1]
            + (h0 / (h1 * (h0 + h1))) * lam[2:])
    return MonotonicityReport(float(k), t[1:-1], rate, float(np.min(rate)), bool(np.all(rate > 0)))


def round_radius_squared(r0: float, t, n: int = 3):
    """Shrinking round sphere: ``r^2 = r0^2 - 2 (n - 1) t``."""
    return r0 ** 2 - 2 * (n - 1) * np.asarray(t, dtype=float)
