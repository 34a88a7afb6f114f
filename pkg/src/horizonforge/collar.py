"""Monotone PSC almost-cobordances over a path of closed spheres.

The collar metric is ``h = (1 + eps rho(t)) g_{tau(t)} + A^2 u(., tau(t))^2 dt^2``
with ``u(., s)`` the positive principal eigenfunction of ``-Delta + k R`` for
``g_s``.  With ``eps = 0`` and ``tau(t) = t`` this is the minimal-slice collar.

Every ingredient of the slicing formula except the lapse scales either as
``A^0`` or as ``A^{-2}``, so ``R_h(A) = P + Q / A^2`` holds exactly for the
discrete quantities too; the amplitude search uses that decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from ._fd import derivative
from .config import tolerances
from .geomcore import RadialGrid, SlicedMetric, slice_curvature
from .paths import MetricPath
from .spectral import lambda1


class CollarError(ValueError):
    """Raised when the collar hypotheses fail."""


@dataclass(frozen=True, eq=False)
class CollarMetric:
    path: MetricPath
    t_grid: RadialGrid
    tau: np.ndarray
    rho: np.ndarray
    a: np.ndarray
    phi: np.ndarray
    lapse: np.ndarray
    lambda1: np.ndarray
    amplitude: float
    epsilon: float
    k: float
    schedule: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.path.n

    @property
    def scale(self) -> np.ndarray:
        return 1.0 + self.epsilon * self.rho

    @property
    def metric(self) -> SlicedMetric:
        s = np.sqrt(self.scale)[:, None]
        return SlicedMetric(self.n, self.path.x_grid, self.t_grid, s * self.a, s * self.phi,
                            self.amplitude * self.lapse)

    def to_json(self) -> dict:
        m = self.metric
        return {
            "n": self.n,
            "epsilon": float(self.epsilon),
            "A": float(self.amplitude),
            "t_grid": [float(v) for v in self.t_grid.samples],
            "g": [[float(v) for v in row] for row in m.phi],
            "g_radial": [[float(v) for v in row] for row in m.a],
            "u": [[float(v) for v in row] for row in self.lapse],
            "rho": [float(v) for v in self.rho],
            "tau": [float(v) for v in self.tau],
        }


@dataclass(frozen=True, eq=False)
class CollarReport:
    min_R: float
    min_R_location: tuple
    slice_H: np.ndarray
    boundary_flags: dict
    R: np.ndarray

    def to_json(self) -> dict:
        return {"min_R": self.min_R, "min_R_location": list(self.min_R_location),
                "boundary_flags": self.boundary_flags}


def _eigenpairs(path: MetricPath, k: float):
    lam, us = [], []
    for m in path.metrics:
        r = lambda1(m, k, scheme="fd4")
        lam.append(r.lambda1)
        us.append(r.eigenfunction)
    return np.array(lam), np.vstack(us)


def _volume_drift(path: MetricPath) -> float:
    a, phi = path.arrays()
    dens = a * phi ** (path.n - 1)
    return float(np.max(np.abs(dens - dens[0])) / np.max(np.abs(dens[0])))


def _decompose(sliced_at):
    """``(P, Q)`` with ``R_h(A) = P + Q / A^2`` from two evaluations."""
    R1 = slice_curvature(sliced_at(1.0)).R
    R2 = slice_curvature(sliced_at(2.0)).R
    return (4 * R2 - R1) / 3, 4 * (R1 - R2) / 3


def select_amplitude(P, Q, rows=slice(None), reserve=0.5, max_doublings=60, bisections=40) -> float:
    """Smallest A (doubling from 1, then bisection) with ``P + Q/A^2 >= reserve * P``.

    Holding back a fraction of the positive leading term keeps the bisection
    endpoint clear of round-off. ``rows`` restricts the check, e.g. to exclude a
    degenerate boundary slice.
    """
    P, Q = P[rows], Q[rows]

    def ok(A):
        return float(np.min((1 - reserve) * P + Q / (A * A))) > 0

    A = 1.0
    if ok(A):
        return A
    for _ in range(max_doublings):
        A *= 2
        if ok(A):
            break
    else:
        raise CollarError("no amplitude makes the scalar curvature positive")
    lo, hi = A / 2, A
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _report(c: CollarMetric, R: np.ndarray, H: np.ndarray, rows=slice(None)) -> CollarReport:
    # degenerate boundary slices carry R_h = 0 up to discretization and are left out of min_R
    offset = range(R.shape[0])[rows].start
    j, i = np.unravel_index(np.argmin(R[rows]), R[rows].shape)
    j += offset
    x = c.path.x_grid.samples
    flags = {
        "left_minimal": bool(np.max(np.abs(H[0])) <= 1e-6),
        "right_sign": "positive" if np.all(H[-1] > 0) else ("zero" if np.max(np.abs(H[-1])) <= 1e-6 else "mixed"),
    }
    return CollarReport(float(R[j, i]), (float(x[i]), float(c.t_grid.samples[j])), H, flags, R)


def build_minimal_collar(path: MetricPath, k: float = 0.5):
    """``g_t + A^2 u_t^2 dt^2`` with every slice minimal."""
    lam, U = _eigenpairs(path, k)
    if np.min(lam) <= tolerances().membership:
        raise CollarError(f"lambda1 must be positive along the path (min {np.min(lam):.3e})")
    drift = _volume_drift(path)
    if drift > tolerances().volume_drift:
        raise CollarError(f"slice volume form drifts by {drift:.3e}; run the twist first")
    a, phi = path.arrays()
    tg = path.t_grid

    def sliced(A):
        return SlicedMetric(path.n, path.x_grid, tg, a, phi, A * U)

    P, Q = _decompose(sliced)
    A = select_amplitude(P, Q)
    c = CollarMetric(path, tg, tg.samples.copy(), np.zeros(tg.points), a, phi, U, lam, A, 0.0, k)
    geo = slice_curvature(c.metric)
    return c, _report(c, geo.R, geo.H)


# --- schedules --------------------------------------------------------------

def _smooth_poly(coeffs):
    p = np.polynomial.Polynomial(coeffs)
    return p, p.deriv(), p.deriv(2)


def _left_tau(alpha):
    return _smooth_poly([0.0, 0.0, alpha, 1.0 - alpha])


def _mirror(poly):
    # t -> 1 - P(1 - t)
    flip = np.polynomial.Polynomial([1.0, -1.0])
    q = 1.0 - poly(flip)
    return q, q.deriv(), q.deriv(2)


def _bridge_tau(kappa):
    # tau' = kappa t(1-t)(1 + gamma t(1-t)), gamma chosen so that tau(1) = 1
    gamma = 30.0 / kappa - 5.0
    b = np.polynomial.Polynomial([0.0, 1.0, -1.0])
    dp = kappa * b * (1 + gamma * b)
    p = dp.integ()
    return p, dp, dp.deriv()


def _rho_poly(left_degenerate: bool, right_degenerate: bool, c: float = 0.0):
    if not left_degenerate and not right_degenerate:
        return _smooth_poly([0.0, 0.0, 1.0])
    if not left_degenerate:
        # rho'' < 0 at t = 1 for the right-hand condition
        return _smooth_poly([0.0, 0.0, 2.0, -1.0])
    if not right_degenerate:
        return _smooth_poly([0.0, 0.0, 0.0, 0.0, c, 1.0 - c])
    # rho' = t^3 (4c + B t^m (1 - t)) with B normalizing rho(1) = 1; B > 12c makes rho''(1) < 0
    m = 6
    B = (1.0 - c) * (m + 4) * (m + 5)
    t = np.polynomial.Polynomial([0.0, 1.0])
    dp = t ** 3 * (4 * c + B * t ** m * (1 - t))
    p = dp.integ()
    return p, dp, dp.deriv()


NEAR_END = 0.02


def _schedules(lam_s, s_grid, left_degenerate, right_degenerate, t, epsilon):
    spl = CubicSpline(s_grid, lam_s)
    d1 = float(spl(0.0, 1))
    d1r = float(spl(1.0, 1))
    near0 = (t > 0) & (t <= NEAR_END)
    near1 = (t < 1) & (t >= 1 - NEAR_END)
    info = {"case_left": "B" if left_degenerate else "A", "case_right": "B" if right_degenerate else "A"}
    if not left_degenerate and not right_degenerate:
        tau = _smooth_poly([0.0, 1.0])
    else:
        if left_degenerate and not d1 > 0:
            raise CollarError("left-degenerate path needs lambda1'(0) > 0")
        if right_degenerate and not d1r < 0:
            raise CollarError("right-degenerate path needs lambda1'(1) < 0")
        slope = min(d1 if left_degenerate else np.inf, -d1r if right_degenerate else np.inf)
        alpha = 0.5 * min(1.0, slope / 8.0)
        for _ in range(60):
            if left_degenerate and right_degenerate:
                tau = _bridge_tau(2 * alpha)
            elif left_degenerate:
                tau = _left_tau(alpha)
            else:
                tau = _mirror(_left_tau(alpha)[0])
            tp2 = tau[1](t) ** 2
            lam_tau = spl(np.clip(tau[0](t), 0, 1))
            good = True
            if left_degenerate:
                good &= bool(np.all(tp2[near0] <= 0.5 * lam_tau[near0]))
            if right_degenerate:
                good &= bool(np.all(tp2[near1] <= 0.5 * lam_tau[near1] / (1 + epsilon)))
            if good:
                break
            alpha *= 0.5
        else:
            raise CollarError("no admissible alpha found for the degenerate schedule")
        info["alpha"] = alpha
    c = 0.0
    if left_degenerate:
        c = min(1.0, d1 * info["alpha"] / 24.0)
        for _ in range(60):
            rho = _rho_poly(True, right_degenerate, c)
            lam_tau = spl(np.clip(tau[0](t), 0, 1))
            if np.all(rho[2](t[near0]) + rho[1](t[near0]) <= 0.5 * lam_tau[near0]):
                break
            c *= 0.5
        else:
            raise CollarError("no admissible rho found near t = 0")
        info["rho_c"] = c
    rho = _rho_poly(left_degenerate, right_degenerate, c)
    return tau, rho, info


def _interp_path(path: MetricPath, tau_vals):
    """Slices ``g_{tau}``; knots are copied exactly, other warping functions by
    cubic splines in s with the radial factor fixed by the shared volume form."""
    a, phi = path.arrays()
    s = path.t_grid.samples
    sp = CubicSpline(s, phi, axis=0)
    dens = a[0] * phi[0] ** (path.n - 1)
    A = np.empty((tau_vals.size, a.shape[1]))
    F = np.empty_like(A)
    for j, tv in enumerate(tau_vals):
        hit = np.flatnonzero(s == tv)
        if hit.size:
            A[j], F[j] = a[hit[0]], phi[hit[0]]
        else:
            F[j] = sp(tv)
            F[j, 0] = F[j, -1] = 0.0
            # restore the common volume form so interpolated slices stay minimal
            A[j, 1:-1] = dens[1:-1] / F[j, 1:-1] ** (path.n - 1)
            A[j, 0], A[j, -1] = a[0, 0], a[0, -1]
    return A, F


def _degenerate_tol(lam):
    return 1e-6 * max(1.0, float(np.max(np.abs(lam))))


def build_mean_convex_collar(path: MetricPath, k: float = 0.5, epsilon: float = 1e-3,
                             left_degenerate: bool = False, right_degenerate: bool = False,
                             t_points: int | None = None, eigen=None):
    """Collar from ``g_L`` to ``(1+eps) g_R`` whose slices are strictly mean-convex past t = 0.

    ``eigen`` may carry precomputed ``(lambda1, eigenfunctions)`` on the path
    grid to avoid repeated eigensolves when sweeping ``epsilon``.
    """
    if not epsilon > 0:
        raise CollarError("epsilon must be positive")
    lam_s, _ = _eigenpairs(path, k) if eigen is None else eigen
    tol = _degenerate_tol(lam_s)
    for flag, val, side in ((left_degenerate, lam_s[0], "left"), (right_degenerate, lam_s[-1], "right")):
        if flag and abs(val) > tol:
            raise CollarError(f"{side} end flagged degenerate but lambda1 = {val:.3e}")
        if not flag and val <= tol:
            raise CollarError(f"{side} end has lambda1 = {val:.3e}; flag it degenerate")
    if np.min(lam_s[1:-1]) <= 0:
        raise CollarError("lambda1 must be positive in the interior of the path")
    drift = _volume_drift(path)
    if drift > tolerances().volume_drift:
        raise CollarError(f"slice volume form drifts by {drift:.3e}; run the twist first")
    tg = RadialGrid(0.0, 1.0, t_points or path.t_grid.points)
    t = tg.samples
    tau_p, rho_p, info = _schedules(lam_s, path.t_grid.samples, left_degenerate, right_degenerate, t, epsilon)
    tau = np.clip(tau_p[0](t), 0.0, 1.0)
    tau[0], tau[-1] = 0.0, 1.0
    rho = rho_p[0](t)
    rho[0], rho[-1] = 0.0, 1.0
    if eigen is not None and tg == path.t_grid and np.array_equal(tau, t):
        a, phi = path.arrays()
        lam, U = eigen
    else:
        a, phi = _interp_path(path, tau)
        sub = MetricPath.from_arrays(path.n, path.x_grid, tg, a, phi)
        lam, U = _eigenpairs(sub, k)
    scale = np.sqrt(1 + epsilon * rho)[:, None]

    def sliced(A):
        return SlicedMetric(path.n, path.x_grid, tg, scale * a, scale * phi, A * U)

    P, Q = _decompose(sliced)
    rows = slice(1 if left_degenerate else 0, -1 if right_degenerate else None)
    A = select_amplitude(P, Q, rows=rows)
    info.update(tau_poly=[float(v) for v in tau_p[0].coef], rho_poly=[float(v) for v in rho_p[0].coef])
    c = CollarMetric(path, tg, tau, rho, a, phi, U, lam, A, float(epsilon), k, info)
    geo = slice_curvature(c.metric)
    return c, _report(c, geo.R, geo.H, rows)


def mean_convex_terms(c: CollarMetric) -> dict:
    """Closed-form pieces of the collar: slice mean curvature and the
    term-by-term scalar curvature (valid when the base slices are minimal).

    The coefficient of the ``eps^2 rho'^2`` term is ``+(3-n) n / 4``.
    """
    n = c.n
    eps, A = c.epsilon, c.amplitude
    tg = c.t_grid
    t = tg.samples
    poly_r = np.polynomial.Polynomial(c.schedule.get("rho_poly", [0.0]))
    r1 = poly_r.deriv()(t)[:, None]
    r2 = poly_r.deriv(2)(t)[:, None]
    s = (1 + eps * c.rho)[:, None]
    u = c.lapse
    Hbar = n * eps * r1 / (2 * s * A * u)
    base = SlicedMetric(n, c.path.x_grid, tg, c.a, c.phi, np.ones_like(u))
    geo = slice_curvature(base)
    # sff of g_{tau(t)} in the t variable already carries the tau' factor
    dlogu = derivative(np.log(u), tg.h, 1, axis=0)
    lam = c.lambda1[:, None]
    Au2 = (A * u) ** 2
    R = (2 * lam / s - n * eps * r2 / (s * Au2) + (3 - n) * n * eps ** 2 * r1 ** 2 / (4 * s ** 2 * Au2)
         - geo.sff_norm_sq / Au2 + n * eps * r1 * dlogu / (s * Au2))
    return {"H": Hbar, "R": R}
