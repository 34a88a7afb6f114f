"""Minimizing sequences for the apparent-horizon Bartnik mass.

Each extension is assembled from three pieces glued along round spheres:

1. a mean-convex collar from the horizon ``g`` to ``(1 + eps)`` times the
   equal-volume round metric, built over a conformal path that reaches the
   round metric at ``t = 1/2`` and stays there;
2. the round tail of that collar read as a phase-plane curve
   ``x = r0 sqrt(1 + eps rho)``, ``y = dx/ds``;
3. a strictly PSC bridge into an exact Schwarzschild band of mass
   ``m(eps) = r0^(n-1) ((1 + eps)^((n-1)/2) + eps/4) / 2``.

``m(eps)`` decreases to the Penrose value ``r0^(n-1) / 2`` as ``eps -> 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from ._fd import even_fill
from .collar import CollarError, CollarMetric, CollarReport, _eigenpairs, build_mean_convex_collar
from .geomcore import RadialGrid, WarpedMetric, polar_sincos, slice_curvature, sphere_volume
from .paths import MetricPath, moser_twist
from .schwarzschild import (GluingError, PlanarProfile, SchwarzschildOrbit, adm_mass, glue_profiles,
                            penrose_bound)
from .spectral import lambda1

ROUND_FROM = 0.5
BAND_FACTOR = 2.5


class BartnikError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Extension:
    epsilon: float
    collar: CollarMetric
    report: CollarReport
    bridge: PlanarProfile
    mass: float
    checks: dict = field(default_factory=dict)

    def to_row(self, i: int) -> dict:
        return {"i": i, "epsilon": self.epsilon, "mass": self.mass,
                "min_R": self.checks["min_R"], "min_psc_margin": self.checks["min_psc_margin"]}


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s ** 3 * (10 - 15 * s + 6 * s * s)


def round_radius(volume: float, n: int) -> float:
    return (volume / sphere_volume(n)) ** (1.0 / n)


def round_conformal_factor(g: WarpedMetric) -> np.ndarray:
    """``u`` with ``e^{2u} g`` round (unit radius), on the grid of ``g``.

    Solves ``dy / sin y = a dx / phi`` for the polar angle ``y`` of the round
    metric; the dilation freedom is fixed symmetrically between the poles.
    """
    x, a, phi = g.x, g.a, g.profile
    sx = polar_sincos(g.grid)[0]
    scale = np.pi / (x[-1] - x[0])
    integrand = np.zeros_like(x)
    integrand[1:-1] = a[1:-1] / phi[1:-1] - scale / sx[1:-1]
    D = cumulative_simpson(integrand, x=x, initial=0)
    D -= 0.5 * (D[0] + D[-1])
    xi = scale * (x - x[0])
    y = np.empty_like(x)
    y[1:-1] = 2 * np.arctan(np.tan(xi[1:-1] / 2) * np.exp(D[1:-1]))
    y[0], y[-1] = 0.0, np.pi
    u = np.zeros_like(x)
    u[1:-1] = np.log(np.sin(np.minimum(y[1:-1], np.pi - y[1:-1])) / phi[1:-1])
    return even_fill(u)


def horizon_path(g: WarpedMetric, t_points: int = 65, round_from: float = ROUND_FROM) -> MetricPath:
    """Volume-preserving path from ``g`` to the round metric of equal volume.

    For surfaces the path is conformal, ``e^{2 s(t) u} g`` with ``s`` a C^2
    smoothstep reaching 1 at ``round_from``; the Moser twist then fixes the
    slice volume form.  Conformal paths keep the sign of ``lambda_1(k = 1/2)``
    on surfaces because the Rayleigh energy is affine in the conformal factor.
    """
    tg = RadialGrid(0.0, 1.0, t_points)
    s = _smoothstep(tg.samples / round_from)
    u = round_conformal_factor(g)
    if np.ptp(u) <= 1e-12:
        arrays = (np.tile(g.a, (t_points, 1)), np.tile(g.profile, (t_points, 1)))
        return MetricPath.from_arrays(g.n, g.grid, tg, *arrays)
    if g.n != 2:
        raise BartnikError("non-round horizons are supported for surfaces only (n = 2)")
    e = np.exp(s[:, None] * u[None, :])
    phi = e * g.profile[None, :]
    phi[:, 0] = phi[:, -1] = 0.0
    raw = MetricPath.from_arrays(g.n, g.grid, tg, e * g.a[None, :], phi)
    return moser_twist(raw).path


def mass_schedule(epsilon: float, r0: float, n: int) -> float:
    return 0.5 * r0 ** (n - 1) * ((1 + epsilon) ** ((n - 1) / 2) + epsilon / 4)


def collar_tail(c: CollarMetric, R: np.ndarray, r0: float, round_from: float = ROUND_FROM) -> PlanarProfile:
    """The round part of the collar as a phase-plane curve.

    ``x`` is the radius of the scaled round slice and ``y = dx/ds`` its
    normal derivative for the unit-speed normal ``ds = A u dt``; ``C'`` is
    read from the collar's own scalar curvature, ``R = n C' / x^n``.
    """
    n = c.n
    t = c.t_grid.samples
    rows = np.flatnonzero(c.tau >= round_from)
    rho_poly = np.polynomial.Polynomial(c.schedule.get("rho_poly", [0.0, 0.0, 1.0]))
    r1 = rho_poly.deriv()(t[rows])
    scale = 1 + c.epsilon * c.rho[rows]
    x = r0 * np.sqrt(scale)
    u = c.amplitude * c.lapse[rows].mean(axis=1)
    y = r0 * c.epsilon * r1 / (2 * np.sqrt(scale) * u)
    keep = (y > 0) | (rows == 0)
    # R of the tube f^2 g_{S^n} + ds^2 is n C'(x) / x^n with n the slice dimension
    dC = R[rows].mean(axis=1) * x ** n / n
    return PlanarProfile(x[keep], y[keep], n, dC[keep])


def build_extension(g: WarpedMetric, epsilon: float, path: MetricPath | None = None, eigen=None,
                    k: float = 0.5, bridge_points: int = 512) -> Extension:
    n = g.n
    V = g.volume()
    r0 = round_radius(V, n)
    path = horizon_path(g) if path is None else path
    try:
        c, rep = build_mean_convex_collar(path, k=k, epsilon=epsilon, eigen=eigen)
    except CollarError as exc:
        raise BartnikError(f"collar construction failed: {exc}") from exc
    geo = slice_curvature(c.metric)
    tail = collar_tail(c, geo.R, r0)
    m = mass_schedule(epsilon, r0, n)
    orb = SchwarzschildOrbit(2 * m, n)
    x0 = BAND_FACTOR * orb.horizon_radius
    band = orb.band(x0, 2 * x0, bridge_points)
    try:
        bridge = glue_profiles(tail, band, points=bridge_points)
    except GluingError as exc:
        raise BartnikError(f"Schwarzschild gluing failed: {exc}") from exc
    mass = adm_mass(bridge)
    inside = (bridge.x > tail.x[-1]) & (bridge.x < band.x[0])
    H_rows = geo.H[1:]
    checks = {
        "min_R": float(min(rep.min_R, np.min(bridge.scalar_curvature[bridge.x < band.x[0]]))),
        "min_psc_margin": float(np.min(bridge.psc_margin[inside])),
        "horizon_H": float(np.max(np.abs(geo.H[0]))),
        "min_slice_H": float(np.min(H_rows)),
        "boundary_is_input": bool(np.array_equal(c.metric.phi[0], g.profile)
                                  and np.array_equal(c.metric.a[0], g.a)),
        "penrose_bound": penrose_bound(V, n),
        "mass_minus_penrose": float(mass - penrose_bound(V, n)),
    }
    return Extension(float(epsilon), c, rep, bridge, mass, checks)


def minimizing_sequence(horizon: WarpedMetric, epsilons, k: float = 0.5, t_points: int = 65) -> list:
    """One :class:`Extension` per ``epsilon`` (which must decrease strictly)."""
    eps = [float(e) for e in epsilons]
    if not eps or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise BartnikError("epsilons must be positive and strictly decreasing")
    if horizon.kind != "closed_sphere" or not horizon.pole_closure:
        raise BartnikError("the horizon must be a closed sphere with pole closure")
    lam = lambda1(horizon, k, scheme="fd4").lambda1
    if lam < -1e-9:
        raise BartnikError(f"not an admissible horizon: lambda1 = {lam:.6e} < 0")
    path = horizon_path(horizon, t_points)
    eigen = _eigenpairs(path, k)
    return [build_extension(horizon, e, path, eigen, k) for e in eps]
