"""Quick invariant suite behind ``horizonforge check``.

Each entry is cheap (a few seconds at most) and deterministic, so two runs
on the same platform produce identical reports.
"""

from __future__ import annotations

import numpy as np

from .geomcore import RadialGrid, WarpedMetric, polar_sincos


def _entry(name, ok, value=None):
    out = {"name": name, "pass": bool(ok)}
    if value is not None:
        out["value"] = float(value)
    return out


def round_sphere(n: int, points: int, radius: float = 1.0) -> WarpedMetric:
    g = RadialGrid(0.0, np.pi * radius, points)
    phi = radius * polar_sincos(g)[0]
    return WarpedMetric("closed_sphere", n, g, phi, True)


def run_suite(points: int = 256) -> list:
    from .bartnik import minimizing_sequence
    from .flow import evolve, monotonicity_report, volume_identity_residual
    from .geomcore import warped_closed_scalar
    from .schwarzschild import SchwarzschildOrbit, adm_mass, bend_and_glue, orbit_rk4, penrose_bound
    from .smoothing import build_cutoff, radial_conformal_barrier
    from .spectral import lambda1

    out = []
    s2, s3 = round_sphere(2, points), round_sphere(3, points)
    R2 = warped_closed_scalar(s2)
    out.append(_entry("geomcore.round_s2_scalar", np.max(np.abs(R2 - 2)) <= 1e-6, np.max(np.abs(R2 - 2))))
    for n, m in ((2, s2), (3, s3)):
        lam = lambda1(m, 0.5, scheme="fd4").lambda1
        err = abs(lam - 0.5 * n * (n - 1)) / (0.5 * n * (n - 1))
        out.append(_entry(f"spectral.round_s{n}_lambda1", err <= 1e-6, err))
    o = SchwarzschildOrbit(1.0, 3)
    xs, ys = orbit_rk4(1.0, 0.0, 3, 4.0, step=1e-3)
    gap = float(np.max(np.abs(ys - o.y(xs))))
    out.append(_entry("schwarzschild.orbit_matches_rk4", gap <= 1e-6, gap))
    o2 = SchwarzschildOrbit(1.0, 2)
    area = 4 * np.pi * o2.horizon_radius ** 2
    gap = abs(adm_mass(o2.band(o2.horizon_radius, 4.0, 64)) - penrose_bound(area, 2))
    out.append(_entry("schwarzschild.adm_equals_penrose", gap <= 1e-12, gap))
    g = bend_and_glue(0.5, 0.6, 1.5, 2.0, n=2, points=128)
    inside = (g.x > 1.5) & (g.x < 2.0)
    out.append(_entry("schwarzschild.bridge_strictly_psc", np.min(g.psc_margin[inside]) > 0,
                      np.min(g.psc_margin[inside])))
    for kind, params in (("log_cutoff", {"delta": 0.01, "epsilon": 0.5}), ("chi", {"eps1": 0.1})):
        inv = build_cutoff(kind, params).check_invariants()
        out.append(_entry(f"smoothing.{kind}_invariants", all(inv.values())))
    rg = RadialGrid(1.0, 2.0, 1025)
    b = radial_conformal_barrier(WarpedMetric("tube", 2, rg, rg.samples), "harmonic")
    val = float(np.interp(1.5, rg.samples, b.values))
    out.append(_entry("smoothing.harmonic_barrier", abs(val - 2 / 3) <= 1e-9, val))
    exts = minimizing_sequence(s2, [2.0 ** -i for i in range(1, 5)], t_points=9)
    masses = np.array([e.mass for e in exts])
    out.append(_entry("bartnik.masses_decreasing", np.all(np.diff(masses) < 0), masses[-1]))
    out.append(_entry("bartnik.min_R_nonnegative", min(e.checks["min_R"] for e in exts) >= -1e-9))
    fg = round_sphere(3, 33)
    traj = evolve(fg, 1.0, 0.05, k=0.5, monitor_every=1)
    r2 = 1 - 4 * traj.times[-1]
    err = float(np.max(np.abs(traj.states[-1].a ** 2 - r2)))
    out.append(_entry("flow.round_s3_radius", err <= 1e-5, err))
    out.append(_entry("flow.volume_identity", np.max(volume_identity_residual(traj)) <= 1e-5,
                      np.max(volume_identity_residual(traj))))
    out.append(_entry("flow.lambda1_increasing", monotonicity_report(traj, 0.5).strictly_increasing))
    return out
