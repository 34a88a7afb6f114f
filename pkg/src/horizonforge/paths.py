"""Explicit metric paths between rotationally symmetric metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from ._fd import derivative
from .geomcore import RadialGrid, WarpedMetric, tube_geometry
from .spectral import energy, lambda1, scalar_curvature


@dataclass(frozen=True, eq=False)
class MetricPath:
    t_grid: RadialGrid
    metrics: tuple
    lambda1_cache: dict = field(default_factory=dict)

    def __post_init__(self):
        ms = tuple(self.metrics)
        object.__setattr__(self, "metrics", ms)
        if len(ms) != self.t_grid.points:
            raise ValueError("one metric per t sample is required")
        m0 = ms[0]
        for m in ms[1:]:
            if m.kind != m0.kind or m.n != m0.n or m.grid != m0.grid:
                raise ValueError("path metrics must share kind, dimension and spatial grid")

    @property
    def n(self) -> int:
        return self.metrics[0].n

    @property
    def x_grid(self) -> RadialGrid:
        return self.metrics[0].grid

    def arrays(self):
        """``(a, phi)`` stacked as ``(t, x)`` arrays."""
        return (np.vstack([m.a for m in self.metrics]), np.vstack([m.profile for m in self.metrics]))

    def lambda1_series(self, k: float, scheme: str = "fd4") -> np.ndarray:
        key = (float(k), scheme)
        if key not in self.lambda1_cache:
            self.lambda1_cache[key] = np.array([lambda1(m, k, scheme).lambda1 for m in self.metrics])
        return self.lambda1_cache[key]

    @classmethod
    def from_arrays(cls, n, x_grid, t_grid, a, phi):
        ms = [WarpedMetric("closed_sphere", n, x_grid, phi[j], True, a[j]) for j in range(t_grid.points)]
        return cls(t_grid, tuple(ms))


def _closed(n, grid, a, phi):
    return WarpedMetric("closed_sphere", n, grid, phi, True, a)


def conformal_metric(g0: WarpedMetric, w) -> WarpedMetric:
    """``e^{2w} g0`` for a radial function ``w``."""
    ew = np.exp(np.asarray(w, float))
    return _closed(g0.n, g0.grid, ew * g0.a, ew * g0.profile)


def conformal_path_2d(g0: WarpedMetric, u, t: float, f=None, k: float = 0.5, probes=(0.0, 0.25, 0.5, 0.75, 1.0)):
    """The metric ``e^{2(tu + (1-t))} g0`` and, if a test function is given,
    the Rayleigh energy at the probe times with its deviation from the best
    affine fit (the energy is affine in t for surfaces)."""
    if g0.kind != "closed_sphere" or g0.n != 2:
        raise ValueError("conformal_path_2d needs a closed surface")
    u = np.asarray(u, float)
    if u.shape != g0.profile.shape:
        raise ValueError("u must be sampled on the metric grid")
    g_t = conformal_metric(g0, t * u + (1 - t))
    if f is None:
        return g_t, None
    ts = np.asarray(probes, float)
    E = np.array([energy(conformal_metric(g0, s * u + (1 - s)), k, f) for s in ts])
    coef = np.polyfit(ts, E, 1)
    dev = float(np.max(np.abs(E - np.polyval(coef, ts))))
    return g_t, {"t": ts.tolist(), "energy": E.tolist(), "affine_deviation": dev,
                 "midpoint_defect": float(np.interp(0.5, ts, E) - 0.5 * (E[0] + E[-1]))}


def yamabe_contraction_path(m: WarpedMetric, t: float, u=None) -> WarpedMetric:
    """``[(1-t) + t u]^4 g`` with ``u`` the principal eigenfunction at ``k = 1/8``."""
    if m.n != 3 or m.kind != "closed_sphere":
        raise ValueError("yamabe_contraction_path needs a closed 3-sphere metric")
    if u is None:
        u = lambda1(m, 1 / 8, scheme="fd4").eigenfunction
    v2 = ((1 - t) + t * np.asarray(u, float)) ** 2
    return _closed(3, m.grid, v2 * m.a, v2 * m.profile)


@dataclass(frozen=True, eq=False)
class TwistResult:
    rho: np.ndarray
    reparametrization: np.ndarray
    slice_volume_form: np.ndarray
    deviation: float
    path: MetricPath


def _density(n, a, phi):
    return a * phi ** (n - 1)


def moser_twist(path: MetricPath) -> TwistResult:
    """Rescale each slice to the initial volume and flow the radial coordinate
    so that the volume form no longer depends on t.

    With ``M_t`` the cumulative (rescaled) volume, the radial field is
    ``v = -dM_t/dt / mu_t``; the flow of ``v`` pulls ``mu_t`` back to ``mu_0``.
    """
    n = path.n
    xg, tg = path.x_grid, path.t_grid
    x, ts = xg.samples, tg.samples
    a, phi = path.arrays()
    dens = _density(n, a, phi)
    M_raw = np.vstack([_cumulative(x, row, (-1) ** (n - 1)) for row in dens])
    V = M_raw[:, -1]
    rho = (V[0] / V) ** (2.0 / n)
    scale = rho ** (n / 2.0)
    M = M_raw * scale[:, None]
    mu = dens * scale[:, None]
    # near the far pole differentiate the tail volume instead, avoiding V - small cancellation
    tail = np.vstack([_cumulative(x, row[::-1], (-1) ** (n - 1))[::-1] for row in dens]) * scale[:, None]
    Mdot = derivative(M, tg.h, 1, axis=0)
    far = x > 0.5 * (x[0] + x[-1])
    Mdot[:, far] = -derivative(tail[:, far], tg.h, 1, axis=0)
    v = np.zeros_like(M)
    v[:, 1:-1] = -Mdot[:, 1:-1] / mu[:, 1:-1]
    # odd reflection about both poles keeps the spline of v odd there
    xe, _ = _extend(x, x, 1)
    ve = np.vstack([_extend(x, row, -1)[1] for row in v])
    field_ = RectBivariateSpline(ts, xe, ve, kx=3, ky=3)

    def vel(t, psi):
        return field_.ev(np.full_like(psi, t), psi)

    psi = np.empty_like(M)
    psi[0] = x
    cur = x.copy()
    dt = tg.h
    for j in range(tg.points - 1):
        t0 = ts[j]
        k1 = vel(t0, cur)
        k2 = vel(t0 + dt / 2, cur + dt / 2 * k1)
        k3 = vel(t0 + dt / 2, cur + dt / 2 * k2)
        k4 = vel(t0 + dt, cur + dt * k3)
        cur = cur + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        cur[0], cur[-1] = x[0], x[-1]
        psi[j + 1] = cur
    if np.any(np.diff(psi, axis=1) <= 0):
        raise ArithmeticError("twist flow lost monotonicity")
    # twisted slices sqrt(rho) psi_t^* g_t; the flow's own radial factor measures
    # the residual volume drift, after which a is taken from the exact volume form
    flow_a = np.empty_like(a)
    new_phi = np.empty_like(phi)
    for j in range(tg.points):
        dpsi = 1.0 + derivative(psi[j] - x, xg.h, 1, parity=-1)
        s = np.sqrt(rho[j])
        flow_a[j] = s * _interp_x(x, a[j], psi[j], 1) * dpsi
        new_phi[j] = s * _interp_x(x, phi[j], psi[j], -1)
        new_phi[j, 0] = new_phi[j, -1] = 0.0
    flow_a[0], new_phi[0] = a[0], phi[0]
    vol_form = _density(n, flow_a, new_phi)
    dev = float(np.max(np.abs(vol_form - dens[0][None, :])))
    # the flow leaves an O(dt^3) slope error at the poles, which the scalar
    # curvature amplifies by 1/x^2; restore phi'(pole) = a(pole) with a factor
    # that is smooth, even about both poles and identically 1 in between
    c = np.cos(np.pi * (x - x[0]) / (x[-1] - x[0]))
    wl, wr = ((1 + c) / 2) ** 2, ((1 - c) / 2) ** 2
    for j in range(1, tg.points):
        slope = derivative(new_phi[j], xg.h, 1, parity=-1)
        kl, kr = a[0, 0] / slope[0], -a[0, -1] / slope[-1]
        new_phi[j] *= 1 + (kl - 1) * wl + (kr - 1) * wr
    new_a = flow_a.copy()
    new_a[1:, 1:-1] = dens[0, 1:-1] / new_phi[1:, 1:-1] ** (n - 1)
    # density ~ a(pole)^n x^(n-1) near a pole, so a fixed density pins the pole value of a
    new_a[1:, 0], new_a[1:, -1] = a[0, 0], a[0, -1]
    twisted = MetricPath.from_arrays(n, xg, tg, new_a, new_phi)
    return TwistResult(rho=rho, reparametrization=psi, slice_volume_form=vol_form, deviation=dev, path=twisted)


def _extend(x, values, parity, g=8):
    h = x[1] - x[0]
    xe = np.concatenate([x[0] - h * np.arange(g, 0, -1), x, x[-1] + h * np.arange(1, g + 1)])
    left = parity * values[g:0:-1]
    right = parity * values[-2:-g - 2:-1]
    return xe, np.concatenate([left, values, right])


def _cumulative(x, values, parity):
    """Running integral from the first pole, via a parity-extended cubic spline."""
    from scipy.interpolate import CubicSpline

    xe, ve = _extend(x, values, parity)
    prim = CubicSpline(xe, ve).antiderivative()
    return prim(x) - prim(x[0])


def _interp_x(x, values, at, parity):
    """Cubic spline through ``values`` extended past both ends by ``parity``
    reflection, so accuracy near a pole matches the interior."""
    from scipy.interpolate import CubicSpline

    return CubicSpline(*_extend(x, values, parity))(at)


def isotopy_stage(f0, mu: float, n: int):
    """``(f_mu, h_mu)`` for the two-stage family ending at the product metric."""
    f0 = np.asarray(f0, float)
    if not 0 <= mu <= 1:
        raise ValueError("mu must lie in [0, 1]")
    if mu <= 0.5:
        w = (1 - 2 * mu) + 2 * mu * f0 ** ((1 - n) / 2)
        c = w ** (2.0 / (n - 1))
        return c * f0, c
    return np.ones_like(f0), np.sqrt((2 - 2 * mu) * f0 ** -2.0 + 2 * mu - 1)


def warped_tube_scalar(f, h, grid: RadialGrid, n: int) -> np.ndarray:
    """Scalar curvature of ``f(t)^2 g_{S^n} + h(t)^2 dt^2``."""
    f_t = derivative(f, grid.h, 1)
    fs = f_t / h
    fss = derivative(fs, grid.h, 1) / h
    return (n * (n - 1) * (1 - fs ** 2) - 2 * n * fss * f) / f ** 2


def round_isotopy(f0: WarpedMetric, theta: float, mu: float, slack: float = 1e-6):
    if f0.kind != "tube":
        raise ValueError("round_isotopy needs a tube metric")
    if not 0 <= theta <= 1:
        raise ValueError("theta must lie in [0, 1]")
    n = f0.n
    R0 = tube_geometry(f0).R
    if np.min(R0) < theta * n * (n - 1) - slack:
        raise ValueError(f"input violates R >= theta n(n-1): min R = {np.min(R0):.6g}")
    return isotopy_stage(f0.profile, mu, n)


def isotopy_concavity_expression(f0: WarpedMetric, theta: float, mu: float) -> np.ndarray:
    """Left side of the first-stage inequality whose sign gives ``R >= theta n(n-1)``."""
    n, grid, f = f0.n, f0.grid, f0.profile
    v = f ** ((1 - n) / 2)
    lap = derivative(v, grid.h, 2) + n * derivative(f, grid.h, 1) / f * derivative(v, grid.h, 1)
    w = (1 - 2 * mu) + 2 * mu * v
    R0 = tube_geometry(f0).R
    return -(4 * n / (n - 1)) * 2 * mu * lap + R0 * w - theta * n * (n - 1) * w ** ((n + 3) / (n - 1))


def blend_paths(p1: MetricPath, p2: MetricPath, overlap: float) -> MetricPath:
    """Concatenate two paths with matching junction metric, blending the
    profiles by a C^2 smoothstep over ``overlap`` on either side of t = 1/2."""
    if p1.x_grid != p2.x_grid or p1.n != p2.n:
        raise ValueError("paths must share a spatial grid")
    if not 0 < overlap < 0.5:
        raise ValueError("overlap must lie in (0, 1/2)")
    a1, f1 = p1.arrays()
    a2, f2 = p2.arrays()
    if not (np.allclose(a1[-1], a2[0]) and np.allclose(f1[-1], f2[0])):
        raise ValueError("paths do not meet at the junction")
    m = p1.t_grid.points + p2.t_grid.points - 1
    tg = RadialGrid(0.0, 1.0, m)
    s = tg.samples

    def sample(arrs, tq):
        a, f = arrs
        tq = np.clip(tq, 0, 1)
        j = np.interp(tq, np.linspace(0, 1, a.shape[0]), np.arange(a.shape[0]))
        lo = np.floor(j).astype(int).clip(0, a.shape[0] - 2)
        wgt = (j - lo)[:, None]
        return (1 - wgt) * a[lo] + wgt * a[lo + 1], (1 - wgt) * f[lo] + wgt * f[lo + 1]

    A1, F1 = sample((a1, f1), 2 * s)
    A2, F2 = sample((a2, f2), 2 * s - 1)
    z = np.clip((s - 0.5 + overlap) / (2 * overlap), 0, 1)
    wgt = (z ** 3 * (10 - 15 * z + 6 * z * z))[:, None]
    A = (1 - wgt) * A1 + wgt * A2
    F = (1 - wgt) * F1 + wgt * F2
    return MetricPath.from_arrays(p1.n, p1.x_grid, tg, A, F)


def scalar_series(path: MetricPath) -> np.ndarray:
    return np.vstack([scalar_curvature(m) for m in path.metrics])
