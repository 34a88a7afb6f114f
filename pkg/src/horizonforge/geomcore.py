"""Curvature kernels for rotationally symmetric metrics.

Two metric shapes are handled:

* closed spheres ``a(x)^2 dx^2 + phi(x)^2 g_{S^{n-1}}`` whose profile ``phi``
  vanishes at both grid ends (poles);  ``a`` defaults to 1, in which case ``x``
  is arclength;
* tubes ``f(t)^2 g_{S^n} + dt^2``.

Sliced collar metrics ``g_t + u^2 dt^2`` with rotationally symmetric slices
are represented by :class:`SlicedMetric`.  Convention throughout: the unit
normal is ``+d/dt`` divided by the lapse and ``H = (2u)^{-1} tr dg/dt``.

Derivatives use fourth-order stencils (see ``_fd``); quotients by ``phi`` at
a pole are replaced by their even extrapolation from neighbouring samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._fd import derivative, even_fill
from .config import tolerances


@dataclass(frozen=True)
class RadialGrid:
    a: float
    b: float
    points: int

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or not self.a < self.b:
            raise ValueError(f"grid needs a < b, got a={self.a}, b={self.b}")
        if int(self.points) != self.points or self.points < tolerances().min_points:
            raise ValueError(f"grid needs at least {tolerances().min_points} points, got {self.points}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.points - 1)

    @property
    def samples(self) -> np.ndarray:
        return self.a + np.arange(self.points) * self.h


@dataclass(frozen=True, eq=False)
class WarpedMetric:
    kind: str
    n: int
    grid: RadialGrid
    profile: np.ndarray
    pole_closure: bool = False
    radial: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("closed_sphere", "tube"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        prof = np.asarray(self.profile, dtype=float)
        object.__setattr__(self, "profile", prof)
        if prof.shape != (self.grid.points,):
            raise ValueError("profile length does not match grid")
        if not np.all(np.isfinite(prof)):
            raise ValueError("profile contains non-finite values")
        if self.radial is not None:
            rad = np.asarray(self.radial, dtype=float)
            if rad.shape != prof.shape or np.any(rad <= 0):
                raise ValueError("radial coefficient must be positive on the grid")
            object.__setattr__(self, "radial", rad)
        if self.kind == "tube":
            if self.pole_closure:
                raise ValueError("tubes have no poles")
            if np.any(prof <= 0):
                raise ValueError("tube profile must be strictly positive")
        else:
            if np.any(prof[1:-1] <= 0):
                raise ValueError("profile must be positive in the interior")
            if self.pole_closure:
                scale = np.max(np.abs(prof))
                if abs(prof[0]) > 1e-12 * scale or abs(prof[-1]) > 1e-12 * scale:
                    raise ValueError("pole closure requires the profile to vanish at both ends")

    @property
    def x(self) -> np.ndarray:
        return self.grid.samples

    @property
    def a(self) -> np.ndarray:
        return np.ones_like(self.profile) if self.radial is None else self.radial

    @property
    def parity(self):
        return -1 if self.pole_closure else None

    def volume_density(self) -> np.ndarray:
        """Density of dmu against dx, without the factor vol(S^{n-1})."""
        if self.kind == "tube":
            return self.profile ** self.n
        return self.a * self.profile ** (self.n - 1)

    def volume(self) -> float:
        from scipy.integrate import simpson

        sig = sphere_volume(self.n if self.kind == "tube" else self.n - 1)
        return float(sig * simpson(self.volume_density(), x=self.x))

    def scaled(self, c: float) -> "WarpedMetric":
        """The metric ``c^2 g``."""
        if self.radial is None:
            g = RadialGrid(self.grid.a * c, self.grid.b * c, self.grid.points)
            return WarpedMetric(self.kind, self.n, g, c * self.profile, self.pole_closure)
        return WarpedMetric(self.kind, self.n, self.grid, c * self.profile, self.pole_closure, c * self.radial)


def polar_sincos(grid: RadialGrid):
    """``sin`` and ``cos`` of the polar angle ``pi (x - a) / (b - a)``.

    Both are evaluated from the distance to the nearer pole, so ``sin`` is
    exactly odd about each end sample and vanishes there.  Evaluating
    ``sin`` at samples near ``pi`` would instead carry an offset of order
    1e-16 that the ``1/phi^2`` terms of the curvature amplify.
    """
    i = np.arange(grid.points)
    j = np.minimum(i, grid.points - 1 - i)
    ang = np.pi * j / (grid.points - 1)
    return np.sin(ang), np.where(i == j, 1.0, -1.0) * np.cos(ang)


def sphere_volume(n: int) -> float:
    """Volume of the unit round n-sphere."""
    from scipy.special import gamma

    return float(2 * np.pi ** ((n + 1) / 2) / gamma((n + 1) / 2))


@dataclass(frozen=True, eq=False)
class SliceGeometry:
    sff_coeff: np.ndarray
    H: np.ndarray
    sff_norm_sq: np.ndarray
    R: np.ndarray
    psc: np.ndarray | None = None


def _require_points(points: int):
    if points < tolerances().min_points:
        raise ValueError("grid too coarse")


def tube_geometry(m: WarpedMetric) -> SliceGeometry:
    if m.kind != "tube":
        raise ValueError("tube_geometry needs a tube metric")
    _require_points(m.grid.points)
    f, h, n = m.profile, m.grid.h, m.n
    f1 = derivative(f, h, 1)
    f2 = derivative(f, h, 2)
    k = f1 / f
    R = (n * (n - 1) * (1 - f1 ** 2) - 2 * n * f2 * f) / f ** 2
    return SliceGeometry(sff_coeff=k, H=n * k, sff_norm_sq=n * k ** 2, R=R, psc=tube_psc(f, f1, f2, n))


def tube_psc(f, f1, f2, n) -> np.ndarray:
    """Phase-plane PSC predicate: (1 - y^2)/(x y) > (2/(n-1)) y' with x = f, y = f'."""
    f, f1, f2 = map(np.asarray, (f, f1, f2))
    with np.errstate(divide="ignore", invalid="ignore"):
        yprime = f2 / f1
        lhs = (1 - f1 ** 2) / (f * f1)
        ok = lhs > (2.0 / (n - 1)) * yprime
    # where f' <= 0 the phase-plane chart is unavailable; fall back to the sign of R
    R = (n * (n - 1) * (1 - f1 ** 2) - 2 * n * f2 * f) / f ** 2
    return np.where(f1 > 0, ok, R > 0)


def _closed_derivs(phi, a, h, parity):
    """Arclength derivatives (phi_s, phi_ss) for a general radial coefficient."""
    phi_x = derivative(phi, h, 1, parity=parity)
    ps = phi_x / a
    if parity is None:
        pss = derivative(ps, h, 1) / a
    else:
        pss = derivative(ps, h, 1, parity=-parity) / a
    return ps, pss


def _closed_scalar(phi, a, h, n, parity):
    ps, pss = _closed_derivs(phi, a, h, parity)
    if parity is not None and n > 2:
        # the stencil error of phi_s is smooth and even near a pole but does not
        # vanish there; (1 - phi_s^2)/phi^2 would amplify it by 1/x^2, so remove
        # its pole value, where smooth closure pins phi_s to +-1
        c = np.cos(np.linspace(0.0, np.pi, ps.size))
        ps = ps + (1 - ps[0]) * ((1 + c) / 2) ** 2 + (-1 - ps[-1]) * ((1 - c) / 2) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        R = (n - 1) * ((n - 2) * (1 - ps ** 2) / phi ** 2 - 2 * pss / phi)
    if parity is not None:
        R = even_fill(R)
    return R


def warped_closed_scalar(m: WarpedMetric) -> np.ndarray:
    if m.kind != "closed_sphere" or not m.pole_closure:
        raise ValueError("warped_closed_scalar needs a closed sphere with pole closure")
    tol = tolerances().closure
    ps, _ = _closed_derivs(m.profile, m.a, m.grid.h, None)
    if abs(ps[0] - 1) > tol or abs(ps[-1] + 1) > tol:
        raise ValueError(
            f"closure invariant violated: phi'(poles) = ({ps[0]:.3e}, {ps[-1]:.3e}), expected (1, -1)"
        )
    return _closed_scalar(m.profile, m.a, m.grid.h, m.n, -1)


def laplacian(m: WarpedMetric, u: np.ndarray) -> np.ndarray:
    """Fourth-order Laplace-Beltrami of a radial function on a closed sphere."""
    return _laplacian(m.profile, m.a, m.grid.h, m.n, np.asarray(u, float), m.parity)


def _laplacian(phi, a, h, n, u, parity):
    ux = derivative(u, h, 1, parity=None if parity is None else -parity)
    uxx = derivative(u, h, 2, parity=None if parity is None else -parity)
    ax = derivative(a, h, 1, parity=None if parity is None else -parity)
    phx = derivative(phi, h, 1, parity=parity)
    with np.errstate(divide="ignore", invalid="ignore"):
        lap = uxx / a ** 2 + ux * ((n - 1) * phx / (phi * a ** 2) - ax / a ** 3)
    if parity is not None:
        lap[0] = n * uxx[0] / a[0] ** 2
        lap[-1] = n * uxx[-1] / a[-1] ** 2
    return lap


def conformal_transform(R_g, u, laplacian_u, n: int, normal_derivative_u, H):
    """Scalar and boundary mean curvature of ``u^{4/(n-2)} g``."""
    if n < 3:
        raise ValueError("conformal_transform needs n >= 3")
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("conformal factor must be positive")
    p = -(n + 2) / (n - 2)
    up = u ** p
    Rbar = up * (-(4 * (n - 1) / (n - 2)) * np.asarray(laplacian_u) + np.asarray(R_g) * u)
    Hbar = up * ((2 * (n - 1) / (n - 2)) * np.asarray(normal_derivative_u) + np.asarray(H) * u)
    return Rbar, Hbar


@dataclass(frozen=True, eq=False)
class SlicedMetric:
    """``a(x,t)^2 dx^2 + phi(x,t)^2 g_{S^{n-1}} + lapse(x,t)^2 dt^2``.

    Arrays have shape ``(len(t), len(x))``.  Slices are closed spheres unless
    ``closed`` is false, in which case ``x`` runs over an interval without poles.
    """

    n: int
    x_grid: RadialGrid
    t_grid: RadialGrid
    a: np.ndarray
    phi: np.ndarray
    lapse: np.ndarray
    closed: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = (self.t_grid.points, self.x_grid.points)
        for name in ("a", "phi", "lapse"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            object.__setattr__(self, name, arr)
        if np.any(self.lapse <= 0):
            raise ValueError("lapse must be positive")
        if self.t_grid.points < 6:
            raise ValueError("t-grid too coarse for d/dt of H")

    def slice_metric(self, j: int) -> WarpedMetric:
        return WarpedMetric("closed_sphere", self.n, self.x_grid, self.phi[j], self.closed, self.a[j])


@dataclass(frozen=True, eq=False)
class CollarSlices:
    """Per-sample output of :func:`slice_curvature`; arrays are (t, x)."""

    sff_radial: np.ndarray
    sff_tangential: np.ndarray
    H: np.ndarray
    sff_norm_sq: np.ndarray
    R_slice: np.ndarray
    R: np.ndarray

    def as_slice_geometry(self, j: int) -> SliceGeometry:
        return SliceGeometry(self.sff_tangential[j], self.H[j], self.sff_norm_sq[j], self.R[j])


def _as_sliced(c) -> SlicedMetric:
    return c if isinstance(c, SlicedMetric) else c.metric


def slice_curvature(c) -> CollarSlices:
    """Slicing formulas for ``g_t + u^2 dt^2`` (accepts a SlicedMetric or a collar)."""
    s = _as_sliced(c)
    n, hx, ht = s.n, s.x_grid.h, s.t_grid.h
    par = -1 if s.closed else None
    a, phi, u = s.a, s.phi, s.lapse
    # logarithmic t-derivatives: H then differentiates log(volume density) directly
    k_rad = derivative(np.log(a), ht, 1, axis=0) / u
    k_tan = np.empty_like(phi)
    inner = slice(1, -1) if s.closed else slice(None)
    k_tan[:, inner] = derivative(np.log(phi[:, inner]), ht, 1, axis=0) / u[:, inner]
    if s.closed:
        # smooth closing forces the two principal curvatures to agree at a pole
        k_tan[:, 0] = k_rad[:, 0]
        k_tan[:, -1] = k_rad[:, -1]
    H = k_rad + (n - 1) * k_tan
    norm_sq = k_rad ** 2 + (n - 1) * k_tan ** 2
    Rg = np.vstack([_closed_scalar(phi[j], a[j], hx, n, par) for j in range(phi.shape[0])])
    lap = np.vstack([_laplacian(phi[j], a[j], hx, n, u[j], par) for j in range(phi.shape[0])])
    Hdot = derivative(H, ht, 1, axis=0)
    R = 2.0 / u * (-lap + 0.5 * Rg * u) - 2.0 / u * Hdot - H ** 2 - norm_sq
    return CollarSlices(k_rad, k_tan, H, norm_sq, Rg, R)


def tube_as_sliced(m: WarpedMetric, x_points: int = 1024) -> SlicedMetric:
    """Recast ``f(t)^2 g_{S^n} + dt^2`` as a collar over the round S^n."""
    if m.kind != "tube":
        raise ValueError("need a tube metric")
    xg = RadialGrid(0.0, np.pi, x_points)
    f = m.profile[:, None]
    a = np.broadcast_to(f, (m.grid.points, x_points)).copy()
    phi = f * polar_sincos(xg)[0][None, :]
    return SlicedMetric(m.n, xg, m.grid, a, phi, np.ones_like(a))


def fermi_graph_mean_curvature(c, f) -> np.ndarray:
    """Mean curvature of the graph ``t = f(x)`` in a collar with unit lapse.

    The unit normal points toward increasing ``t``; the value is the divergence
    of the normal field of the level sets of ``t - f(x)``.
    """
    from scipy.interpolate import CubicSpline

    s = _as_sliced(c)
    if not np.allclose(s.lapse, 1.0, rtol=0, atol=1e-14):
        raise ValueError("fermi_graph_mean_curvature needs unit lapse")
    f = np.asarray(f, dtype=float)
    tg = s.t_grid.samples
    if f.min() < tg[0] or f.max() > tg[-1]:
        raise ValueError("graph leaves the t-interval of the collar")
    n, hx, ht = s.n, s.x_grid.h, s.t_grid.h
    par = -1 if s.closed else None
    adot = derivative(s.a, ht, 1, axis=0)
    phidot = derivative(s.phi, ht, 1, axis=0)
    cols = np.arange(s.x_grid.points)

    def on_graph(arr):
        return np.array([CubicSpline(tg, arr[:, i])(f[i]) for i in cols])

    a, phi, ad, pd = (on_graph(q) for q in (s.a, s.phi, adot, phidot))
    if s.closed:
        phi[0] = phi[-1] = 0.0
    fx = derivative(f, hx, 1, parity=None if par is None else -par)
    W2 = a ** 2 + fx ** 2
    G = -phi ** (n - 1) * fx / np.sqrt(W2)
    Gt = -fx * ((n - 1) * phi ** (n - 2) * pd / np.sqrt(W2) - phi ** (n - 1) * a * ad / W2 ** 1.5)
    dG = derivative(G, hx, 1, parity=None if par is None else (-1) ** n)
    W = np.sqrt(1 + fx ** 2 / a ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        Ht = ad / a + (n - 1) * pd / phi
        div = (dG - fx * Gt) / (a * phi ** (n - 1))
    out = div + Ht / W + fx ** 2 * ad / (a ** 3 * W ** 3)
    if s.closed:
        out = even_fill(out)
    return out
