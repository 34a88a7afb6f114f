"""Boundary deformations of collars ``F(t) g_{S^n} + dt^2`` and radial barriers.

Conventions.  The collar boundary sits at ``t = 0`` and its outward normal is
``-d/dt``.  The second fundamental form of the slice ``{t}`` is then
``-1/2 dg_t/dt``; with ``g_t = F(t) g_{S^n}`` it is the scalar multiple
``sigma(t) = -F'(t) / (2 F(t))`` of the slice metric, and the mean curvature
is ``n sigma``.  This is the opposite sign to :mod:`geomcore`, whose mean
curvature is taken along ``+d/dt``.

Both cutoffs are mollifications of piecewise-linear profiles by the triweight
kernel, so their values and first two derivatives have closed forms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from ._fd import _weights, derivative
from .geomcore import RadialGrid, WarpedMetric


class SmoothingError(ValueError):
    """Raised when a deformation cannot meet its requested tolerance."""


# --- triweight kernel and its iterated primitives ----------------------------

_K = np.polynomial.Polynomial([1.0, 0.0, -3.0, 0.0, 3.0, 0.0, -1.0]) * (35.0 / 32.0)
_G0 = _K.integ(lbnd=-1.0)
_G1 = _G0.integ(lbnd=-1.0)
_G2 = _G1.integ(lbnd=-1.0)
_G2_AT_1 = float(_G2(1.0))


def _kernel(v, level):
    """``level`` = -1 gives the kernel, 0 its CDF, 1 and 2 further primitives."""
    v = np.asarray(v, dtype=float)
    inside = np.abs(v) < 1
    vc = np.clip(v, -1.0, 1.0)
    if level == -1:
        return np.where(inside, _K(vc), 0.0)
    if level == 0:
        return np.where(v <= -1, 0.0, np.where(v >= 1, 1.0, _G0(vc)))
    if level == 1:
        return np.where(v <= -1, 0.0, np.where(v >= 1, v, _G1(vc)))
    return np.where(v <= -1, 0.0, np.where(v >= 1, _G2_AT_1 + 0.5 * (v * v - 1.0), _G2(vc)))


def _mollified_ramps(t, kinks, jumps, w, base_slope=0.0):
    """``base_slope * t + sum_k jumps_k (t - kinks_k)_+^2 / 2`` convolved with the
    triweight kernel of half-width ``w``; returns value, first and second derivative."""
    t = np.asarray(t, dtype=float)
    v0 = base_slope * t
    v1 = np.full_like(t, base_slope)
    v2 = np.zeros_like(t)
    for tk, dk in zip(kinks, jumps):
        u = (t - tk) / w
        v0 = v0 + dk * w * w * _kernel(u, 2)
        v1 = v1 + dk * w * _kernel(u, 1)
        v2 = v2 + dk * _kernel(u, 0)
    return v0, v1, v2


# --- cutoffs -----------------------------------------------------------------

_LOG_RAMP_WIDTH = 0.25


def _log_profile(s):
    """Mollified clamp of ``s`` onto [0, 1]; returns ``S, S', S''``."""
    w = _LOG_RAMP_WIDTH
    m = 1.0 / (1.0 - 2.0 * w)
    a, b = (s - w) / w, (s - 1.0 + w) / w
    S = m * w * (_kernel(a, 1) - _kernel(b, 1))
    S1 = m * (_kernel(a, 0) - _kernel(b, 0))
    S2 = m / w * (_kernel(a, -1) - _kernel(b, -1))
    return np.clip(S, 0.0, 1.0), S1, S2


LOG_CUTOFF_C1 = 1.0 / (1.0 - 2.0 * _LOG_RAMP_WIDTH)


@dataclass(frozen=True, eq=False)
class CutoffFunction:
    kind: str
    params: dict
    grid: RadialGrid
    values: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    def __call__(self, t):
        return _evaluate_cutoff(self.kind, self.params, np.asarray(t, dtype=float))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t", "value", "d1", "d2"])
            for row in zip(self.grid.samples, self.values, self.d1, self.d2):
                out.writerow([f"{float(v):.17g}" for v in row])

    def check_invariants(self) -> dict:
        """Every stated property at every sample, as booleans."""
        t, v, d1, d2 = self.grid.samples, self.values, self.d1, self.d2
        if self.kind == "log_cutoff":
            eps, L = self.params["epsilon"], self.params["log_inv_delta"]
            inner = t <= eps * np.exp(-L)
            pos = t > 0
            return {
                "one_inside": bool(np.all(v[inner] == 1.0)),
                "zero_outside": bool(np.all(v[t >= eps] == 0.0)),
                "range": bool(np.all((v >= 0) & (v <= 1))),
                "log_derivative_bound": bool(np.all(t[pos] * np.abs(d1[pos]) * L <= LOG_CUTOFF_C1 + 1e-12)),
            }
        e1 = self.params["eps1"]
        c0 = self.params["c0"]
        win = t <= e1
        return {
            "identity_near_zero": bool(np.all(v[t <= self.params["identity_until"]] == t[t <= self.params["identity_until"]])),
            "zero_outside": bool(np.all(v[t >= np.sqrt(e1)] == 0.0)),
            "range": bool(np.all((v >= 0) & (v <= 0.5 * e1))),
            "slope_bound": bool(np.all(np.abs(d1) <= c0 + 1e-12)),
            "slope_below_one": bool(np.all(d1 <= 1.0 + 1e-12)),
            "concave_window": bool(np.all((d2[win] <= 1e-12) & (d2[win] >= -2.0 / e1 - 1e-12))),
        }


def _chi_layout(eps1: float):
    """Kinks and slope jumps of the piecewise-linear ``chi'`` before mollifying."""
    w = 0.05 * eps1
    slope = 0.9 * 2.0 / eps1
    a = 2.0 * w
    end = np.sqrt(eps1) - w

    def layout(c):
        t2 = a + (1.0 + c) / slope
        start = max(eps1 + w, t2 + 2.0 * w)
        r = 0.5 * (end - w - start)
        t3 = end - r
        return t2, t3, r

    def area(c):
        t2, t3, r = layout(c)
        return a + (1.0 - c * c) / (2.0 * slope) - c * (t3 - t2) - 0.5 * c * r

    # largest c leaving room for the return ramp
    c_max = (end - 3.0 * w - a) * slope - 1.0
    if not c_max > 0 or area(c_max) >= 0:
        raise SmoothingError("eps1 too large for the chi layout")
    c = brentq(area, 0.0, c_max, xtol=1e-15)
    t2, t3, r = layout(c)
    kinks = (a, t2, t3, end)
    jumps = (-slope, slope, c / r, -c / r)
    return kinks, jumps, w, c


def _evaluate_cutoff(kind, params, t):
    if kind == "log_cutoff":
        eps, L = params["epsilon"], params["log_inv_delta"]
        with np.errstate(divide="ignore"):
            s = np.where(t > 0, np.log(eps / np.where(t > 0, t, 1.0)) / L, np.inf)
        S, S1, S2 = _log_profile(np.where(np.isfinite(s), s, 2.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            d1 = np.where(S1 != 0, -S1 / (np.where(t > 0, t, 1.0) * L), 0.0)
            d2 = np.where((S1 != 0) | (S2 != 0), (S2 / L ** 2 + S1 / L) / np.where(t > 0, t, 1.0) ** 2, 0.0)
        return S, d1, d2
    kinks, jumps, w, _ = params["_layout"]
    v, d1, d2 = _mollified_ramps(t, kinks, jumps, w, base_slope=1.0)
    # exact values where the mollified profile is identically t or 0
    v = np.where(t <= kinks[0] - w, t, np.where(t >= kinks[-1] + w, 0.0, v))
    v = np.maximum(v, 0.0)  # the tail approaches 0 from above; drop rounding below it
    d1 = np.where(t <= kinks[0] - w, 1.0, np.where(t >= kinks[-1] + w, 0.0, d1))
    d2 = np.where((t <= kinks[0] - w) | (t >= kinks[-1] + w), 0.0, d2)
    return v, d1, d2


def build_cutoff(kind: str, params: dict, grid: RadialGrid | None = None) -> CutoffFunction:
    """``log_cutoff`` takes ``delta`` (or ``log_inv_delta``) and ``epsilon``;
    ``chi`` takes ``eps1``."""
    params = dict(params)
    if kind == "log_cutoff":
        eps = float(params["epsilon"])
        if "log_inv_delta" in params:
            L = float(params["log_inv_delta"])
            if not L > np.log(4.0):
                raise ValueError("log_inv_delta must exceed log 4")
        else:
            if params.get("delta") is None:
                raise ValueError("log_cutoff needs delta or log_inv_delta")
            delta = float(params["delta"])
            if not 0 < delta < 0.25:
                raise ValueError("delta must lie in (0, 1/4)")
            L = -np.log(delta)
        if not 0 < eps < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        params.update(epsilon=eps, log_inv_delta=L)
        grid = grid or RadialGrid(0.0, min(1.0, 2.0 * eps), 4097)
    elif kind == "chi":
        eps1 = float(params["eps1"])
        if not 0 < eps1 < 0.5:
            raise ValueError("eps1 must lie in (0, 1/2)")
        layout = _chi_layout(eps1)
        params.update(eps1=eps1, _layout=layout, c0=max(1.0, layout[3]),
                      identity_until=layout[0][0] - layout[2])
        grid = grid or RadialGrid(0.0, min(1.0, 1.5 * np.sqrt(eps1)), 4097)
    else:
        raise ValueError(f"unknown cutoff kind {kind!r}")
    v, d1, d2 = _evaluate_cutoff(kind, params, grid.samples)
    return CutoffFunction(kind, params, grid, v, d1, d2)


# --- collars of round spheres ------------------------------------------------

def collar_scalar(n, F, F1, F2):
    """Scalar curvature of ``F(t) g_{S^n} + dt^2``."""
    return n * (n - 1) / F - n * F2 / F + n * (3 - n) * F1 ** 2 / (4 * F ** 2)


@dataclass(frozen=True, eq=False)
class DeformedCollar:
    """``F(t) g_{S^n} + dt^2`` sampled with its first two t-derivatives."""

    n: int
    grid: RadialGrid
    F: np.ndarray
    dF: np.ndarray
    d2F: np.ndarray
    conclusions: dict = field(default_factory=dict)

    @property
    def R(self) -> np.ndarray:
        return collar_scalar(self.n, self.F, self.dF, self.d2F)

    @property
    def H(self) -> np.ndarray:
        """Mean curvature of the slices with respect to ``-d/dt``."""
        return -self.n * self.dF / (2 * self.F)

    @property
    def metric(self) -> WarpedMetric:
        return WarpedMetric("tube", self.n, self.grid, np.sqrt(self.F))


@dataclass(frozen=True)
class CNormalCollar:
    """``g_t = F0 (1 - 2 sigma0 t - C t^2) g_{S^n}``: exactly quadratic in t."""

    n: int
    F0: float
    sigma0: float
    C: float
    t_range: RadialGrid

    @property
    def g1(self) -> float:
        return -2.0 * self.sigma0 * self.F0

    def F(self, t):
        t = np.asarray(t, dtype=float)
        return self.F0 * (1.0 - 2.0 * self.sigma0 * t - self.C * t * t)

    def sampled(self) -> DeformedCollar:
        t = self.t_range.samples
        return DeformedCollar(self.n, self.t_range, self.F(t),
                              self.F0 * (-2.0 * self.sigma0 - 2.0 * self.C * t),
                              np.full_like(t, -2.0 * self.F0 * self.C))

    def glues_with(self, other: "CNormalCollar", tol: float = 1e-12) -> bool:
        return (self.n == other.n and abs(self.F0 - other.F0) <= tol * abs(self.F0)
                and abs(self.C - other.C) <= tol * max(1.0, abs(self.C))
                and abs(self.sigma0 + other.sigma0) <= tol * max(1.0, abs(self.sigma0)))


def _taylor_at_zero(F, h):
    """``F(0), F'(0), F''(0), F'''(0)`` from eight one-sided samples.

    The samples are strided across about an eighth of the grid; adjacent
    samples of a fine grid would amplify rounding in the third derivative.
    """
    offs = tuple(range(8))
    stride = max(1, (F.size - 1) // 64)
    head = F[: 8 * stride: stride]
    h = h * stride
    return [float(head[0])] + [float(np.dot(_weights(offs, k), head) / h ** k) for k in (1, 2, 3)]


def c_normal_threshold(n: int, F0: float, F2: float) -> float:
    """Smallest admissible C: ``-tr_{g0} g0'' / (2n)`` for slices of dimension n."""
    return -F2 / (2.0 * F0)


def _log_window_diagnostics(n, taylor, C, eps, L, points=4001):
    """C^1 deviation and ``min(R_hat - R)`` on a log-spaced sweep of the cutoff
    window, in scale-free form so arbitrarily small delta is representable."""
    F0, F1, F2, F3 = taylor
    s = np.linspace(0.0, 1.0, points)
    # t = eps exp(-s L) may underflow; work with log t and let tiny t round to 0
    t = eps * np.exp(-s * L)
    S, S1, S2 = _log_profile(s)
    q = 0.5 * F2 + C * F0
    e0 = q + F3 * t / 6.0
    e1 = 2.0 * q + 0.5 * F3 * t
    e2 = 2.0 * q + F3 * t
    G = S * t * t * e0
    G1 = t * (-S1 * e0 / L + S * e1)
    G2 = (S2 / L ** 2 + S1 / L) * e0 - 2.0 * S1 / L * e1 + S * e2
    F = F0 + t * (F1 + t * (0.5 * F2 + t * F3 / 6.0))
    dF = F1 + t * (F2 + 0.5 * t * F3)
    d2F = F2 + t * F3
    Fh, dFh, d2Fh = F - G, dF - G1, d2F - G2
    diff = (n * (n - 1) * G / (F * Fh) + n * G2 / Fh - n * d2F * G / (F * Fh)
            + n * (3 - n) / 4.0 * (dFh ** 2 / Fh ** 2 - dF ** 2 / F ** 2))
    dev = max(np.max(np.abs(G)), np.max(np.abs(G1))) / F0
    return dev, float(np.min(diff))


def make_c_normal(collar: WarpedMetric, C: float, eta: float, window: float,
                  delta: float | None = None, log_inv_delta: float | None = None):
    """Bend the collar into exact C-normal form near ``t = 0``.

    ``collar`` is a tube metric whose grid starts at the boundary.  Returns
    ``(CNormalCollar, DeformedCollar)``; the second carries the checked
    conclusions.  ``delta`` defaults to ``1e-3``; very small values are best
    passed through ``log_inv_delta``.
    """
    if collar.kind != "tube":
        raise ValueError("make_c_normal needs a tube collar")
    n, grid = collar.n, collar.grid
    if grid.a != 0.0:
        raise ValueError("collar grid must start at the boundary t = 0")
    if log_inv_delta is None:
        log_inv_delta = -np.log(1e-3 if delta is None else delta)
    cut = build_cutoff("log_cutoff", {"log_inv_delta": log_inv_delta, "epsilon": window}, grid)
    L = cut.params["log_inv_delta"]
    t = grid.samples
    F = collar.profile ** 2
    dF = derivative(F, grid.h, 1)
    d2F = derivative(F, grid.h, 2)
    taylor = _taylor_at_zero(F, grid.h)
    F0, F1, F2, _ = taylor
    C0 = c_normal_threshold(n, F0, F2)
    # F'' at the boundary is a one-sided stencil estimate, good to ~eps / h^2
    if C < C0 - 1e-8 * max(1.0, abs(C0)):
        raise SmoothingError(f"C = {C:.6g} is below the threshold C0 = {C0:.6g}")
    tau, tau1, tau2 = cut.values, cut.d1, cut.d2
    quad = F0 + t * F1 - C * t * t * F0
    E = F - quad
    E1 = dF - F1 + 2 * C * t * F0
    E2 = d2F + 2 * C * F0
    Fh = np.where(tau > 0, F - tau * E, F)
    Fh[tau == 1.0] = quad[tau == 1.0]
    dFh = dF - tau1 * E - tau * E1
    d2Fh = d2F - tau2 * E - 2 * tau1 * E1 - tau * E2
    Fh[0], dFh[0] = F[0], dF[0]
    win = t < window
    grid_dev = max(np.max(np.abs(Fh - F)), np.max(np.abs(dFh - dF)))
    log_dev, log_dR = _log_window_diagnostics(n, taylor, C, window, L)
    R = collar_scalar(n, F, dF, d2F)
    Rh = collar_scalar(n, Fh, dFh, d2Fh)
    dR = min(float(np.min((Rh - R)[win])), log_dR)
    dev = max(grid_dev / F0, log_dev)
    inner = tau == 1.0
    conclusions = {
        "unchanged_outside": bool(np.array_equal(Fh[~win], F[~win])),
        "c1_deviation": float(dev),
        "boundary_metric": bool(Fh[0] == F[0]),
        "boundary_sff": float(abs(dFh[0] - dF[0]) / (2 * F0)),
        "min_R_change": dR,
        "c_normal_residual": float(np.max(np.abs(Fh[inner] - quad[inner]), initial=0.0)),
        "C0": float(C0),
        "log_inv_delta": float(L),
    }
    if dev > eta or dR < -eta:
        raise SmoothingError(
            f"eta = {eta:.3g} unattainable at log(1/delta) = {L:.4g}: "
            f"C^1 deviation {dev:.3e}, min R change {dR:.3e}")
    cn = CNormalCollar(n, F0, -F1 / (2 * F0), float(C), RadialGrid(0.0, window * np.exp(-L), grid.points))
    return cn, DeformedCollar(n, grid, Fh, dFh, d2Fh, conclusions)


def prescribe_sff(cn: CNormalCollar, k_target: float, eta: float, eps1: float,
                  grid: RadialGrid | None = None) -> DeformedCollar:
    """Replace the boundary second fundamental form ``sigma0 g0`` by ``k_target g0``.

    ``k_target`` is the scalar multiple of the slice metric (rotational symmetry).
    """
    n, F0, s0, C = cn.n, cn.F0, cn.sigma0, cn.C
    k = float(np.mean(k_target)) if np.ndim(k_target) else float(k_target)
    if np.ndim(k_target) and np.ptp(k_target) > 1e-14 * max(1.0, abs(k)):
        raise ValueError("rotationally symmetric k must be constant")
    if n * k > n * s0 + 1e-14 * max(1.0, abs(s0)):
        raise SmoothingError(f"tr k = {n * k:.6g} exceeds the boundary mean curvature {n * s0:.6g}")
    bound = min(0.5, np.inf if C <= 0 else C ** -2)
    if not 0 < eps1 < bound:
        raise SmoothingError(f"eps1 must lie in (0, {bound:.6g})")
    chi = build_cutoff("chi", {"eps1": eps1})
    grid = grid or RadialGrid(0.0, cn.t_range.b, cn.t_range.points)
    if grid.b < np.sqrt(eps1):
        raise SmoothingError("the C-normal window is shorter than sqrt(eps1)")

    def assemble(t):
        c, c1, c2 = chi(t)
        F = F0 * (1 - 2 * s0 * t + 2 * c * (s0 - k) - C * t * t)
        dF = F0 * (-2 * s0 + 2 * c1 * (s0 - k) - 2 * C * t)
        d2F = F0 * (2 * c2 * (s0 - k) - 2 * C)
        return F, dF, d2F, c

    t = grid.samples
    F, dF, d2F, _ = assemble(t)
    # checks on a sweep that resolves the mollifier of chi
    ts = np.linspace(0.0, min(grid.b, 1.2 * np.sqrt(eps1)), 20001)
    Fs, dFs, d2Fs, cs = assemble(ts)
    if np.min(Fs) <= 0 or np.min(F) <= 0:
        raise SmoothingError("deformed slice metric degenerates; decrease eps1")
    Fq = cn.F(ts)
    dFq = F0 * (-2 * s0 - 2 * C * ts)
    Rq = collar_scalar(n, Fq, dFq, np.full_like(ts, -2 * F0 * C))
    Rs = collar_scalar(n, Fs, dFs, d2Fs)
    foliation = -0.5 * n * dFs / F0 - (n * k + n * C * ts)
    conclusions = {
        "c0_deviation": float(np.max(np.abs(Fs - Fq)) / F0),
        "boundary_metric": bool(F[0] == F0),
        "boundary_sff": float(-dF[0] / (2 * F0)),
        "min_R_change": float(np.min(Rs - Rq)),
        "min_R": float(np.min(Rs)),
        "min_H_minus_trk": float(np.min(-n * dFs / (2 * Fs) - n * k)),
        "foliation_margin": float(np.min(foliation)),
        "chi_slope_min": float(np.min(chi(ts)[1])),
    }
    if conclusions["c0_deviation"] > eta:
        raise SmoothingError(f"C^0 deviation {conclusions['c0_deviation']:.3e} exceeds eta = {eta:.3g}")
    return DeformedCollar(n, grid, F, dF, d2F, conclusions)


def glue_c_normal(first: DeformedCollar, second: DeformedCollar) -> DeformedCollar:
    """Join two collars at their ``t = 0`` boundaries, ``second`` reflected to ``t < 0``."""
    if first.n != second.n or first.grid.h != second.grid.h:
        raise ValueError("collars must share dimension and step")
    if abs(first.F[0] - second.F[0]) > 1e-12 * first.F[0]:
        raise ValueError("boundary metrics differ")
    h = first.grid.h
    F = np.concatenate([second.F[:0:-1], first.F])
    dF = np.concatenate([-second.dF[:0:-1], first.dF])
    d2F = np.concatenate([second.d2F[:0:-1], first.d2F])
    m = second.grid.points - 1
    grid = RadialGrid(-m * h, first.grid.b, F.size)
    return DeformedCollar(first.n, grid, F, dF, d2F)


# --- radial barriers ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BarrierResult:
    mode: str
    r: np.ndarray
    values: np.ndarray
    slope: np.ndarray
    hopf: dict


def _running_integral(r, y):
    return CubicSpline(r, y).antiderivative()(r)


def radial_conformal_barrier(annulus: WarpedMetric, mode: str = "harmonic") -> BarrierResult:
    """Radial solution on ``f(r)^2 g_{S^n} + dr^2`` over ``[r0, r1]``.

    ``harmonic``: Laplace equation with values 0 and 1 at the inner and outer
    spheres.  ``torsion``: ``Delta zeta = -1`` with zero boundary values.
    Both reduce to quadratures of the weight ``f^n``.
    """
    if annulus.kind != "tube":
        raise ValueError("barrier needs an annular band (tube metric)")
    f, n = annulus.profile, annulus.n
    r = annulus.grid.samples
    if not annulus.grid.b > annulus.grid.a or np.any(f <= 0):
        raise ValueError("degenerate band")
    w = f ** n
    I = _running_integral(r, 1.0 / w)
    I = I - I[0]
    if mode == "harmonic":
        values = I / I[-1]
        slope = 1.0 / (w * I[-1])
        hopf = {"inner_outward_derivative_negative": bool(-slope[0] < 0),
                "outer_outward_derivative_positive": bool(slope[-1] > 0)}
        values[0], values[-1] = 0.0, 1.0
    elif mode == "torsion":
        W = _running_integral(r, w)
        W = W - W[0]
        J = _running_integral(r, W / w)
        J = J - J[0]
        c = J[-1] / I[-1]
        values = c * I - J
        slope = (c - W) / w
        values[0], values[-1] = 0.0, 0.0
        hopf = {"inner_outward_derivative_negative": bool(-slope[0] < 0),
                "outer_outward_derivative_negative": bool(slope[-1] < 0),
                "interior_positive": bool(np.all(values[1:-1] > 0))}
    else:
        raise ValueError(f"unknown barrier mode {mode!r}")
    if not all(hopf.values()):
        raise ArithmeticError(f"Hopf sign check failed: {hopf}")
    return BarrierResult(mode, r, values, slope, hopf)
