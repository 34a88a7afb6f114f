import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import simpson

from conftest import closed_sphere, dumbbell_profile
from horizonforge._fd import derivative
from horizonforge.geomcore import (RadialGrid, SlicedMetric, WarpedMetric, conformal_transform,
                                   fermi_graph_mean_curvature, polar_sincos, slice_curvature, tube_as_sliced,
                                   tube_geometry, warped_closed_scalar)
from horizonforge.schwarzschild import SchwarzschildOrbit
from horizonforge.smoothing import radial_conformal_barrier


def tube(n, a, b, points, f):
    g = RadialGrid(a, b, points)
    return WarpedMetric("tube", n, g, f(g.samples))


# --- grids and metrics ---------------------------------------------------------

def test_grid_samples_are_exact_multiples():
    g = RadialGrid(1.0, 2.0, 11)
    assert g.h == 0.1
    assert np.array_equal(g.samples, 1.0 + np.arange(11) * g.h)


@pytest.mark.parametrize("a,b,points", [(1.0, 1.0, 16), (2.0, 1.0, 16), (0.0, 1.0, 7)])
def test_grid_rejects_bad_input(a, b, points):
    with pytest.raises(ValueError):
        RadialGrid(a, b, points)


def test_tube_profile_must_be_positive():
    g = RadialGrid(0.0, 1.0, 16)
    with pytest.raises(ValueError):
        WarpedMetric("tube", 2, g, g.samples - 0.5)


def test_interior_zero_is_rejected():
    g = RadialGrid(0.0, np.pi, 33)
    phi = np.sin(g.samples)
    phi[16] = 0.0
    with pytest.raises(ValueError):
        WarpedMetric("closed_sphere", 2, g, phi, True)


# --- tubes ------------------------------------------------------------------

def test_unit_cylinder():
    geo = tube_geometry(tube(2, 0.0, 1.0, 64, np.ones_like))
    assert np.allclose(geo.R, 2.0, atol=1e-14)
    assert np.allclose(geo.H, 0.0, atol=1e-14)


def test_flat_cone():
    geo = tube_geometry(tube(3, 1.0, 2.0, 64, lambda t: t))
    assert np.max(np.abs(geo.R)) <= 1e-10


def test_schwarzschild_tube_is_scalar_flat():
    m = SchwarzschildOrbit(1.0, 2).tube_profile(1.5, 3.0, 4096)
    assert np.max(np.abs(tube_geometry(m).R)) <= 1e-6


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.6), st.floats(0.2, 2.0), st.integers(2, 4))
def test_tube_sff_identities_and_psc_flag(amp, freq, n):
    m = tube(n, 0.0, 1.0, 257, lambda t: 1.5 + amp * np.sin(freq * t + 0.3))
    geo = tube_geometry(m)
    assert np.allclose(geo.H, n * geo.sff_coeff, rtol=0, atol=1e-14)
    assert np.allclose(geo.sff_norm_sq, n * geo.sff_coeff ** 2, rtol=0, atol=1e-14)
    clear = np.abs(geo.R) > 1e-9
    assert np.array_equal(geo.psc[clear], geo.R[clear] > 0)


# --- closed spheres ---------------------------------------------------------

def test_round_s2_scalar_constant():
    R = warped_closed_scalar(closed_sphere(2, 2048))
    assert np.max(np.abs(R - 2)) <= 1e-6
    assert np.ptp(R) < 1e-6


@pytest.mark.parametrize("r0", [0.5, 1.0, 3.0])
def test_round_s3_of_radius(r0):
    m = closed_sphere(3, 1025, radius=r0)
    assert np.allclose(warped_closed_scalar(m), 6 / r0 ** 2, rtol=1e-8, atol=0)


def test_dumbbell_richardson_at_equator():
    coarse = closed_sphere(2, 1025, dumbbell_profile())
    fine = closed_sphere(2, 2049, dumbbell_profile())
    r1 = warped_closed_scalar(coarse)[512]
    r2 = warped_closed_scalar(fine)[1024]
    assert abs(r1 - r2) <= 1e-6


def test_closure_violation_is_reported():
    m = closed_sphere(2, 257, lambda s, c: 2 * s)
    with pytest.raises(ValueError, match="closure"):
        warped_closed_scalar(m)


# --- conformal changes ------------------------------------------------------

def test_conformal_identity():
    R = np.linspace(1, 2, 10)
    H = np.linspace(-1, 1, 10)
    Rb, Hb = conformal_transform(R, np.ones(10), np.zeros(10), 3, np.zeros(10), H)
    assert np.array_equal(Rb, R) and np.array_equal(Hb, H)


def test_conformal_constant_two_on_round_s3():
    Rb, _ = conformal_transform(np.full(5, 6.0), np.full(5, 2.0), np.zeros(5), 3, np.zeros(5), np.zeros(5))
    assert np.allclose(Rb, 0.375, rtol=0, atol=1e-15)


@given(st.floats(0.1, 10.0), st.integers(3, 7), st.floats(-5, 5))
def test_conformal_scaling_law(c, n, R):
    Rb, _ = conformal_transform(np.array([R]), np.array([c]), np.zeros(1), n, np.zeros(1), np.zeros(1))
    assert Rb[0] * c ** (4 / (n - 2)) == pytest.approx(R, rel=1e-13, abs=1e-13)


def test_conformal_rejects_bad_input():
    with pytest.raises(ValueError):
        conformal_transform([1.0], [1.0], [0.0], 2, [0.0], [0.0])
    with pytest.raises(ValueError):
        conformal_transform([1.0], [0.0], [0.0], 3, [0.0], [0.0])


def test_harmonic_conformal_factor_on_flat_annulus():
    g = RadialGrid(1.0, 2.0, 2049)
    r = g.samples
    b = radial_conformal_barrier(WarpedMetric("tube", 2, g, r), "harmonic")
    u = 1.0 + b.values
    # flux form keeps rounding at eps/h instead of eps/h^2
    lap = derivative(r ** 2 * b.slope, g.h, 1) / r ** 2
    Rb, _ = conformal_transform(np.zeros_like(r), u, lap, 3, np.zeros_like(r), np.zeros_like(r))
    assert np.max(np.abs(Rb)) <= 1e-8


# --- collar slicing ---------------------------------------------------------

def _constant_path(points=257, t_points=17, scale=lambda t: np.ones_like(t)):
    xg = RadialGrid(0.0, np.pi, points)
    tg = RadialGrid(0.0, 1.0, t_points)
    s = np.sqrt(scale(tg.samples))[:, None]
    phi = s * polar_sincos(xg)[0][None, :]
    a = s * np.ones((1, points))
    return SlicedMetric(2, xg, tg, a, phi, np.ones((t_points, points)))


def test_product_collar():
    geo = slice_curvature(_constant_path())
    assert np.max(np.abs(geo.H)) <= 1e-14
    assert np.max(np.abs(geo.R - 2)) <= 1e-8


def test_linearly_growing_round_slices():
    geo = slice_curvature(_constant_path(scale=lambda t: 1 + t, t_points=65))
    t = np.linspace(0, 1, 65)
    assert geo.H[0, 10] == pytest.approx(1.0, abs=1e-7)
    assert np.allclose(geo.H, (1 / (1 + t))[:, None], atol=1e-6)


@pytest.mark.parametrize("n", [2, 3])
def test_tube_recast_matches_tube_geometry(n):
    m = tube(n, 0.0, 1.0, 513, lambda t: 1.2 + 0.1 * np.sin(2 * t))
    R_slice = slice_curvature(tube_as_sliced(m, 1025)).R
    R_tube = tube_geometry(m).R
    # relative to max(1, |R|), the normalization used for all collar identities
    gap = np.abs(R_slice - R_tube[:, None]) / np.maximum(1.0, np.abs(R_tube))[:, None]
    assert np.max(gap[4:-4]) <= 1e-9
    # rows whose composed t-stencils reach a one-sided closure
    assert np.max(gap) <= 1e-8


def test_nonpositive_lapse_rejected():
    s = _constant_path()
    with pytest.raises(ValueError):
        SlicedMetric(2, s.x_grid, s.t_grid, s.a, s.phi, -s.lapse)


# --- Fermi graphs -----------------------------------------------------------

def _cylinder_collar(points=513, t_points=41):
    xg = RadialGrid(0.0, np.pi, points)
    tg = RadialGrid(-0.2, 0.2, t_points)
    phi = np.tile(polar_sincos(xg)[0], (t_points, 1))
    return SlicedMetric(2, xg, tg, np.ones_like(phi), phi, np.ones_like(phi))


def test_fermi_flat_graph_matches_slice():
    xg = RadialGrid(0.0, np.pi, 257)
    tg = RadialGrid(0.0, 1.0, 33)
    s = np.sqrt(1 + tg.samples)[:, None]
    phi = s * polar_sincos(xg)[0][None, :]
    c = SlicedMetric(2, xg, tg, s * np.ones((1, 257)), phi, np.ones((33, 257)))
    level = tg.samples[16]
    H = fermi_graph_mean_curvature(c, np.full(257, level))
    assert np.allclose(H, slice_curvature(c).H[16], atol=1e-9)


def test_fermi_plane_in_flat_product():
    xg = RadialGrid(0.0, 1.0, 129)
    tg = RadialGrid(-1.0, 1.0, 21)
    ones = np.ones((21, 129))
    c = SlicedMetric(2, xg, tg, ones, ones, ones, closed=False)
    H = fermi_graph_mean_curvature(c, 0.01 * xg.samples)
    assert np.max(np.abs(H)) <= 1e-10


def test_fermi_first_variation_oracle():
    c = _cylinder_collar()
    x = c.x_grid.samples
    f = 0.1 * np.cos(x)
    H = fermi_graph_mean_curvature(c, f)
    eta = np.cos(2 * x) + 0.5

    fine = np.linspace(0, np.pi, 20001)

    def area(s):
        g = 0.1 * np.cos(fine) + s * (np.cos(2 * fine) + 0.5)
        gx = np.gradient(g, fine, edge_order=2)
        return 2 * np.pi * simpson(np.sin(fine) * np.sqrt(1 + gx ** 2), x=fine)

    s = 1e-3
    dA = (area(s) - area(-s)) / (2 * s)
    predicted = 2 * np.pi * simpson(H * eta * np.sin(x), x=x)
    assert predicted == pytest.approx(dA, abs=1e-5)


def test_fermi_graph_outside_collar():
    c = _cylinder_collar()
    with pytest.raises(ValueError):
        fermi_graph_mean_curvature(c, np.full(c.x_grid.points, 0.5))
