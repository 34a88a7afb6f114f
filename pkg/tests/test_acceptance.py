"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances.

Run with ``pytest tests/test_acceptance.py -v``; the lines are printed even
when output capture is on.
"""

import io
import time

import numpy as np
import pytest
from scipy.integrate import simpson

from conftest import bulge_profile, closed_sphere, dumbbell_profile, s2_path_corpus, s3_corpus
from horizonforge.bartnik import horizon_path, minimizing_sequence
from horizonforge.checks import run_suite
from horizonforge.cli import run
from horizonforge.collar import build_mean_convex_collar, build_minimal_collar, mean_convex_terms
from horizonforge.flow import evolve, monotonicity_report, round_radius_squared
from horizonforge.geomcore import RadialGrid, SlicedMetric, WarpedMetric, slice_curvature, sphere_volume
from horizonforge.io import dumps
from horizonforge.paths import conformal_path_2d, round_isotopy, warped_tube_scalar
from horizonforge.schwarzschild import (GluingError, SchwarzschildOrbit, adm_mass, glue_profiles, gluing_feasible,
                                        orbit_rk4, penrose_bound)
from horizonforge.smoothing import SmoothingError, build_cutoff, make_c_normal, prescribe_sff
from horizonforge.spectral import lambda1, scalar_curvature

ETA = 1e-2


@pytest.fixture
def report(capsys):
    def emit(num, title, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} [{num:>2}] {title}: {detail}")
        return ok
    return emit


def test_01_penrose_limit(report):
    start = time.perf_counter()
    exts = minimizing_sequence(closed_sphere(2, 2048), [2.0 ** -i for i in range(1, 13)])
    elapsed = time.perf_counter() - start
    masses = np.array([e.mass for e in exts])
    min_R = min(e.checks["min_R"] for e in exts)
    horizon_H = max(abs(e.checks["horizon_H"]) for e in exts)
    slice_H = min(e.checks["min_slice_H"] for e in exts)
    ok = (bool(np.all(np.diff(masses) < 0)) and masses[-1] - 0.5 <= 1e-3 and min_R >= -1e-9
          and horizon_H <= 1e-8 and slice_H > 0 and elapsed <= 60)
    assert report(1, "Penrose-limit reproduction", ok,
                  f"m12 - 0.5 = {masses[-1] - 0.5:.3e}, min R = {min_R:.3e}, |H| on horizon <= {horizon_H:.1e}, "
                  f"min slice H = {slice_H:.3e}, {elapsed:.1f} s")


def test_02_schwarzschild_oracle(report):
    gaps, adm = [], []
    for n in (2, 3, 4):
        xs, ys = orbit_rk4(1.0, 0.0, n, 10.0)
        gaps.append(float(np.max(np.abs(ys - SchwarzschildOrbit(1.0, n).y(xs)))))
        o = SchwarzschildOrbit(1.7, n)
        xh = o.horizon_radius
        adm.append(abs(adm_mass(o.band(xh, 3 * xh, 64)) - penrose_bound(sphere_volume(n) * xh ** n, n)))
    ok = max(gaps) <= 1e-8 and max(adm) <= 1e-12
    assert report(2, "Schwarzschild oracle", ok, f"max |y - y_rk4| = {max(gaps):.2e}, "
                  f"max |adm - penrose| = {max(adm):.2e}")


def test_03_gluing_equivalence(report):
    rng = np.random.default_rng(20261016)
    agree, feasible, margins = 0, 0, []
    for i in range(100):
        n = int(rng.choice([2, 3]))
        C1 = rng.uniform(0.5, 3.0)
        o1 = SchwarzschildOrbit(C1, n)
        xh = o1.horizon_radius
        xa = xh * rng.uniform(1.1, 2.5)
        xb = xa + xh * rng.uniform(0.1, 1.0)
        p1 = o1.band(xa, xb, 64)
        x0 = xb + xh * rng.uniform(0.2, 2.0)
        # every tenth pair starts on p1's own orbit (infeasible by strictness)
        if i % 10 == 0:
            C2 = C1
        else:
            y0 = min(float(o1.y(x0)) * rng.uniform(0.3, 1.3), 0.999)
            C2 = x0 ** (n - 1) * (1 - y0 * y0)
        p2 = SchwarzschildOrbit(C2, n).band(x0, x0 + xh, 64)
        f = gluing_feasible(p1, p2)
        try:
            g = glue_profiles(p1, p2)
            built = True
            inside = (g.x > p1.x[-1]) & (g.x < p2.x[0])
            margins.append(float(np.min(g.psc_margin[inside])))
        except GluingError:
            built = False
        feasible += f
        agree += f == built
    ok = agree == 100 and min(margins) > 0
    assert report(3, "Gluing feasibility equivalence", ok,
                  f"{agree}/100 agree ({feasible} feasible), min bridge PSC margin = {min(margins):.3e}")


def _remainder(path, c, A):
    a, phi = path.arrays()
    R = slice_curvature(SlicedMetric(path.n, path.x_grid, path.t_grid, a, phi, A * c.lapse)).R
    return np.max(np.abs(R - 2 * c.lambda1[:, None])), float(R.min())


def test_04_collar_positivity(report):
    ratios, min_R, bounded = [], [], []
    failures = []
    for i, shape in enumerate(s2_path_corpus()):
        g = closed_sphere(2, 257, shape)
        path = horizon_path(g, 33)
        c, rep = build_minimal_collar(path)
        r1, R1 = _remainder(path, c, c.amplitude)
        r2, _ = _remainder(path, c, 2 * c.amplitude)
        ratios.append(r1 / r2)
        min_R.append(R1)
        bounded.append(c.amplitude ** 2 * r1)
        eps = 1e-3
        fine = horizon_path(g, 129)
        mc, _ = build_mean_convex_collar(fine, epsilon=eps)
        geo = slice_curvature(mc.metric)
        terms = mean_convex_terms(mc)
        checks = {
            "(1) metric at t = 0": np.array_equal(mc.metric.phi[0], g.profile) and np.array_equal(mc.metric.a[0], g.a),
            "(2) metric at t = 1": np.max(np.abs(mc.metric.phi[-1] - np.sqrt(1 + eps) * fine.metrics[-1].profile))
            <= 1e-12,
            "(3) R > 0": geo.R.min() > 0,
            "(4) R > 0 on horizon": geo.R[0].min() > 0,
            "(5) H > 0 for t > 0": bool(np.all(geo.H[1:] > 0)),
            "(6) H = 0 at t = 0": np.max(np.abs(geo.H[0])) <= 1e-10,
            "identity": np.max(np.abs(geo.R - terms["R"]) / np.maximum(1, np.abs(geo.R))) <= 1e-7,
        }
        failures += [f"path {i} {k}" for k, v in checks.items() if not v]
    ratios = np.array(ratios)
    ok = min(min_R) > 0 and bool(np.all(np.abs(ratios / 4 - 1) <= 0.2)) and not failures
    assert report(4, "Collar positivity", ok,
                  f"min R_h = {min(min_R):.3f}, A^2 max|R_h - 2 lambda1| <= {max(bounded):.3f}, "
                  f"ratio under A -> 2A in [{ratios.min():.3f}, {ratios.max():.3f}], "
                  f"mean-convex conclusions (1)-(6) {'all hold' if not failures else failures}")


def test_05_spectral_correctness(report):
    round_err = 0.0
    for n in (2, 3):
        m = closed_sphere(n, 2048)
        for k in (0.125, 0.25, 0.5, 1.0):
            exact = k * n * (n - 1)
            round_err = max(round_err, abs(lambda1(m, k, scheme="fd4").lambda1 - exact) / exact)
    corpus = ([closed_sphere(2, 257, s) for s in s2_path_corpus()]
              + [closed_sphere(2, 257, s) for s in (dumbbell_profile(0.45), bulge_profile(0.2))]
              + [closed_sphere(3, 257, s) for s in (bulge_profile(0.05), dumbbell_profile(0.2))]
              + s3_corpus(257))
    sandwich = True
    for m in corpus:
        R = scalar_curvature(m)
        avg = simpson(R * m.volume_density(), x=m.x) / simpson(m.volume_density(), x=m.x)
        for k in (0.125, 0.25, 0.5, 1.0):
            lam = lambda1(m, k, scheme="fd4", R=R).lambda1
            sandwich &= bool(R.min() - 1e-9 <= lam / k <= avg + 1e-9)
    ref = lambda1(closed_sphere(2, 4097, dumbbell_profile()), 0.5, scheme="fd4").lambda1
    errs = [abs(lambda1(closed_sphere(2, N, dumbbell_profile()), 0.5).lambda1 - ref) for N in (129, 257, 513)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = round_err <= 1e-8 and sandwich and all(3.2 <= r <= 4.8 for r in ratios)
    assert report(5, "Spectral correctness", ok,
                  f"round rel. error {round_err:.2e}, sandwich on {len(corpus)} metrics x 4 k "
                  f"{'holds' if sandwich else 'violated'}, halving ratios {ratios[0]:.3f}, {ratios[1]:.3f}")


def test_06_rayleigh_linearity(report):
    rng = np.random.default_rng(6)
    g = closed_sphere(2, 4097)
    x = g.x
    worst = 0.0
    for _ in range(20):
        cu, cf = rng.uniform(-0.4, 0.4, 3), rng.uniform(-1, 1, 3)
        u = sum(c * np.cos((j + 1) * x) for j, c in enumerate(cu))
        f = 1.5 + sum(c * np.cos((j + 1) * x) for j, c in enumerate(cf))
        _, info = conformal_path_2d(g, u, 0.5, f)
        worst = max(worst, info["affine_deviation"])
    assert report(6, "Rayleigh linearity", worst < 1e-10, f"max affine deviation {worst:.2e} over 20 pairs")


def test_07_eigenvalue_monotonicity(report):
    rates = {k: np.inf for k in (0.25, 0.5, 1.0)}
    for m in s3_corpus(129):
        traj = evolve(m, 1e-3, 0.05, k=0.25, monitor_every=20)
        for k in rates:
            rates[k] = min(rates[k], monotonicity_report(traj, k).min_rate)
    rnd = evolve(closed_sphere(3, 129), 1e-3, 0.225, k=0.5)
    r2 = np.array([np.max(s.profile) ** 2 for s in rnd.states])
    err = float(np.max(np.abs(r2 - round_radius_squared(1.0, rnd.times, 3))))
    ok = all(v > 0 for v in rates.values()) and err <= 1e-6 and not rnd.blow_up
    assert report(7, "Eigenvalue monotonicity", ok,
                  "min dlambda1/dt " + ", ".join(f"{v:.3f} (k = {k})" for k, v in rates.items())
                  + f"; round r^2 error {err:.2e} up to r^2 = 0.1")


def _inward_schwarzschild():
    fwd = SchwarzschildOrbit(1.0, 2).tube_profile(1.5, 1.0, 4097)
    return WarpedMetric("tube", 2, fwd.grid, fwd.profile[::-1].copy())


def test_08_smoothing_suite(report):
    problems, notes = [], []
    lattice = [("log_cutoff", {"delta": d, "epsilon": e}) for d in (0.2, 0.1, 0.01) for e in (0.5, 0.25)]
    lattice += [("chi", {"eps1": e}) for e in (0.25, 0.1, 0.04)]
    for kind, params in lattice:
        if not all(build_cutoff(kind, params).check_invariants().values()):
            problems.append(f"{kind} {params}")

    prod_grid = RadialGrid(0.0, 1.0, 4097)
    product = WarpedMetric("tube", 2, prod_grid, np.ones(4097))
    schw = _inward_schwarzschild()
    f0 = schw.profile[0]
    y = float(SchwarzschildOrbit(1.0, 2).y(f0))
    C0 = -(2 * y * y + 1 / f0) / (2 * f0 * f0)
    cases = [("product C=1 log(1/delta)=30", product, dict(C=1.0, window=0.5, log_inv_delta=30.0)),
             ("Schwarzschild C=C0 delta=1e-3", schw, dict(C=C0, window=0.3, delta=1e-3)),
             ("Schwarzschild C=1 log(1/delta)=30", schw, dict(C=1.0, window=0.3, log_inv_delta=30.0))]
    cnormal = {}
    for name, m, kw in cases:
        try:
            cn, d = make_c_normal(m, kw.pop("C"), ETA, kw.pop("window"), **kw)
        except SmoothingError as exc:
            problems.append(f"make_c_normal {name}: {exc}")
            continue
        c = d.conclusions
        for label, good in (("(1)", c["unchanged_outside"] and c["c1_deviation"] <= ETA),
                            ("(2)", c["boundary_metric"]), ("(3)", c["boundary_sff"] <= 1e-9),
                            ("(4)", c["min_R_change"] >= -ETA), ("(5)", c["c_normal_residual"] <= 1e-12 * cn.F0)):
            if not good:
                problems.append(f"make_c_normal {name} {label}")
        cnormal[name] = cn

    grid = RadialGrid(0.0, 0.5, 4097)
    targets = [("product", cnormal["product C=1 log(1/delta)=30"], -0.1),
               ("Schwarzschild", cnormal["Schwarzschild C=1 log(1/delta)=30"], 0.0)]
    for name, cn, k in targets:
        c = prescribe_sff(cn, k, ETA, 0.01, grid=grid).conclusions
        for label, good in (("(1)", c["c0_deviation"] <= ETA), ("(3)", abs(c["boundary_sff"] - k) <= 1e-9),
                            ("(4)", c["min_R_change"] >= -ETA), ("(5)", c["min_H_minus_trk"] >= -ETA),
                            ("foliation", c["foliation_margin"] >= -1e-12)):
            if not good:
                problems.append(f"prescribe_sff {name} k={k} {label}")
        notes.append(f"{name} k={k}: min(R~ - R^) = {c['min_R_change']:.3f}")
    ok = not problems
    assert report(8, "Smoothing suite", ok, ("all conclusions hold" if ok else "failed: " + "; ".join(problems))
                  + " [" + "; ".join(notes) + "]")


def test_09_isotopy(report):
    worst, product = np.inf, True
    for n in (2, 3):
        o = SchwarzschildOrbit(0.2, n)
        f0 = o.tube_profile(1.5 * o.horizon_radius, 2.0, 1025)
        for mu in np.linspace(0.1, 0.9, 9):
            f, h = round_isotopy(f0, 0.0, mu)
            worst = min(worst, float(warped_tube_scalar(f, h, f0.grid, n).min()))
        f, h = round_isotopy(f0, 0.0, 1.0)
        product &= bool(np.array_equal(f, np.ones_like(f)) and np.array_equal(h, np.ones_like(h)))
    ok = worst > 0 and product
    assert report(9, "Isotopy", ok, f"min R over mu = 0.1..0.9 is {worst:.4f}; "
                  f"mu = 1 {'is' if product else 'is not'} the exact product")


def test_10_determinism(report):
    a = dumps(run_suite(), indent=1)
    b = dumps(run_suite(), indent=1)
    outs = []
    for _ in range(2):
        buf = io.StringIO()
        run(["check"], stdout=buf)
        outs.append(buf.getvalue().encode())
    ok = a == b and outs[0] == outs[1]
    assert report(10, "Determinism", ok, f"two check-suite reports byte-identical ({len(outs[0])} bytes)")
