import numpy as np
import pytest

from horizonforge.geomcore import RadialGrid, WarpedMetric, polar_sincos


def closed_sphere(n, points, shape=lambda s, c: s, radius=1.0):
    """Closed sphere ``radius * shape(sin, cos)`` of the polar angle on [0, pi radius]."""
    g = RadialGrid(0.0, np.pi * radius, points)
    phi = radius * shape(*polar_sincos(g))
    return WarpedMetric("closed_sphere", n, g, phi, True)


def dumbbell_profile(amp=0.3):
    return lambda s, c: s * (1 - amp * s ** 2)


def bulge_profile(amp=0.05):
    return lambda s, c: s * (1 + amp * s ** 2)


def dumbbell_scalar(x, amp=0.3):
    """Closed-form R of the n = 2 dumbbell, -2 phi''/phi."""
    s, c = np.sin(x), np.cos(x)
    phi = s - amp * s ** 3
    d2 = -s + 3 * amp * s ** 3 - 6 * amp * s * c ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        R = -2 * d2 / phi
    R[0] = R[-1] = 2 + 12 * amp  # pole limit
    return R


@pytest.fixture(scope="session")
def round_s2():
    return closed_sphere(2, 2048)


@pytest.fixture(scope="session")
def dumbbell():
    return closed_sphere(2, 1025, dumbbell_profile())


def s3_corpus(points=129):
    """Five non-round warped 3-spheres with positive scalar curvature."""
    shapes = [
        bulge_profile(0.05),
        bulge_profile(0.15),
        dumbbell_profile(0.1),
        lambda s, c: s * (1 + 0.08 * s ** 2 * c),
        lambda s, c: s * (1 + 0.05 * s ** 4),
    ]
    return [closed_sphere(3, points, s) for s in shapes]


def s2_path_corpus():
    """Ten non-round warped 2-spheres with positive lambda1(k = 1/2)."""
    return ([dumbbell_profile(a) for a in (0.1, 0.2, 0.3, 0.4)]
            + [bulge_profile(a) for a in (0.1, 0.2, 0.3)]
            + [lambda s, c, a=a: s * (1 + a * s * s * c) for a in (0.05, 0.1, 0.15)])


def conformal_path(g, t_points, schedule=lambda t: t):
    """Twisted equal-area path ``e^{2 s(t) u} g`` from ``g`` to a round metric."""
    from horizonforge.bartnik import round_conformal_factor
    from horizonforge.paths import MetricPath, moser_twist

    tg = RadialGrid(0.0, 1.0, t_points)
    e = np.exp(schedule(tg.samples)[:, None] * round_conformal_factor(g)[None, :])
    phi = e * g.profile
    phi[:, 0] = phi[:, -1] = 0.0
    return moser_twist(MetricPath.from_arrays(g.n, g.grid, tg, e * g.a, phi)).path
