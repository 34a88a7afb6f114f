"""Regenerate the sample documents under data/."""

from pathlib import Path

import numpy as np
from scipy.integrate import simpson

from horizonforge.checks import round_sphere
from horizonforge.geomcore import RadialGrid, WarpedMetric, polar_sincos
from horizonforge.io import ProfileDocument, dumps, write_document
from horizonforge.schwarzschild import SchwarzschildOrbit

out = Path(__file__).resolve().parent.parent / "data"
out.mkdir(exist_ok=True)

write_document(ProfileDocument.from_metric(round_sphere(2, 2048), {"name": "unit round S2"}), out / "round_s2.json")
write_document(ProfileDocument.from_metric(round_sphere(3, 129), {"name": "unit round S3"}), out / "round_s3.json")

g = RadialGrid(0.0, np.pi, 512)
x = g.samples
s, co = polar_sincos(g)
phi = s * (1 + 0.15 * s ** 2 * co + 0.1 * s ** 2)
c = np.sqrt(4 * np.pi / (2 * np.pi * simpson(phi, x=x)))
peanut = WarpedMetric("closed_sphere", 2, g, c * phi, True, c * np.ones_like(x))
write_document(ProfileDocument.from_metric(peanut, {"name": "non-round S2 of area 4 pi"}), out / "peanut_s2.json")

g3 = RadialGrid(0.0, np.pi, 129)
s3 = polar_sincos(g3)[0]
p3 = s3 * (1 + 0.05 * s3 ** 2)
write_document(ProfileDocument.from_metric(WarpedMetric("closed_sphere", 3, g3, p3, True),
                                           {"name": "perturbed round S3"}), out / "perturbed_s3.json")

tg = RadialGrid(0.0, 1.0, 2049)
write_document(ProfileDocument.from_metric(WarpedMetric("tube", 2, tg, np.ones(tg.points)),
                                           {"name": "product collar S2 x [0,1]"}), out / "product_tube.json")

inner = SchwarzschildOrbit(1.0, 2).band(1.0, 1.5, 64)
outer = SchwarzschildOrbit(1.2, 2).band(2.0, 4.0, 64)
write_document(ProfileDocument.from_planar(inner, {"name": "mass 0.5 band"}), out / "band_inner.json")
write_document(ProfileDocument.from_planar(outer, {"name": "mass 0.6 band"}), out / "band_outer.json")

(out / "config_lambda1.json").write_text(dumps({
    "command": "lambda1",
    "params": {"metric": "data/round_s2.json", "k": 0.5},
    "tolerances": {"membership": 1e-8},
}, indent=1) + "\n")
