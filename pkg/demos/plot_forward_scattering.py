"""
Small-data scattering and the Born functional
=============================================

Pairs the scattering map with the incoming state at shrinking amplitude
and compares the epsilon limit with the Born functional.
"""

from yukawa_scattering import Gaussian, Grid3, ModelParams, dilate
from yukawa_scattering.extrapolation import extrapolate
from yukawa_scattering.scattering import ScatterConfig, amplitude_pairing, born_functional

###############################################################################
# A coarse torus keeps this quick; tail_budget is loosened for the small box.

cfg = ScatterConfig(grid=Grid3(24, 24.0), dt=0.02, tail_budget=1.0, horizon_check=False)
model = ModelParams.nls(0.5, 1.0, 1.25, 2.0)
phi = dilate(Gaussian(4.0, normalized=True), 1.0, cfg.grid)

K = born_functional(model, cfg, phi)
points = []
for eps in (0.2, 0.1, 0.05):
    p, res = amplitude_pairing(model, cfg, phi, eps)
    points.append((eps, p.real))
    print(f"eps={eps:<5}  pairing {p.real:.8f}  imag {p.imag:.1e}")

lim = extrapolate(points)
print(f"eps -> 0 limit {lim.estimate:.8f} +- {lim.width:.1e} (order {lim.order:.2f})")
print(f"Born functional {K:.8f}")
