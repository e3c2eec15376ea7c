"""
Yukawa kernel and the linear flow
=================================

Checks the closed-form kernel norms, then evolves a Gaussian under the
free and Yukawa-perturbed flows and prints the mass and peak amplitude.
"""

import numpy as np

from yukawa_scattering import Gaussian, Grid3, YukawaParams, dilate, norm
from yukawa_scattering.oracles import kernel_check_table
from yukawa_scattering.propagators import HamiltonianSpec, evolve_linear

###############################################################################
# Closed-form Lp norms of e^{-r}/r against adaptive radial quadrature.

for name, exact, quad, rel in kernel_check_table():
    print(f"{name:>12s}  closed form {exact:.12f}  quadrature {quad:.12f}  rel {rel:.1e}")

###############################################################################
# A unit Gaussian on a 32^3 torus, with and without the potential.

grid = Grid3(32, 32.0)
phi = dilate(Gaussian(1.0, normalized=True), 1.0, grid)
for label, spec in [("free", HamiltonianSpec.free()),
                    ("yukawa", HamiltonianSpec.yukawa(YukawaParams(0.5, 1.0)))]:
    for t in (0.5, 1.0, 2.0):
        u = evolve_linear(spec, phi, t).final
        peak = np.abs(u.values).max()
        print(f"{label:>6s}  t={t:3.1f}  mass {norm(u) ** 2:.12f}  peak {peak:.4f}")
