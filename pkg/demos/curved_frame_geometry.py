"""Geometry of a generic frame: torsion, the U(1) curvature and the vanishing of b(x).

For a random smooth frame the eigenvector curvature of the Dirac symbol is
fixed by the dual torsion, the subprincipal symbol is a multiple of the
identity, and the second Weyl density cancels pointwise.  Adding a scalar
potential breaks the last property and nothing else.
"""

import numpy as np

from spectralsys.asymptotics import b_density, b_density_closed
from spectralsys.dirac import build_dirac, is_massless_dirac
from spectralsys.flow import integrate_trajectory
from spectralsys.frames import curvature_torsion_residual, random_frame

rng = np.random.default_rng(5)
bundle = random_frame(rng, max_harmonic=1)
op = build_dirac(bundle)
x, xi = rng.uniform(0, 2 * np.pi, 3), rng.normal(size=3)

residual, curvature, torsion_side = curvature_torsion_residual(bundle, x, xi)
print(f"curvature {curvature:+.6f} vs torsion {torsion_side:+.6f} (residual {residual:.1e})")
print(f"A_sub at x:\n{np.round(op.subprincipal(x), 6)}")
print(f"b(x) by quadrature {b_density(op.symbol(), x):+.2e}, closed form {b_density_closed(bundle, op.zero_order, x):+.2e}")

shifted = op.plus_potential(0.2 * np.eye(2))
decision = is_massless_dirac(shifted)
print(f"with +0.2 I: massless Dirac? {decision.is_dirac} (failed condition {decision.failed_condition}), "
      f"b(x) = {b_density(shifted.symbol(), x):+.5f}")

trajectory = integrate_trajectory(op.symbol(), 1, x, xi, 10.0)
print(f"trajectory to t=10: relative energy drift {trajectory.energy_drift():.1e}, "
      f"phase {trajectory.phase[-1]:+.4f}")
