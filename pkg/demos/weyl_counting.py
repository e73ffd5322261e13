"""Counting eigenvalues of sigma.D + diag(s, 0) and reading off the Weyl coefficients.

The raw counting function jumps at every lattice shell. Smoothing it with a
kernel whose Fourier transform is supported in (-6, 6) leaves a cubic whose
leading coefficient is the ball volume and whose second coefficient is
-2 pi s. The same numbers come out of the local densities a(x) and b(x).
"""

import numpy as np

from spectralsys.asymptotics import global_coefficients
from spectralsys.dirac import build_dirac
from spectralsys.frames import constant_frame
from spectralsys.spectrum import counting_function, fit_two_term, lattice_oracle, make_mollifier, mollified_counting

s = 0.5
op = build_dirac(constant_frame(np.eye(3))).plus_potential(np.diag([s, 0.0]))
moll = make_mollifier(6.0)
plus = lattice_oracle(op, 35.0 + moll.tail + 1.0)
minus = lattice_oracle(-op, 35.0 + moll.tail + 1.0)

print(" lambda      N(+A)      N(-A)   smoothed(+A)")
for lam in (5.0, 10.0, 20.0, 30.0):
    print(f"{lam:7.1f} {counting_function(plus, lam):10d} {counting_function(minus, lam):10d} "
          f"{mollified_counting(plus, moll, lam):14.2f}")

weyl = global_coefficients(op, 8)
for label, data in (("+A", plus), ("-A", minus)):
    fit = fit_two_term(data, moll, 20.0, 35.0)
    print(f"fit {label}: a = {fit.a:.5f}, b = {fit.b:+.4f}")
print(f"densities: a = {weyl.a:.5f}, b = {weyl.b:+.4f} (4pi/3 = {4 * np.pi / 3:.5f}, -2 pi s = {-2 * np.pi * s:+.4f})")
