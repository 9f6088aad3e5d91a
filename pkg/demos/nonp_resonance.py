"""Resolvent scan and resonance of the two-harmonic example V_D chi_D + 2 Omega_D chi_D sin(omega t).

The static bound state (E = -1.21) needs two photons to reach the continuum. The scan shows
a sharp dip of s_min(I - C) on the real axis; the pole sits just below it.

    python demos/nonp_resonance.py [N_modes]
"""

import sys

import numpy as np

from floquet_ionization.floquet_system import PotentialSpec
from floquet_ionization.fredholm_solver import locate_pole, real_axis_path, resolvent_scan

N = int(sys.argv[1]) if len(sys.argv) > 1 else 16
pot = PotentialSpec.nonp()
scan = resolvent_scan(pot, real_axis_path(pot.omega, 100), N)
i = int(np.argmin(scan.smin))
print(f"N_modes = {N}: min s_min = {scan.smin[i]:.2e} at sigma = {scan.sigmas[i].real:.3f}, flags = {len(scan.flags)}")

rec = locate_pole(pot, scan.sigmas[i].real + 1e-3j, N)
print(f"pole sigma0 = {rec.sigma0.real:.6f} {rec.sigma0.imag:+.6f}i, slope {rec.simplicity_fit:.4f}")
print(f"decay rate of the trapped part: Gamma = {rec.sigma0.imag:.5f} (lifetime {1 / rec.sigma0.imag:.0f})")
