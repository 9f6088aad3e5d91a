"""Locate the bound state of a static square well as a pole of the Fredholm resolvent.

    python demos/square_well_pole.py
"""

import numpy as np

from floquet_ionization.floquet_system import PotentialSpec, assemble_C
from floquet_ionization.fredholm_solver import locate_pole, near_null_vector
from floquet_ionization.greens import SpectralPoint
from floquet_ionization.ionization_analysis import classify_threshold, flux_balance_check
from floquet_ionization.tdse_oracle import square_well_levels

well = PotentialSpec.square_well(2.0)
E0 = square_well_levels(2.0)[0]
sigma_exact = (-E0) % well.omega
print(f"oracle energy E0 = {E0:.12f}, expected pole sigma0 = {sigma_exact:.12f}")

rec = locate_pole(well, sigma_exact + 0.01, 2)
print(f"located sigma0    = {rec.sigma0.real:.12f}{rec.sigma0.imag:+.1e}j")
print(f"blow-up slope     = {rec.simplicity_fit:.4f} (simple pole: -1)")

C = assemble_C(well, SpectralPoint.from_sigma(rec.sigma0.real, well.omega), 2)
smin, v = near_null_vector(C)
print(f"s_min(I - C)      = {smin:.2e}")
print(f"flux balance      = {flux_balance_check(C, v):.2e}")
out = classify_threshold(C, v)
print(f"classification    = {out.classification} (tail slope {out.decay_slope:.4f}, expected {-np.sqrt(-E0):.4f})")
