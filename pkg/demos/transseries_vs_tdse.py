"""Large-time transseries model of psi(0, t) against direct Crank-Nicolson propagation.

Builds the model (resonance pole plus branch-cut integrals) for the two-harmonic example
with a smooth bump initial state and compares |psi(0, t)| with the oracle. Takes a few
minutes on one core.

    python demos/transseries_vs_tdse.py
"""

import numpy as np

from floquet_ionization.floquet_system import PotentialSpec, bump
from floquet_ionization.tdse_oracle import propagate
from floquet_ionization.time_asymptotics import build_model, transseries_eval

pot = PotentialSpec.nonp()
psi0 = bump()
model = build_model(pot, psi0, [0.0], 32, poles=[0.23269 + 0.0029j])
for p in model.poles:
    print(f"pole Gamma = {p.gamma.real:.5f}{p.gamma.imag:+.5f}i")

tr = propagate(pot, psi0, 200.0, probe_x=(0.0,))
print(f"{'t':>6} {'model':>10} {'oracle':>10} {'rel':>8}")
for t in (20, 50, 100, 150, 200):
    i = int(np.argmin(np.abs(tr.t - t)))
    a = abs(transseries_eval(model, tr.t[i]))
    b = abs(tr.probe_values[i, 0])
    print(f"{tr.t[i]:>6.1f} {a:>10.5f} {b:>10.5f} {abs(a / b - 1):>8.2%}")
