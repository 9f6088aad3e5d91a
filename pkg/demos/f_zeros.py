"""Zeros N + zeta_N of the monodromy functional F(M) for beta = 1.

    python demos/f_zeros.py
"""

from floquet_ionization.example_nonp import F_contour, F_series_oracle, zeta_table

print("F(1) =", F_contour(1, 1.0), " oracle", F_series_oracle(1, 1.0))
print(f"{'N':>3} {'zeta_N':>24} {'|F(N+zeta)|':>12} {'winding':>8} {'|zeta_N+1/zeta_N|':>18}")
for N, re, im, absF, wnd, ratio in zeta_table(range(4, 9), 1.0):
    print(f"{N:>3} {re:>+24.15e} {absF:>12.1e} {wnd:>8d} {ratio:>18.4f}")
