"""End-to-end acceptance criteria, one or more tests per criterion.

Each test carries ``@pytest.mark.acceptance(k)``; conftest prints a PASS/FAIL line per
criterion after the run. Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import math

import mpmath as mp
import numpy as np
import pytest

from floquet_ionization.errors import FitQualityError
from floquet_ionization.example_nonp import (
    F_contour,
    F_series_oracle,
    find_zero_zeta,
    monodromy_identity_residual,
    winding_number,
)
from floquet_ionization.floquet_system import (
    PotentialSpec,
    assemble_C,
    build_source,
    bump,
    h_norm,
    reconstruct_psi_hat,
)
from floquet_ionization.fredholm_solver import (
    locate_pole,
    near_null_vector,
    neumann_solve,
    operator_norm,
    real_axis_path,
    resolvent_scan,
    solve,
)
from floquet_ionization.greens import Domain, SpectralPoint, bessel_k0, g_norm_estimate, green_value, kappa
from floquet_ionization.ionization_analysis import exterior_extend, flux_balance_check, trace_from_function, wronskian_flux
from floquet_ionization.tdse_oracle import (
    GridConfig,
    grid_bound_state,
    laplace_probe,
    propagate,
    square_well_levels,
    square_well_state,
)
from floquet_ionization.time_asymptotics import CutData, branch_cut_contribution, build_model, fit_decay_exponent, transseries_eval

NONP = PotentialSpec.nonp()
WELL = PotentialSpec.square_well(2.0)
E0 = square_well_levels(2.0)[0]
SIGMA0 = (-E0) % 1.0
# narrow two-photon resonance of the nonp defaults (see the pole search in the ledger)
NONP_POLE = 0.23269 + 0.0029j


# 1 -------------------------------------------------------------------------


@pytest.mark.acceptance(1)
def test_green_closed_forms(detail):
    mp.mp.dps = 30
    worst = 0.0
    # Fourier-integral oracle for real kappa, independent of the closed forms
    for k, r in [(0.7, 0.3), (1.0, 1.0), (2.5, 1.7)]:
        g1 = mp.quadosc(lambda q: mp.cos(q * r) / (q * q + k * k), [0, mp.inf], omega=r) / mp.pi
        g3 = mp.quadosc(lambda q: q * mp.sin(q * r) / (q * q + k * k), [0, mp.inf], omega=r) / (2 * mp.pi**2 * r)
        for d, ref in ((1, g1), (3, g3)):
            worst = max(worst, abs(green_value(d, k, r) - complex(ref)) / abs(complex(ref)))
    # complex kappa against the formulas in extended precision
    for k in (0.3 - 0.8j, 2 - 1j, 0.05 + 0.4j):
        for r in (0.1, 1.0, 3.0):
            kk = mp.mpc(k.real, k.imag)
            refs = {1: mp.exp(-kk * r) / (2 * kk), 3: mp.exp(-kk * r) / (4 * mp.pi * r)}
            for d, ref in refs.items():
                worst = max(worst, abs(green_value(d, k, r) - complex(ref)) / abs(complex(ref)))
    detail(f"green rel err {worst:.1e}")
    assert worst <= 1e-12


@pytest.mark.acceptance(1)
def test_k0_against_series(detail):
    worst = 0.0
    for z in np.concatenate([np.linspace(0.1, 10, 100), [0.1 + 0.5j, 1 - 3j, 5 + 9j, 9.9 - 0.2j]]):
        ref = complex(mp.besselk(0, mp.mpc(z.real, np.imag(z))))
        worst = max(worst, abs(bessel_k0(z) - ref) / max(1.0, abs(ref)))
    detail(f"K0 err {worst:.1e}")
    assert worst <= 1e-8


# 2 -------------------------------------------------------------------------


def _windowed_medians(values, width=21):
    return np.array([np.median(values[i : i + width]) for i in range(values.size - width + 1)])


@pytest.mark.acceptance(2)
@pytest.mark.parametrize("dim", [1, 3])
def test_agmon_decay(dim, detail):
    dom = Domain(dim, 1.0, 2.0, panels=12, order=16)
    s = SpectralPoint.from_sigma(0.5, 1.0)
    ns = np.arange(-200, 201)
    g = np.array([g_norm_estimate(dom, int(n), s) for n in ns])
    scaled = np.sqrt(1 + np.abs(ns)) * g
    ref = max(scaled[ns == 20][0], scaled[ns == -20][0])
    ratio = scaled / ref
    worst = int(ns[np.argmax(ratio)])
    monotone = True
    for side in (ns >= 0, ns <= 0):
        order = np.argsort(np.abs(ns[side]))
        med = _windowed_medians(g[side][order])
        monotone &= bool(np.all(np.diff(med) <= 0))
    detail(f"d={dim}: max ratio {ratio.max():.3f} at n={worst}, medians monotone {monotone}")
    assert monotone
    assert ratio.max() <= 2


# 3 -------------------------------------------------------------------------


@pytest.mark.acceptance(3)
def test_contractivity(detail):
    sigma0 = 0.3
    norms = {tau: operator_norm(assemble_C(NONP, SpectralPoint.from_sigma(sigma0 - 2j * tau, 1.0), 8)) for tau in (1.0, 100.0)}
    C = assemble_C(NONP, SpectralPoint.from_sigma(sigma0 - 200j, 1.0), 8)
    w = build_source(NONP, bump(), C).w
    res = neumann_solve(C, w, tol=1e-14)
    direct = solve(C, w)
    err = h_norm(res.y - direct) / h_norm(direct)
    detail(f"||C|| {norms[1.0]:.3f} -> {norms[100.0]:.3f}; Neumann vs direct {err:.1e}")
    assert norms[100.0] < 0.5 * norms[1.0]
    assert err <= 1e-9


# 4 -------------------------------------------------------------------------


@pytest.mark.acceptance(4)
@pytest.mark.parametrize("case", ["nonp", "well"])
def test_fredholm_matches_time_domain(case, detail):
    pot, N = (NONP, 32) if case == "nonp" else (WELL, 8)
    ps = (0.2, 0.5, 1.0)
    xs = np.array([0.0, 0.5])
    psi0 = bump()
    # e^{-0.2 T} < 1e-8 for the slowest transform
    tr = propagate(pot, psi0, 95.0, ps=ps, probe_x=tuple(xs))
    worst = 0.0
    for p in ps:
        s, n = SpectralPoint.from_p(p, pot.omega)
        C = assemble_C(pot, s, N)
        src = build_source(pot, psi0, C)
        got = reconstruct_psi_hat(solve(C, src.w), src, C, x=xs, n=n)
        worst = max(worst, float(np.max(np.abs(got / laplace_probe(tr, p) - 1))))
    detail(f"{case}: max rel err {worst:.1e}")
    assert worst <= 1e-2


# 5 -------------------------------------------------------------------------


@pytest.mark.acceptance(5)
def test_pole_detection(detail):
    phi, _ = square_well_state(2.0)
    rec = locate_pole(WELL, SIGMA0 + 0.003, 2, psi0=bump())
    n_pole = round(-E0 - SIGMA0)
    r = rec.residue.mode(n_pole)
    dom = WELL.domain
    f, w = phi(dom.d_nodes), dom.d_weights
    overlap = abs(np.sum(w * np.conj(f) * r)) / math.sqrt(np.sum(w * f * f) * np.sum(w * abs(r) ** 2))
    err = abs(rec.sigma0 - SIGMA0)
    detail(f"pole err {err:.1e}, slope {rec.simplicity_fit:.4f}, overlap {overlap:.6f}")
    assert err <= 1e-6
    assert -1.15 <= rec.simplicity_fit <= -0.85
    assert overlap >= 0.999


# 6 -------------------------------------------------------------------------


@pytest.mark.acceptance(6)
def test_condition_A_scan(detail):
    path = real_axis_path(1.0, 200)
    flags, smin = [], []
    for N in (32, 64):
        scan = resolvent_scan(NONP, path, N)
        flags.append(len(scan.flags))
        smin.append(float(scan.smin.min()))
    detail(f"flags {flags}, min s_min {min(smin):.2e}")
    assert flags == [0, 0]
    assert min(smin) >= 1e-2


# 7 -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def nonp_long_run():
    grid = GridConfig()
    init, _ = grid_bound_state(NONP, grid)
    return propagate(NONP, None, 500.0, grid=grid, psi_init=init, probe_x=(0.0,))


@pytest.mark.acceptance(7)
def test_decay_exponent(nonp_long_run, detail):
    tr = nonp_long_run
    sel = tr.t >= 50
    try:
        k0 = fit_decay_exponent(tr.t[sel], tr.probe_values[sel, 0], omega=1.0)
    except FitQualityError as exc:
        loose = fit_decay_exponent(tr.t[sel], tr.probe_values[sel, 0], omega=1.0, min_r2=0.0)
        detail(f"fit rejected ({exc}); unconstrained k0 {loose:.3f}")
        raise
    detail(f"k0 {k0:.3f}")
    assert 2.7 <= k0 <= 3.3


@pytest.mark.acceptance(7)
def test_survival_halving(nonp_long_run, detail):
    tr = nonp_long_run
    pb = np.interp([100.0, 200.0], tr.t, tr.survival)
    ratio = pb[1] / pb[0]
    detail(f"P_B(200)/P_B(100) {ratio:.3f} vs 0.125")
    assert abs(ratio / 0.125 - 1) <= 0.3


# 8 -------------------------------------------------------------------------


@pytest.mark.acceptance(8)
def test_bound_state_persistence(detail):
    grid = GridConfig()
    init, _ = grid_bound_state(WELL, grid)
    tr = propagate(WELL, None, 100 * 2 * math.pi, grid=grid, psi_init=init)
    pb0 = tr.survival[0]
    drift = float(np.max(np.abs(tr.survival - pb0)) / pb0)
    detail(f"P_B relative variation {drift:.1e}")
    assert drift <= 1e-3


# 9 -------------------------------------------------------------------------


@pytest.mark.acceptance(9)
def test_F_contour_vs_oracle(detail):
    worst = 0.0
    for beta in (0.5, 1.0, 2.0):
        for M in range(11):
            ref = F_series_oracle(M, beta)
            worst = max(worst, abs(F_contour(M, beta) - ref) / max(1.0, abs(ref)))
    detail(f"contour vs Laurent {worst:.1e}")
    assert worst <= 1e-10


@pytest.mark.acceptance(9)
def test_F_zero_winding(detail):
    counts = [winding_number(lambda m: F_contour(m, 1.0), N, 0.25) for N in range(4, 10)]
    detail(f"windings {counts}")
    assert counts == [1] * 6


@pytest.mark.acceptance(9)
def test_zeta_ratios(detail):
    zeta = {N: find_zero_zeta(N, 1.0).zeta for N in range(4, 10)}
    ratios = [abs(zeta[N + 1] / zeta[N]) for N in range(4, 9)]
    detail("ratios " + ", ".join(f"{r:.4f}" for r in ratios))
    assert all(r < 0.1 for r in ratios)


@pytest.mark.acceptance(9)
def test_monodromy_identity(detail):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(5):
        s = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        M = 1 + 4 * rng.random() + 0.3j * rng.standard_normal()
        worst = max(worst, monodromy_identity_residual((s[0], s[1]), M, 1.0))
    detail(f"monodromy residual {worst:.1e}")
    assert worst <= 1e-6


# 10 ------------------------------------------------------------------------


@pytest.mark.acceptance(10)
def test_wronskian_at_bound_state(detail):
    C = assemble_C(WELL, SpectralPoint.from_sigma(SIGMA0, 1.0), 3)
    _, v = near_null_vector(C)
    balance = flux_balance_check(C, v)
    rho = -C.density(v.values)
    r = np.linspace(2.0, 4.0, 9) * C.domain.r_B
    drift, scale = 0.0, 0.0
    for n in C.modes:
        tr = exterior_extend(C, rho, int(n), r)
        W = wronskian_flux(tr)
        drift = max(drift, float(np.max(np.abs(W - W[0]))))
        # size of the two products that cancel in W
        scale = max(scale, float(np.max(2 * np.abs(tr.values) * np.abs(tr.derivative))))
    detail(f"flux balance {balance:.1e}, W drift {drift / scale:.1e}")
    assert balance <= 1e-6
    assert drift <= 1e-6 * scale


@pytest.mark.acceptance(10)
def test_damped_flux_positive(detail):
    r = np.linspace(3.0, 6.0, 7)
    rng = np.random.default_rng(5)
    lows = []
    for sigma in (0.3 - 0.1j, 0.8 - 1.0j):
        s = SpectralPoint.from_sigma(sigma, 1.0)
        for n in (-3, -1, 0, 2):
            k = kappa(n, s)
            c = complex(*rng.standard_normal(2))
            tr = trace_from_function(lambda rr: c * np.exp(-k * rr), r, n=n, kappa=k)
            lows.append(float(np.min((wronskian_flux(tr) / 2j).real)))
    detail(f"min (2i)^-1 W {min(lows):.2e}")
    assert min(lows) > 0


# 11 ------------------------------------------------------------------------


@pytest.mark.acceptance(11)
def test_synthetic_sqrt_cut(detail):
    cut = CutData.from_function(0, np.sqrt)
    worst = 0.0
    for t in (1.0, 10.0, 100.0, 1000.0):
        ref = math.sqrt(math.pi) / 2 * t**-1.5
        worst = max(worst, abs(branch_cut_contribution(0, cut, t) - ref) / ref)
    detail(f"sqrt cut rel err {worst:.1e}")
    assert worst <= 1e-8


@pytest.mark.acceptance(11)
def test_transseries_vs_oracle(detail):
    psi0 = bump()
    model = build_model(NONP, psi0, [0.0], 32, poles=[NONP_POLE])
    tr = propagate(NONP, psi0, 200.0, probe_x=(0.0,))
    oracle = abs(tr.probe_values[-1, 0])
    got = abs(transseries_eval(model, tr.t[-1]))
    err = abs(got / oracle - 1)
    detail(f"|psi(0, {tr.t[-1]:.1f})| model {got:.5f} vs oracle {oracle:.5f} ({err:.1%})")
    assert err <= 0.1
