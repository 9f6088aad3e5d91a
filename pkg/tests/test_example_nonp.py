import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from floquet_ionization.errors import DomainError
from floquet_ionization.example_nonp import (
    F_contour,
    F_series_oracle,
    M_of_k,
    NonpConfig,
    Y_closed_form,
    Y_ode_residual,
    downward_recursion,
    find_zero_zeta,
    fourier_mode,
    generating_Y,
    integral_L,
    integral_L_asymptotic,
    laurent_coefficient,
    minimal_coefficients,
    monodromy_identity_residual,
    monodromy_residual,
    recursion_residual,
    winding_number,
    zeta_table,
    write_zeta_csv,
)
from floquet_ionization.greens import Domain

CFG = NonpConfig()
DOM = Domain(1, 1.0, 2.0)
# k with M = k^2 + sigma - 2 + V_D = 2.5 at sigma = 0
K25 = math.sqrt(6.5)


class TestConfig:
    def test_beta(self):
        assert CFG.beta == 0.5
        assert NonpConfig(Omega_D=1.0, omega=2.0).beta == 0.5

    @pytest.mark.parametrize("kw", [{"Omega_D": 0.0}, {"V_D": 0.0}, {"omega": -1.0}])
    def test_rejects(self, kw):
        with pytest.raises(DomainError):
            NonpConfig(**kw)

    def test_potential_forcing(self):
        pot = CFG.potential()
        assert np.allclose(pot.Omega_at(1, DOM.d_nodes), -0.5j)


class TestFourierMode:
    def test_zero(self):
        assert fourier_mode(np.zeros(DOM.d_nodes.size), DOM, 1.3) == 0

    def test_indicator_is_sinc(self):
        for k in (0.4, 2.0, 7.5):
            assert fourier_mode(np.ones(DOM.d_nodes.size), DOM, k) == pytest.approx(2 * math.sin(k) / k, rel=1e-12)

    @settings(max_examples=30)
    @given(st.integers(0, 2**31 - 1))
    def test_exponential_order_bound(self, seed):
        rng = np.random.default_rng(seed)
        y = rng.standard_normal(DOM.d_nodes.size) + 1j * rng.standard_normal(DOM.d_nodes.size)
        norm = math.sqrt(np.sum(DOM.d_weights * np.abs(y) ** 2))
        assert abs(fourier_mode(y, DOM, 5j)) <= math.sqrt(2) * math.exp(5) * norm * (1 + 1e-12)


class TestRecursion:
    def test_M(self):
        assert M_of_k(0.0, 0.0, NonpConfig(V_D=2.0)) == 0
        assert M_of_k(1.7, 0.3, CFG) - M_of_k(0.0, 0.3, CFG) == pytest.approx(1.7**2)

    def test_zero_sequence(self):
        assert recursion_residual({n: 0j for n in range(-8, 0)}, 0.5, 0.2, CFG) == 0

    def test_downward_recursion_consistent(self):
        y = downward_recursion((0.3 + 0.1j, -0.2j), 0.7, 0.25, CFG, 12)
        scale = max(abs(v) for v in y.values())
        assert recursion_residual(y, 0.7, 0.25, CFG) <= 1e-12 * scale

    def test_perturbation_is_detected(self):
        k, sigma, eps = 0.7, 0.25, 1e-3
        y = downward_recursion((0.3 + 0.1j, -0.2j), k, sigma, CFG, 8)
        y[-4] += eps
        coef = abs(k * k + sigma - 4 + CFG.V_D)
        assert recursion_residual(y, k, sigma, CFG) >= eps * coef / 2


class TestF:
    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
    def test_integer_M_against_laurent_oracle(self, beta):
        for M in range(0, 11):
            ref = F_series_oracle(M, beta)
            assert abs(F_contour(M, beta) - ref) <= 1e-10 * max(1.0, abs(ref))

    def test_M1_is_bessel_j0(self):
        assert laurent_coefficient(0, 1.0) == pytest.approx(special.j0(2.0), rel=1e-14)
        assert F_contour(1, 1.0) == pytest.approx(2j * math.pi * 0.2238907791412356, abs=1e-12)
        assert abs(F_contour(1, 1.0)) == pytest.approx(1.40674725, abs=1e-8)

    def test_integer_order_bessel_identity(self):
        # a_m = i^m J_m(2 beta)
        for m in range(6):
            assert laurent_coefficient(m, 0.8) == pytest.approx(1j**m * special.jv(m, 1.6), rel=1e-13, abs=1e-16)

    def test_small_beta_limit(self):
        assert F_contour(1, 1e-6) == pytest.approx(2j * math.pi, rel=1e-6)

    def test_non_integer_M(self):
        M = 2.5 + 0.3j
        assert abs(F_contour(M, 1.0) - F_series_oracle(M, 1.0)) <= 1e-10 * abs(F_series_oracle(M, 1.0))

    def test_large_N_segment_asymptotics(self):
        ratio = abs(integral_L(20, 1.0)) / integral_L_asymptotic(20, 1.0)
        assert abs(ratio - 1) <= 0.2

    def test_segment_needs_positive_beta(self):
        with pytest.raises(DomainError):
            integral_L(3, -1.0)


class TestZeros:
    def test_N4(self):
        r = find_zero_zeta(4, 1.0)
        assert r.winding_inner == 1 and r.winding_outer == 1
        assert r.residual < 1e-6
        assert r.zeta == pytest.approx(-0.0389411193, abs=1e-9)

    @pytest.mark.parametrize("N", [5, 6])
    def test_shifted_value_nonzero(self, N):
        z = find_zero_zeta(N, 1.0).zeta
        assert abs(F_contour(N + 1 + z, 1.0)) >= 0.5 * abs(F_contour(N + 1, 1.0))

    def test_zero_count_annulus(self):
        f = lambda m: F_contour(m, 1.0)
        assert winding_number(f, 7, 0.25) == 1
        assert winding_number(f, 7, 0.5) == 1

    def test_ratios_shrink(self):
        rows = zeta_table(range(5, 9), 1.0)
        ratios = [row[-1] for row in rows]
        assert all(r < 0.1 for r in ratios)
        assert ratios == sorted(ratios, reverse=True)

    def test_csv(self, tmp_path):
        rows = zeta_table([4], 1.0)
        write_zeta_csv(rows, tmp_path / "z.csv")
        text = (tmp_path / "z.csv").read_text().splitlines()
        assert text[0].startswith("N,re_zeta") and text[1].startswith("4,")

    def test_invalid_N(self):
        with pytest.raises(DomainError):
            find_zero_zeta(0, 1.0)


class TestGeneratingFunction:
    def test_zero_seeds(self):
        assert generating_Y("series", K25, 0.3, (0, 0), CFG).value == 0
        assert generating_Y("closed_form", K25, 0.3, (0, 0), CFG).value == 0

    def test_ode_residual(self):
        seeds = (0.4 - 0.2j, 1.1 + 0.3j)
        z = 0.3 * cmath.exp(1j * math.pi / 5)
        Y = lambda zz: Y_closed_form(seeds, 2.5, 1.0, abs(zz), cmath.phase(zz))
        assert abs(Y_ode_residual(Y, 2.5, 1.0, z, seeds)) <= 1e-8

    def test_series_matches_closed_form_on_recessive_seeds(self):
        a = minimal_coefficients(2.5, CFG.beta, 0.7 - 0.1j, 2)
        seeds = (a[0], a[1])
        for z in (0.5, 0.5j, -0.5 + 0j):
            out = generating_Y("series", K25, z, seeds, CFG)
            assert out.converged
            assert abs(out.value - out.closed_form) <= 1e-8 * abs(out.closed_form)

    def test_random_seeds_diverge(self):
        out = generating_Y("series", K25, 0.5, (0.3 + 0.2j, -0.6j), CFG)
        assert not out.converged
        assert np.isfinite(out.closed_form)

    def test_series_domain(self):
        with pytest.raises(DomainError):
            generating_Y("series", K25, 1.2, (1, 1), CFG)


class TestMonodromy:
    def test_trivial_seeds(self):
        assert monodromy_residual((0, 0), 0.4, 0.1, CFG) == 0
        M = M_of_k(0.4, 0.1, CFG)
        seeds = (F_contour(M + 2, CFG.beta), -F_contour(M + 1, CFG.beta))
        assert monodromy_residual(seeds, 0.4, 0.1, CFG) == 0

    def test_generic_seeds_nonzero(self):
        rng = np.random.default_rng(4)
        seeds = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        scale = abs(seeds).sum()
        for k in np.linspace(0.1, 3.0, 20):
            M = M_of_k(k, 0.0, CFG)
            fmax = max(abs(F_contour(M + 1, CFG.beta)), abs(F_contour(M + 2, CFG.beta)))
            assert abs(monodromy_residual(seeds, k, 0.0, CFG)) >= 1e-3 * scale * fmax

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_identity_random_seeds(self, seed):
        rng = np.random.default_rng(seed)
        s = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        M = 1.5 + 2 * rng.random() + 0.2j * rng.standard_normal()
        assert monodromy_identity_residual((s[0], s[1]), M, 1.0) <= 1e-6
