import math

import numpy as np
import pytest

from floquet_ionization.errors import ContractionError, FloquetError, NearSingularError
from floquet_ionization.floquet_system import ModeVector, PotentialSpec, assemble_C, build_source, bump, h_norm
from floquet_ionization.fredholm_solver import (
    Factorized,
    derivative_in_u,
    even_odd_split,
    locate_pole,
    neumann_solve,
    operator_norm,
    real_axis_path,
    resolvent_scan,
    solve,
    solve_at_u,
)
from floquet_ionization.greens import Domain, SpectralPoint
from floquet_ionization.tdse_oracle import square_well_levels, square_well_state

DOM = Domain(1, 1.0, 2.0)
WELL = PotentialSpec.square_well(2.0)
NONP = PotentialSpec.nonp()
# sigma0 = -E0 mod omega for the depth-2 well
E0 = square_well_levels(2.0)[0]
SIGMA0 = (-E0) % 1.0


def free_pot():
    return PotentialSpec(1.0, lambda x: np.zeros(np.shape(x)), {}, DOM)


def random_w(C, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((C.modes.size, C.n_points)) + 1j * rng.standard_normal((C.modes.size, C.n_points))
    return ModeVector(v, DOM.d_weights)


class TestSolve:
    def test_zero_rhs(self):
        C = assemble_C(NONP, SpectralPoint.from_sigma(0.5 - 0.2j, 1.0), 4)
        y = solve(C, ModeVector.zeros(4, DOM.d_weights))
        assert np.all(y.values == 0)

    def test_free_problem(self):
        C = assemble_C(free_pot(), SpectralPoint.from_sigma(0.5 - 0.2j, 1.0), 3, regularize_a=None)
        w = random_w(C)
        assert np.allclose(solve(C, w).values, w.values)

    def test_fixed_point_residual(self):
        C = assemble_C(NONP, SpectralPoint.from_sigma(0.5 - 0.2j, 1.0), 8)
        w = random_w(C, 2)
        y = solve(C, w)
        assert h_norm(y - w - C.apply(y)) <= 1e-12 * h_norm(w)

    def test_singular_system(self):
        C = assemble_C(WELL, SpectralPoint.from_sigma(SIGMA0, 1.0), 2)
        with pytest.raises(NearSingularError) as err:
            solve(C, random_w(C))
        assert err.value.smallest_singular_value < 1e-8


class TestNeumann:
    def test_zero_operator(self):
        C = assemble_C(free_pot(), SpectralPoint.from_sigma(0.5 - 0.2j, 1.0), 2, regularize_a=None)
        w = random_w(C)
        res = neumann_solve(C, w)
        assert res.iterations == 1
        assert np.array_equal(res.y.values, w.values)

    def test_far_from_axis_matches_direct(self):
        s = SpectralPoint.from_sigma(0.3 - 200j, 1.0)
        C = assemble_C(NONP, s, 8)
        w = build_source(NONP, bump(), C).w
        res = neumann_solve(C, w, tol=1e-14)
        assert res.norm_C < 0.5
        assert res.iterations <= 20
        direct = solve(C, w)
        assert h_norm(res.y - direct) <= 1e-9 * h_norm(direct)

    def test_not_contractive(self):
        C = assemble_C(WELL, SpectralPoint.from_sigma(SIGMA0, 1.0), 2)
        with pytest.raises(ContractionError):
            neumann_solve(C, random_w(C))

    def test_operator_norm_against_dense_svd(self):
        C = assemble_C(NONP, SpectralPoint.from_sigma(0.3 - 1j, 1.0), 3)
        d = np.sqrt(C.weights())
        ref = np.linalg.norm(d[:, None] * C.matrix().toarray() / d[None, :], 2)
        assert operator_norm(C) == pytest.approx(ref, rel=1e-8)

    def test_smallest_singular_against_dense_svd(self):
        C = assemble_C(NONP, SpectralPoint.from_sigma(0.3, 1.0), 3)
        d = np.sqrt(C.weights())
        A = np.eye(C.size) - C.matrix().toarray()
        ref = np.linalg.svd(d[:, None] * A / d[None, :], compute_uv=False).min()
        assert Factorized(C).smallest_singular(tol=1e-10)[0] == pytest.approx(ref, rel=1e-6)


class TestScan:
    def test_well_is_flagged_at_its_level(self):
        path = real_axis_path(1.0, 50)
        scan = resolvent_scan(WELL, path, 2)
        assert len(scan.flags) == 1
        i = scan.flags[0]
        assert abs(scan.sigmas[i].real - SIGMA0) <= 1.0 / 50
        assert abs(scan.refined[i][0].real - SIGMA0) < 1e-5

    def test_far_path_is_well_conditioned(self):
        path = [SpectralPoint.from_sigma(k / 10 - 100j, 1.0) for k in range(10)]
        scan = resolvent_scan(NONP, path, 4)
        assert not scan.flags
        assert scan.smin.min() >= 0.5

    def test_csv(self, tmp_path):
        scan = resolvent_scan(NONP, real_axis_path(1.0, 5, imag=-0.5), 2)
        scan.to_csv(tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert len(lines) == 6 and lines[0].startswith("re_sigma")


class TestPoles:
    def test_square_well_pole(self):
        phi, E = square_well_state(2.0)
        rec = locate_pole(WELL, SIGMA0 + 0.003, 2, psi0=bump())
        assert abs(rec.sigma0 - SIGMA0) < 1e-6
        assert -1.15 <= rec.simplicity_fit <= -0.85
        assert rec.classification == "eigenvalue"
        # rank one: only the mode with sigma0 + n omega = -E0 carries residue
        norms = rec.residue.mode_norms()
        n_pole = round(-E0 - SIGMA0)
        assert np.argmax(norms) == n_pole + rec.residue.N
        assert np.sort(norms)[-2] < 1e-8 * norms.max()
        r = rec.residue.mode(n_pole)
        f = phi(DOM.d_nodes)
        w = DOM.d_weights
        overlap = abs(np.sum(w * np.conj(f) * r)) / math.sqrt(np.sum(w * f * f) * np.sum(w * abs(r) ** 2))
        assert overlap >= 0.999

    def test_no_pole_region(self):
        with pytest.raises(FloquetError):
            locate_pole(WELL, 0.7 - 0.05j, 2, max_step=0.1)

    def test_to_json(self):
        rec = locate_pole(WELL, SIGMA0 + 0.003, 1)
        assert '"classification": "eigenvalue"' in rec.to_json()


class TestEvenOdd:
    S_U = 0.3 + 0.1j

    def test_reconstruction(self):
        yp, _, _ = solve_at_u(NONP, self.S_U, 4, bump())
        ym, _, _ = solve_at_u(NONP, -self.S_U, 4, bump())
        A, B = even_odd_split(yp, ym, self.S_U)
        assert np.allclose((A + B * self.S_U).values, yp.values, atol=1e-14)

    def test_even_modes_without_forcing(self):
        yp, _, _ = solve_at_u(WELL, self.S_U, 3, bump())
        ym, _, _ = solve_at_u(WELL, -self.S_U, 3, bump())
        _, B = even_odd_split(yp, ym, self.S_U)
        b = B.mode_norms()
        # kappa_n for n != 0 depends on u^2 only
        assert np.max(np.delete(b, 3)) < 1e-10 * max(b[3], 1e-300) + 1e-12

    def test_quadratic_consistency(self):
        u = 0.2 + 0.05j
        split = {}
        for f in (1, 2, 4):
            yp, _, _ = solve_at_u(NONP, u / f, 4, bump())
            ym, _, _ = solve_at_u(NONP, -u / f, 4, bump())
            split[f] = even_odd_split(yp, ym, u / f)
        d1 = h_norm(split[1][0] - split[2][0])
        d2 = h_norm(split[2][0] - split[4][0])
        assert math.log2(d1 / d2) >= 1.9

    def test_zero_needs_derivative(self):
        y0, _, _ = solve_at_u(NONP, 0.0, 2, bump())
        with pytest.raises(FloquetError):
            even_odd_split(y0, y0, 0)
        dy, err = derivative_in_u(NONP, 2, bump())
        A, B = even_odd_split(y0, y0, 0, dy)
        assert A is y0 and B is dy
        # the recorded truncation error bounds the distance to a finer-step estimate
        ref, _ = derivative_in_u(NONP, 2, bump(), h=2.5e-4)
        assert h_norm(dy - ref) <= 2 * err
        assert err < 1e-5 * h_norm(dy)
