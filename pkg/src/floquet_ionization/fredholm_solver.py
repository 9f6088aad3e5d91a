"""Solving (I - C(sigma)) y = w, resolvent scans and pole location.

Norms are the H-norm on the D nodes: quadrature weights times max(|n|,1)^gamma.
Singular values are those of D^{1/2} (I - C) D^{-1/2} with D that Gram diagonal.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ContractionError, DomainError, NearSingularError, NonSimplePoleError
from .floquet_system import ModeVector, assemble_C, build_source, h_norm
from .greens import SpectralPoint

SINGULAR_THRESHOLD = 1e-10
FLAG_RATIO = 1e-3
RESIDUE_POINTS = 32
SIMPLICITY_WINDOW = (-1.15, -0.85)


class Factorized:
    """Sparse LU of I - C with weighted solves and singular-value estimates."""

    def __init__(self, C, gamma=1.5):
        self.C = C
        self.A = C.system_matrix()
        self.lu = spla.splu(self.A)
        self.sqw = np.sqrt(C.weights(gamma))

    def solve(self, b, trans="N"):
        return self.lu.solve(np.asarray(b, dtype=complex), trans=trans)

    def _inverse_gram(self):
        d, n = self.sqw, self.A.shape[0]

        def mv(x):
            z = self.solve(d * np.ravel(x), trans="H")
            return d * self.solve(z / d**2)

        return spla.LinearOperator((n, n), matvec=mv, dtype=complex)

    def smallest_singular(self, tol=1e-6, seed=0):
        """(s_min, right singular vector of the unweighted system, as flat array)."""
        n = self.A.shape[0]
        v0 = np.random.default_rng(seed).standard_normal(n).astype(complex)
        vals, vecs = spla.eigsh(self._inverse_gram(), k=1, which="LM", v0=v0, tol=tol)
        smin = 1.0 / math.sqrt(max(vals[0].real, 1e-300))
        return smin, vecs[:, 0] / self.sqw


def _flat(y):
    return y.values.ravel()


def _mv(C, flat):
    return ModeVector(flat.reshape(C.modes.size, C.n_points), C.domain.d_weights)


def solve(C, w, check=True, refine=True):
    """y with y = w + C y. Raises NearSingularError when I - C is numerically singular."""
    fac = Factorized(C)
    return solve_factorized(fac, w, check, refine)


def solve_factorized(fac, w, check=True, refine=True):
    C = fac.C
    b = _flat(w)
    x = fac.solve(b)
    if refine:
        x = x + fac.solve(b - fac.A @ x)
    if check:
        y = _mv(C, x)
        res = h_norm(y - w - C.apply(y))
        scale = max(h_norm(w), 1e-300)
        if not np.isfinite(res) or res > 1e-10 * scale:
            smin, _ = fac.smallest_singular()
            raise NearSingularError(f"I - C singular to working precision (s_min={smin:.3g})", smin)
        if h_norm(w) > 0 and h_norm(y) > 1.0 / SINGULAR_THRESHOLD * h_norm(w):
            smin, _ = fac.smallest_singular()
            if smin < SINGULAR_THRESHOLD:
                raise NearSingularError(f"I - C near singular (s_min={smin:.3g})", smin)
    return _mv(C, x)


def operator_norm(C, iters=300, tol=1e-10, seed=0, gamma=1.5):
    """Largest singular value of C in the H-norm, by power iteration on C^H C."""
    M = C.matrix()
    d = np.sqrt(C.weights(gamma))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(M.shape[0]) + 1j * rng.standard_normal(M.shape[0])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        z = d * (M @ (x / d))
        x_new = (M.conj().T @ (d * z)) / d
        lam = np.linalg.norm(x_new)
        if lam == 0:
            return 0.0
        x = x_new / lam
        new = math.sqrt(lam)
        if abs(new - est) <= tol * new:
            return new
        est = new
    return est


@dataclass
class NeumannResult:
    y: ModeVector
    iterations: int
    rate: float
    norm_C: float


def neumann_solve(C, w, kmax=200, tol=1e-13, norm_C=None):
    """Sum of C^k w; requires ||C|| < 1 in the H-norm."""
    norm_C = operator_norm(C) if norm_C is None else norm_C
    if norm_C >= 1:
        raise ContractionError(f"||C|| = {norm_C:.4g} >= 1; Neumann series not guaranteed", norm_C)
    y = w
    term = w
    scale = max(h_norm(w), 1e-300)
    sizes = [h_norm(w)]
    k = 0
    for k in range(1, kmax + 1):
        term = C.apply(term)
        y = y + term
        sizes.append(h_norm(term))
        if sizes[-1] <= tol * scale:
            break
    ratios = [b / a for a, b in zip(sizes[:-1], sizes[1:]) if a > 0 and b > 0]
    rate = float(np.exp(np.mean(np.log(ratios[-5:])))) if ratios else 0.0
    return NeumannResult(y, k, rate, norm_C)


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------


@dataclass
class ResolventScan:
    sigmas: np.ndarray
    us: np.ndarray
    smin: np.ndarray
    flags: list
    threshold: float
    refined: dict = field(default_factory=dict)

    def to_csv(self, path):
        flagged = set(self.flags)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["re_sigma", "im_sigma", "re_u", "im_u", "smallest_singular_value", "flagged"])
            for i, (s, u, m) in enumerate(zip(self.sigmas, self.us, self.smin)):
                wr.writerow([f"{s.real:.17g}", f"{s.imag:.17g}", f"{u.real:.17g}", f"{u.imag:.17g}", f"{m:.17g}", int(i in flagged)])


def smallest_singular_value(pot, s, N_modes, regularize_a="auto"):
    C = assemble_C(pot, s, N_modes, regularize_a)
    return Factorized(C).smallest_singular()[0]


def real_axis_path(omega, samples=200, imag=0.0):
    return [SpectralPoint.from_sigma(k * omega / samples + 1j * imag, omega) for k in range(samples)]


def _golden_min(f, a, b, tol):
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def resolvent_scan(pot, path, N_modes, regularize_a="auto", psi0=None, refine=True):
    """Smallest singular value of I - C along ``path``.

    A sample is flagged when it is a local minimum and the minimum, refined between its
    neighbours by golden section along the path, drops below FLAG_RATIO times the median.
    """
    sm = np.array([smallest_singular_value(pot, s, N_modes, regularize_a) for s in path])
    sig = np.array([s.sigma for s in path])
    us = np.array([s.u for s in path])
    thr = FLAG_RATIO * float(np.median(sm))
    flags, refined = [], {}
    for i in range(len(sm)):
        left = sm[i - 1] if i > 0 else np.inf
        right = sm[i + 1] if i < len(sm) - 1 else np.inf
        if not (sm[i] <= left and sm[i] <= right):
            continue
        best = sm[i]
        if refine and 0 < i < len(sm) - 1:
            a, b = sig[i - 1], sig[i + 1]

            def f(t):
                return smallest_singular_value(pot, SpectralPoint.from_sigma(a + t * (b - a), pot.omega), N_modes, regularize_a)

            t, best = _golden_min(f, 0.0, 1.0, 1e-6)
            refined[i] = (complex(a + t * (b - a)), float(best))
        if best < thr:
            flags.append(i)
    return ResolventScan(sig, us, sm, flags, thr, refined)


# ---------------------------------------------------------------------------
# poles
# ---------------------------------------------------------------------------


@dataclass
class PoleRecord:
    sigma0: complex
    u0: complex
    residue: ModeVector | None
    simplicity_fit: float
    classification: str
    smin: float

    def to_json(self):
        rn = [] if self.residue is None else [float(v) for v in self.residue.mode_norms()]
        return json.dumps(
            {
                "sigma0": [self.sigma0.real, self.sigma0.imag],
                "u0": [self.u0.real, self.u0.imag],
                "simplicity_fit": self.simplicity_fit,
                "classification": self.classification,
                "smallest_singular_value": self.smin,
                "residue_norms": rn,
            },
            indent=2,
        )


def _muller(f, x0, x1, x2, tol=1e-13, maxit=60):
    f0, f1, f2 = f(x0), f(x1), f(x2)
    for _ in range(maxit):
        h1, h2 = x1 - x0, x2 - x1
        d1, d2 = (f1 - f0) / h1, (f2 - f1) / h2
        a = (d2 - d1) / (h2 + h1)
        b = a * h2 + d2
        disc = np.sqrt(b * b - 4 * a * f2)
        den = b + disc if abs(b + disc) > abs(b - disc) else b - disc
        dx = -2 * f2 / den if den != 0 else 1e-3
        x0, x1, x2 = x1, x2, x2 + dx
        f0, f1, f2 = f1, f2, f(x2)
        if abs(dx) <= tol * max(1.0, abs(x2)):
            return x2
    return x2


def _point(sigma, omega, near_zero_u=None):
    if near_zero_u is not None:
        return SpectralPoint.from_u(near_zero_u, omega)
    return SpectralPoint.from_sigma(sigma, omega)


def locate_pole(pot, sigma_guess, N_modes, regularize_a="auto", psi0=None, radius=None, seed=1, in_u=False, max_step=None):
    """Refine a pole of (I - C)^{-1} near ``sigma_guess`` and build its PoleRecord.

    The refinement is Muller's method on 1/(v^H (I - C)^{-1} b) for fixed random v, b,
    which is analytic with a simple zero at the pole. Near sigma = 0 pass in_u=True and
    a guess for u instead of sigma. A refinement that ends farther than ``max_step``
    (default omega/4) from the guess means there is no pole nearby and is rejected.
    """
    omega = pot.omega
    rng = np.random.default_rng(seed)
    C0 = assemble_C(pot, _point(sigma_guess, omega, sigma_guess if in_u else None), N_modes, regularize_a)
    n = C0.size
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)

    def sp(z):
        return SpectralPoint.from_u(z, omega) if in_u else SpectralPoint.from_sigma(z, omega)

    def g(z):
        fac = Factorized(assemble_C(pot, sp(z), N_modes, regularize_a))
        return 1.0 / np.vdot(v, fac.solve(b))

    z0 = complex(sigma_guess)
    h = 1e-3 * omega
    try:
        z = _muller(g, z0 - h, z0 + h, z0)
    except DomainError as exc:
        raise NonSimplePoleError(f"pole search from {z0} left the analytic domain ({exc})") from exc
    max_step = 0.25 * omega if max_step is None else max_step
    if not np.isfinite(z) or abs(z - z0) > max_step:
        raise NonSimplePoleError(f"no resolved pole within {max_step:g} of {z0}")
    s0 = sp(z)
    if not in_u and not (-1e-9 <= s0.sigma.real < omega):
        raise DomainError(f"refined pole {s0.sigma} left the strip Re sigma in [0, omega)")
    smin0 = Factorized(assemble_C(pot, s0, N_modes, regularize_a)).smallest_singular()[0]

    radius = radius or 1e-2 * omega
    # blow-up rate of ||(I - C)^{-1}|| = 1 / s_min
    deltas = radius * np.logspace(-1, -3, 5)
    inv = [1.0 / Factorized(assemble_C(pot, sp(z + d), N_modes, regularize_a)).smallest_singular()[0] for d in deltas]
    slope = float(np.polyfit(np.log(deltas), np.log(inv), 1)[0])
    if not SIMPLICITY_WINDOW[0] <= slope <= SIMPLICITY_WINDOW[1]:
        raise NonSimplePoleError(f"resolvent blow-up slope {slope:.3f} outside {SIMPLICITY_WINDOW}")

    residue = pole_residue(pot, z, N_modes, regularize_a, psi0, radius, in_u) if psi0 is not None else None
    if abs(s0.sigma.imag) > 1e-6 * omega:
        cls = "off-axis"
    elif abs(s0.sigma) < 1e-6 * omega:
        cls = "resonance"
    else:
        cls = "eigenvalue"
    return PoleRecord(s0.sigma, s0.u, residue, slope, cls, smin0)


def pole_residue(pot, z0, N_modes, regularize_a="auto", psi0=None, radius=None, in_u=False, points=RESIDUE_POINTS):
    """(1/2 pi i) contour integral of psi_hat on a circle of ``radius`` around z0 (trapezoid)."""
    radius = radius or 1e-2 * pot.omega
    acc = None
    for k in range(points):
        e = np.exp(2j * math.pi * k / points)
        z = z0 + radius * e
        s = SpectralPoint.from_u(z, pot.omega) if in_u else SpectralPoint.from_sigma(z, pot.omega)
        C = assemble_C(pot, s, N_modes, regularize_a)
        src = build_source(pot, psi0, C)
        y = solve(C, src.w, check=False)
        full = src.gpsi0.values - 1j * src.psi1.values + y.values
        term = full * radius * e / points
        acc = term if acc is None else acc + term
    return ModeVector(acc, pot.domain.d_weights)


def near_null_vector(C):
    """(s_min, unit H-norm right singular vector) of I - C."""
    smin, x = Factorized(C).smallest_singular()
    y = _mv(C, x)
    return smin, y * (1.0 / h_norm(y))


# ---------------------------------------------------------------------------
# threshold split
# ---------------------------------------------------------------------------


def even_odd_split(y_plus, y_minus, u, y_zero_derivative=None):
    """A = (y(u) + y(-u))/2, B = (y(u) - y(-u))/(2u).

    At u = 0 pass y_plus = y(0) and ``y_zero_derivative`` = dy/du (e.g. from
    ``derivative_in_u``); then A = y(0), B = dy/du.
    """
    if u == 0:
        if y_zero_derivative is None:
            raise DomainError("u = 0 needs the one-sided derivative in u")
        return y_plus, y_zero_derivative
    return (y_plus + y_minus) * 0.5, (y_plus - y_minus) * (1.0 / (2 * u))


def solve_at_u(pot, u, N_modes, psi0, regularize_a="auto"):
    C = assemble_C(pot, SpectralPoint.from_u(u, pot.omega), N_modes, regularize_a)
    src = build_source(pot, psi0, C)
    return solve(C, src.w), src, C


def derivative_in_u(pot, N_modes, psi0, h=1e-3, regularize_a="auto"):
    """dy/du at u = 0 by a Richardson-extrapolated central difference; returns (dy, error estimate)."""

    def cd(hh):
        yp = solve_at_u(pot, hh, N_modes, psi0, regularize_a)[0]
        ym = solve_at_u(pot, -hh, N_modes, psi0, regularize_a)[0]
        return (yp - ym) * (1.0 / (2 * hh))

    d1, d2 = cd(h), cd(h / 2)
    best = (d2 * 4.0 - d1) * (1.0 / 3.0)
    return best, h_norm(best - d2)
