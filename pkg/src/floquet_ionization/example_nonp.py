"""The characteristic-function example: V_D chi_D + 2 Omega_D chi_D sin(omega t).

On the Fourier side the negative modes obey a three-term recursion. Its
generating function Y solves a first-order ODE in z, and the monodromy of Y
around z = 0 is expressed through

    F(M) = (1 - e^{-2 pi i M}) int_L e^{i beta (s + 1/s)} s^{-M} ds + int_{C1} (same) ds,

with L = [0, -i] (principal log) and C1 the unit circle traversed from -i
counterclockwise on the continuous branch arg s in [-pi/2, 3pi/2].
"""

from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ResolutionError
from .greens import Domain, gauss_legendre


@dataclass(frozen=True)
class NonpConfig:
    V_D: float = -2.0
    Omega_D: float = 0.5
    omega: float = 1.0
    dimension: int = 1
    radius: float = 1.0

    def __post_init__(self):
        if self.Omega_D == 0 or self.V_D == 0:
            raise DomainError("the example needs V_D != 0 and Omega_D != 0")
        if self.omega <= 0:
            raise DomainError("omega must be positive")

    @property
    def beta(self):
        return self.Omega_D / self.omega

    def potential(self, domain=None):
        from .floquet_system import PotentialSpec

        domain = domain or Domain(self.dimension, self.radius, 2 * self.radius)
        return PotentialSpec.nonp(self.V_D, self.Omega_D, self.omega, domain)


def fourier_mode(values, domain, k):
    """int_D y e^{-i k x} dx from samples on the D nodes (d=3: radial, |k| enters)."""
    x, w = domain.d_nodes, domain.d_weights
    k = complex(k)
    if domain.dimension == 1:
        return complex(np.sum(w * values * np.exp(-1j * k * x)))
    kr = k * x
    sinc = np.where(np.abs(kr) < 1e-8, 1 - kr**2 / 6, np.sin(kr) / np.where(kr == 0, 1, kr))
    return complex(np.sum(w * values * sinc))


def M_of_k(k, sigma, cfg):
    return (k * k + sigma - 2 * cfg.omega + cfg.V_D) / cfg.omega


def downward_recursion(seeds, k, sigma, cfg, count):
    """y_n for n = -1, -2, ..., -count from (y_{-1}, y_{-2}) by the three-term relation.

    (k^2 + sigma + n omega + V_D) y_n = i Omega_D (y_{n+1} - y_{n-1}).
    """
    out = {-1: complex(seeds[0]), -2: complex(seeds[1])}
    for n in range(-2, -count, -1):
        coef = k * k + sigma + n * cfg.omega + cfg.V_D
        out[n - 1] = out[n + 1] - coef * out[n] / (1j * cfg.Omega_D)
    return out


def recursion_residual(yhat, k, sigma, cfg):
    """max over n <= -2 (with both neighbours present) of the three-term residual."""
    worst = 0.0
    for n in sorted(yhat):
        if n > -2 or (n + 1) not in yhat or (n - 1) not in yhat:
            continue
        coef = k * k + sigma + n * cfg.omega + cfg.V_D
        r = abs(coef * yhat[n] - 1j * cfg.Omega_D * (yhat[n + 1] - yhat[n - 1]))
        worst = max(worst, r)
    return worst


# ---------------------------------------------------------------------------
# contour integrals
# ---------------------------------------------------------------------------


def _log_branch(s, theta):
    return math.log(abs(s)) + 1j * theta


def _L_tmax(beta, a, rho=1.0):
    # e^{-(beta/rho) e^t + a t} must drop below ~e^{-750}
    t = max(1.0, math.log(max(a, 1.0) * rho / beta + 1.0))
    for _ in range(200):
        if beta / rho * math.exp(t) - a * t > 760:
            return t
        t += 0.25
    return t


def integral_L(M, beta, rho=1.0, panels=48, order=24, weight=None):
    """int over [0, -i rho] of e^{i beta (s + 1/s)} s^{-M} ds with arg s = -pi/2.

    ``weight``: optional pair (c1, c2) for c1 s^{-M-1} + c2 s^{-M-2} instead of s^{-M}.
    """
    if beta <= 0:
        raise DomainError("the segment L = [0, -i] needs beta > 0")
    M = complex(M)
    a = max(abs(M) + 2.0, 1.0)
    tmax = _L_tmax(beta, a, rho)
    x, w = gauss_legendre(order)
    edges = np.linspace(0.0, tmax, panels + 1)
    t = np.concatenate([0.5 * (b - c) * x + 0.5 * (b + c) for c, b in zip(edges[:-1], edges[1:])])
    wt = np.concatenate([0.5 * (b - c) * w for c, b in zip(edges[:-1], edges[1:])])
    logs = math.log(rho) - t - 0.5j * math.pi
    s = np.exp(logs)
    expo = 1j * beta * s + 1j * beta / s
    if weight is None:
        f = np.exp(expo - (M - 1) * logs)
    else:
        f = weight[0] * np.exp(expo - M * logs) + weight[1] * np.exp(expo - (M + 1) * logs)
    # s = rho e^{-t - i pi/2}, ds = -s dt, oriented from 0 to -i rho
    return complex(np.sum(wt * f))


def integral_arc(M, beta, rho, theta0, theta1, panels=16, order=32, weight=None):
    """int over s = rho e^{i theta}, theta from theta0 to theta1, same integrand, continuous branch."""
    x, w = gauss_legendre(order)
    edges = np.linspace(theta0, theta1, panels + 1)
    th = np.concatenate([0.5 * (b - c) * x + 0.5 * (b + c) for c, b in zip(edges[:-1], edges[1:])])
    wt = np.concatenate([0.5 * (b - c) * w for c, b in zip(edges[:-1], edges[1:])])
    logs = math.log(rho) + 1j * th
    s = np.exp(logs)
    expo = 1j * beta * (s + 1 / s)
    M = complex(M)
    if weight is None:
        f = np.exp(expo - (M - 1) * logs)
    else:
        f = weight[0] * np.exp(expo - M * logs) + weight[1] * np.exp(expo - (M + 1) * logs)
    return complex(np.sum(wt * 1j * f))


def integral_C1(M, beta):
    return integral_arc(M, beta, 1.0, -0.5 * math.pi, 1.5 * math.pi)


def one_minus_phase(M):
    """1 - e^{-2 pi i M}, exact zero at integers and accurate next to them."""
    M = complex(M)
    zeta = M - round(M.real)
    if zeta == 0:
        return 0j
    return 2j * cmath.sin(math.pi * zeta) * cmath.exp(-1j * math.pi * zeta)


def F_contour(M, beta):
    """F(M) from the segment-plus-circle decomposition; entire in M."""
    M = complex(M)
    pref = one_minus_phase(M)
    out = integral_C1(M, beta)
    if pref != 0:
        out += pref * integral_L(M, beta)
    return out


def laurent_coefficient(m, beta, tol=1e-18):
    """a_m of e^{i beta (s + 1/s)} = sum a_m s^m; a_{-m} = a_m."""
    m = abs(int(m))
    ib = 1j * beta
    term = cmath.exp(m * cmath.log(ib) - math.lgamma(m + 1)) if m else 1 + 0j
    total = term
    l = 0
    while True:
        l += 1
        term = term * ib * ib / (l * (m + l))
        total += term
        # remaining terms shrink geometrically once l > |beta|
        if l > abs(beta) and abs(term) <= tol * abs(total):
            break
        if l > 500:
            raise ResolutionError("Laurent series did not converge")
    return total


def F_series_oracle(M, beta, jmax=200):
    """F(M) from series: Laurent coefficients for the circle, incomplete gammas for L.

    Integer M gives 2 pi i a_{M-1}. Otherwise
    int_L = sum_j (i beta)^j / j! e^{-i pi (1 + j - M)/2} beta^{1+j-M} Gamma(M - j - 1, beta),
    int_C1 = sum_m a_m e^{-i pi (m + 1 - M)/2} (e^{-2 pi i M} - 1) / (m + 1 - M).
    """
    import mpmath as mp

    Mc = complex(M)
    if abs(Mc.imag) == 0 and float(Mc.real).is_integer():
        return 2j * math.pi * laurent_coefficient(int(Mc.real) - 1, beta)
    mp.mp.dps = 40
    Mm = mp.mpc(Mc.real, Mc.imag)
    b = mp.mpf(beta)
    L = mp.mpc(0)
    for j in range(jmax):
        term = (1j * b) ** j / mp.factorial(j) * mp.exp(-1j * mp.pi * (1 + j - Mm) / 2) * b ** (1 + j - Mm) * mp.gammainc(Mm - j - 1, b)
        L += term
        if j > 5 and abs(term) < mp.mpf(10) ** -35 * abs(L):
            break
    circ = mp.mpc(0)
    e2 = mp.exp(-2j * mp.pi * Mm) - 1
    for m in range(-jmax, jmax + 1):
        a = laurent_coefficient(m, beta)
        circ += a * mp.exp(-1j * mp.pi * (m + 1 - Mm) / 2) * e2 / (m + 1 - Mm)
    total = (1 - mp.exp(-2j * mp.pi * Mm)) * L + circ
    return complex(total)


def integral_L_asymptotic(N, beta):
    """Leading-order |int_L| for large N: sqrt(2 pi) beta^{1-N} N^{N-3/2} e^{-N}."""
    return math.sqrt(2 * math.pi) * beta ** (1 - N) * N ** (N - 1.5) * math.exp(-N)


# ---------------------------------------------------------------------------
# zeros zeta_N
# ---------------------------------------------------------------------------


def winding_number(f, center, radius, samples=720):
    """(1 / 2 pi) total change of arg f along the circle |z - center| = radius."""
    th = np.linspace(0, 2 * math.pi, samples + 1)
    vals = np.array([f(center + radius * cmath.exp(1j * t)) for t in th])
    ph = np.unwrap(np.angle(vals))
    return int(round((ph[-1] - ph[0]) / (2 * math.pi)))


@dataclass
class ZetaResult:
    N: int
    zeta: complex | None
    bound: float | None
    residual: float
    winding_inner: int
    winding_outer: int
    iterations: int


def find_zero_zeta(N, beta, tol=1e-14, maxit=100, r_inner=0.25, r_outer=0.5):
    """Zero N + zeta_N of F by the fixed point zeta = -zeta/(1 - e^{-2 pi i zeta}) int_C1 / int_L.

    Uniqueness in |zeta| < r_inner and absence in r_inner < |zeta| < r_outer are checked by
    winding numbers. Returns an interval bound instead of a point when zeta underflows.
    """
    if N < 1:
        raise DomainError("N must be a positive integer")

    def rhs(z):
        c1 = integral_C1(N + z, beta)
        lint = integral_L(N + z, beta)
        fac = 1 / (2j * math.pi) if abs(z) < 1e-12 else z / one_minus_phase(z)
        return -fac * c1 / lint

    z = rhs(0.0)
    it = 0
    for it in range(1, maxit + 1):
        new = rhs(z)
        done = abs(new - z) <= tol * max(abs(new), 1e-300)
        z = new
        if done:
            break
    w_in = winding_number(lambda m: F_contour(m, beta), N, r_inner)
    w_out = winding_number(lambda m: F_contour(m, beta), N, r_outer)
    ref = abs(F_contour(N + 0.1, beta))
    res = abs(F_contour(N + z, beta)) / ref
    if abs(z) < 1e-300:
        return ZetaResult(N, None, 1e-300, res, w_in, w_out, it)
    return ZetaResult(N, complex(z), None, res, w_in, w_out, it)


def zeta_table(Ns, beta):
    """Rows (N, Re zeta, Im zeta, |F(N + zeta)|, winding, |zeta_{N+1}/zeta_N|)."""
    results = {N: find_zero_zeta(N, beta) for N in list(Ns) + [max(Ns) + 1]}
    rows = []
    for N in Ns:
        r = results[N]
        z = r.zeta if r.zeta is not None else 0j
        nxt = results[N + 1].zeta
        ratio = abs(nxt / z) if (nxt is not None and z != 0) else float("nan")
        rows.append((N, z.real, z.imag, abs(F_contour(N + z, beta)), r.winding_inner, ratio))
    return rows


def write_zeta_csv(rows, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["N", "re_zeta", "im_zeta", "abs_F", "winding", "ratio_next"])
        for N, re, im, af, wnd, ratio in rows:
            wr.writerow([N, f"{re:.17g}", f"{im:.17g}", f"{af:.17g}", wnd, f"{ratio:.17g}"])


# ---------------------------------------------------------------------------
# generating function
# ---------------------------------------------------------------------------


@dataclass
class YValue:
    value: complex
    converged: bool
    closed_form: complex | None = None
    terms: int = 0


def minimal_coefficients(M, beta, a0, count, start=None):
    """a_m = y_{-m-2}, m = -1..count-1, on the recessive solution with a_0 = a0 (Miller's method).

    (M - m) a_m = i beta (a_{m-1} - a_{m+1}) is run from m = start downwards, which is the
    stable direction for the solution that decays like beta^m / m!.
    """
    M = complex(M)
    start = start or count + 60 + int(abs(M)) + int(4 * abs(beta))
    a = np.zeros(start + 3, dtype=complex)
    a[start + 1] = 1.0
    # index m + 1 stores a_m
    for m in range(start, -1, -1):
        a[m] = a[m + 2] + (M - m) * a[m + 1] / (1j * beta)
        if abs(a[m]) > 1e250:
            a /= abs(a[m])
    if a[1] == 0:
        raise ResolutionError("recessive solution has a_0 = 0; seeds cannot be normalized")
    return a[: count + 1] * (a0 / a[1])


def Y_series(seeds, k, sigma, cfg, z, max_terms=200, tol=1e-17, seed_tol=1e-8):
    """sum_m y_{-m-2} z^m.

    The sum converges only when the seeds lie on the recessive solution of the three-term
    relation; the coefficients then come from backward recursion normalized to y_{-2}, and
    y_{-1} is checked against it. Other seeds make the series diverge (converged=False).
    """
    M = M_of_k(k, sigma, cfg)
    y1, y2 = complex(seeds[0]), complex(seeds[1])
    if y2 == 0:
        return YValue(complex("nan"), False)
    a = minimal_coefficients(M, cfg.beta, y2, max_terms)
    if abs(a[0] - y1) > seed_tol * max(abs(y1), abs(a[0])):
        return YValue(complex("nan"), False)
    coeffs = a[1:]
    total = 0j
    for m, c in enumerate(coeffs):
        term = c * z**m
        total += term
        if m > 4 and abs(term) <= tol * max(abs(total), 1e-300):
            return YValue(total, True, terms=m + 1)
    return YValue(total, False, terms=len(coeffs))


def Y_closed_form(seeds, M, beta, z_abs, z_arg):
    """-i beta z^M e^{-i beta (z + 1/z)} int_0^z e^{i beta (s + 1/s)} (y1 s^{-M-1} + y2 s^{-M-2}) ds.

    The path runs from 0 down the negative imaginary axis to -i|z|, then along |s| = |z|
    to arg z; arg z may exceed 3 pi/2 to follow the continuation around the origin.
    """
    y1, y2 = seeds
    if y1 == 0 and y2 == 0:
        return 0j
    M = complex(M)
    wt = (complex(y1), complex(y2))
    seg = integral_L(M, beta, rho=z_abs, weight=wt)
    arc = integral_arc(M, beta, z_abs, -0.5 * math.pi, z_arg, panels=max(4, int(abs(z_arg + 0.5 * math.pi) * 4)), weight=wt)
    logz = math.log(z_abs) + 1j * z_arg
    z = cmath.exp(logz)
    return complex(-1j * beta * cmath.exp(M * logz - 1j * beta * (z + 1 / z)) * (seg + arc))


def generating_Y(method, k, z, seeds, cfg, sigma=0.0):
    """Y(k, z) by ``series`` or ``closed_form``; the series result carries the closed form too."""
    M = M_of_k(k, sigma, cfg)
    z = complex(z)
    if seeds[0] == 0 and seeds[1] == 0:
        return YValue(0j, True, 0j)
    closed = Y_closed_form(seeds, M, cfg.beta, abs(z), cmath.phase(z) if cmath.phase(z) >= -0.5 * math.pi else cmath.phase(z) + 2 * math.pi)
    if method == "closed_form":
        return YValue(closed, True, closed)
    if method != "series":
        raise ValueError("method is 'series' or 'closed_form'")
    if abs(z) >= 1:
        raise DomainError("the series needs |z| < 1")
    out = Y_series(seeds, k, sigma, cfg, z)
    out.closed_form = closed
    return out


def Y_ode_residual(Yfun, M, beta, z, seeds, h=1e-4):
    """M Y - z Y' - i beta (z - 1/z) Y - i beta y_{-1} - i beta y_{-2}/z with a 4th-order stencil."""
    z = complex(z)
    d = (Yfun(z - 2 * h) - 8 * Yfun(z - h) + 8 * Yfun(z + h) - Yfun(z + 2 * h)) / (12 * h)
    Y = Yfun(z)
    return M * Y - z * d - 1j * beta * (z - 1 / z) * Y - 1j * beta * seeds[0] - 1j * beta * seeds[1] / z


def monodromy_residual(seeds, k, sigma, cfg):
    """y_{-1} F(M+1) + y_{-2} F(M+2) with M = M_of_k(k, sigma)."""
    M = M_of_k(k, sigma, cfg)
    return seeds[0] * F_contour(M + 1, cfg.beta) + seeds[1] * F_contour(M + 2, cfg.beta)


def monodromy_identity_residual(seeds, M, beta, z_abs=0.5, z_arg=0.3):
    """Continue Y once around z = 0 and compare with the F combination.

    i/beta e^{i beta (z + 1/z)} (Y(z e^{2 pi i}) - Y(z)) = z^M e^{2 pi i M}
    [y_{-1} F(M+1) + y_{-2} F(M+2)].
    """
    M = complex(M)
    z = z_abs * cmath.exp(1j * z_arg)
    y_after = Y_closed_form(seeds, M, beta, z_abs, z_arg + 2 * math.pi)
    y_before = Y_closed_form(seeds, M, beta, z_abs, z_arg)
    lhs = 1j / beta * cmath.exp(1j * beta * (z + 1 / z)) * (y_after - y_before)
    logz = math.log(z_abs) + 1j * z_arg
    rhs = cmath.exp(M * logz + 2j * math.pi * M) * (seeds[0] * F_contour(M + 1, beta) + seeds[1] * F_contour(M + 2, beta))
    return abs(lhs - rhs) / max(abs(rhs), 1e-300)
