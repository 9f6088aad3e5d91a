"""Direct time-domain propagation of i psi_t = (-Delta + V + Omega(x, t)) psi.

Crank-Nicolson on a uniform grid with the forcing sampled at the half step, a
quadratic complex absorbing potential over the outer part of the box, and
Laplace transforms accumulated on the fly at a few probe points. d=3 runs use
the l=0 reduction g = r R on (0, L] with g(0) = 0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .errors import ConfigError, ResolutionError


@dataclass(frozen=True)
class GridConfig:
    length: float = 60.0
    h: float = 0.05
    absorber_fraction: float = 0.2
    absorber_strength: float = 1.0
    dimension: int = 1

    def __post_init__(self):
        if self.dimension not in (1, 3):
            raise ConfigError("the oracle propagates d=1 or radial d=3")
        if not 0 <= self.absorber_fraction < 1:
            raise ConfigError("absorber_fraction must lie in [0, 1)")

    @property
    def x(self):
        n = int(round(self.length / self.h))
        if self.dimension == 1:
            return np.arange(-n + 1, n) * self.h
        return np.arange(1, n) * self.h

    def absorber(self):
        """W(x) >= 0 with H -> H - i W; quadratic ramp over the outer fraction."""
        r = np.abs(self.x)
        start = self.length * (1 - self.absorber_fraction)
        width = self.length - start
        if width <= 0:
            return np.zeros_like(r)
        return self.absorber_strength * np.clip((r - start) / width, 0, None) ** 2

    def measure(self):
        """Quadrature weights for integrals of |psi|^2 (4 pi r^2 dr becomes 4 pi dr for g)."""
        w = np.full(self.x.size, self.h)
        return w * 4 * math.pi if self.dimension == 3 else w


def max_stable_dt(omega, h):
    return 0.1 * min(2 * math.pi / omega, h * h)


@numba.njit(cache=True)
def _cn_run(psi, vdiag, oj, js, omega, cap, h, dt, nsteps, t0, stride, probe_idx, ps, meas, bmask, rec_psi, rec_obs, lap):
    n = psi.size
    off = -1j * dt / (2 * h * h)
    cprime = np.empty(n, dtype=np.complex128)
    dprime = np.empty(n, dtype=np.complex128)
    rhs = np.empty(n, dtype=np.complex128)
    forcing = np.empty(n, dtype=np.complex128)
    np_ = ps.size
    fac = np.empty(np_, dtype=np.complex128)
    step_fac = np.empty(np_, dtype=np.complex128)
    for q in range(np_):
        fac[q] = np.exp(-ps[q] * t0)
        step_fac[q] = np.exp(-ps[q] * dt)
    # t = t0 half-weight of the trapezoid rule
    for q in range(np_):
        for m in range(probe_idx.size):
            lap[q, m] += 0.5 * dt * psi[probe_idx[m]] * fac[q]
    rec = 0
    for step in range(nsteps):
        th = t0 + (step + 0.5) * dt
        for k in range(n):
            forcing[k] = 0.0
        for a in range(js.size):
            e = np.exp(1j * js[a] * omega * th)
            for k in range(n):
                forcing[k] += oj[a, k] * e
        # H psi on the old state
        for k in range(n):
            hk = (2.0 / (h * h) + vdiag[k] + forcing[k].real - 1j * cap[k]) * psi[k]
            if k > 0:
                hk -= psi[k - 1] / (h * h)
            if k < n - 1:
                hk -= psi[k + 1] / (h * h)
            rhs[k] = psi[k] - 0.5j * dt * hk
        # Thomas solve of (I + i dt/2 H) psi_new = rhs
        for k in range(n):
            diag = 1.0 + 0.5j * dt * (2.0 / (h * h) + vdiag[k] + forcing[k].real - 1j * cap[k])
            if k == 0:
                cprime[k] = off / diag
                dprime[k] = rhs[k] / diag
            else:
                den = diag - off * cprime[k - 1]
                cprime[k] = off / den
                dprime[k] = (rhs[k] - off * dprime[k - 1]) / den
        psi[n - 1] = dprime[n - 1]
        for k in range(n - 2, -1, -1):
            psi[k] = dprime[k] - cprime[k] * psi[k + 1]
        last = step == nsteps - 1
        for q in range(np_):
            fac[q] *= step_fac[q]
            w = 0.5 * dt if last else dt
            for m in range(probe_idx.size):
                lap[q, m] += w * psi[probe_idx[m]] * fac[q]
        if (step + 1) % stride == 0:
            nrm = 0.0
            pb = 0.0
            for k in range(n):
                a2 = psi[k].real ** 2 + psi[k].imag ** 2
                nrm += meas[k] * a2
                pb += bmask[k] * meas[k] * a2
            rec_obs[rec, 0] = t0 + (step + 1) * dt
            rec_obs[rec, 1] = nrm
            rec_obs[rec, 2] = pb
            for m in range(probe_idx.size):
                rec_psi[rec, m] = psi[probe_idx[m]]
            rec += 1
    return rec


@dataclass
class Trajectory:
    """Samples of a run: times, probe values, norm and P_B; Laplace sums at ``ps``."""

    grid: GridConfig
    t: np.ndarray
    probe_x: np.ndarray
    probe_values: np.ndarray
    norm: np.ndarray
    survival: np.ndarray
    ps: np.ndarray
    laplace: np.ndarray
    final_psi: np.ndarray
    T: float
    dt: float
    norm0: float = 1.0
    meta: dict = field(default_factory=dict)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            head = ["t", "norm", "P_B"]
            for x in self.probe_x:
                head += [f"re_psi({x:.6g})", f"im_psi({x:.6g})"]
            wr.writerow(head)
            for i in range(self.t.size):
                row = [f"{self.t[i]:.17g}", f"{self.norm[i]:.17g}", f"{self.survival[i]:.17g}"]
                for v in self.probe_values[i]:
                    row += [f"{v.real:.17g}", f"{v.imag:.17g}"]
                wr.writerow(row)


def _probe_indices(grid, probe_x):
    x = grid.x
    idx = np.array([int(np.argmin(np.abs(x - p))) for p in probe_x], dtype=np.int64)
    if np.any(np.abs(x[idx] - np.asarray(probe_x)) > 1e-9 * max(1.0, grid.length)):
        raise ConfigError("probe points must be grid nodes")
    return idx


def _sampled_potential(pot, x):
    v = pot.V_at(x)
    js = np.array(sorted(pot.Omega), dtype=np.int64)
    oj = np.array([pot.Omega_at(int(j), x) for j in js], dtype=np.complex128).reshape(js.size, x.size)
    return v.astype(float), oj, js


def propagate(pot, psi0, T, dt=None, grid=None, t0=0.0, probe_x=(0.0,), ps=(), sample_every=None, ball_radius=None, psi_init=None, check_dt=True):
    """Run Crank-Nicolson from t0 to t0 + T.

    psi0 is a callable on the grid (R(r) in d=3) or ``psi_init`` an array of grid values
    (g = r R in d=3); the initial state is normalized. ``ps`` are Laplace variables whose
    transforms at the probe points are accumulated over [t0, t0 + T].
    """
    grid = grid or GridConfig(dimension=pot.dimension)
    x = grid.x
    dt_max = max_stable_dt(pot.omega, grid.h)
    if dt is None:
        dt = dt_max
    if check_dt and dt > dt_max * (1 + 1e-12):
        raise ConfigError(f"dt={dt:.3g} exceeds 0.1 min(2 pi/omega, h^2) = {dt_max:.3g}")
    nsteps = int(round(T / dt))
    if nsteps < 1:
        raise ConfigError("T must cover at least one step")
    if psi_init is not None:
        psi = np.array(psi_init, dtype=np.complex128)
    else:
        psi = np.asarray(psi0(x), dtype=np.complex128)
        if grid.dimension == 3:
            psi = psi * x
    meas = grid.measure()
    norm0 = math.sqrt(float(np.sum(meas * np.abs(psi) ** 2)))
    if psi_init is None:
        psi /= norm0
        norm0 = 1.0
    v, oj, js = _sampled_potential(pot, x)
    rb = pot.domain.r_B if ball_radius is None else ball_radius
    bmask = (np.abs(x) <= rb + 1e-12).astype(float)
    idx = _probe_indices(grid, probe_x)
    ps = np.asarray(ps, dtype=np.complex128)
    stride = sample_every or max(1, int(round(0.05 / dt)))
    nrec = nsteps // stride
    rec_psi = np.zeros((nrec, idx.size), dtype=np.complex128)
    rec_obs = np.zeros((nrec, 3))
    lap = np.zeros((ps.size, idx.size), dtype=np.complex128)
    _cn_run(psi, v, oj, js, pot.omega, grid.absorber(), grid.h, dt, nsteps, t0, stride, idx, ps, meas, bmask, rec_psi, rec_obs, lap)
    probe = rec_psi
    if grid.dimension == 3:
        probe = rec_psi / x[idx]
        lap = lap / x[idx]
    return Trajectory(grid, rec_obs[:, 0], np.asarray(probe_x, float), probe, rec_obs[:, 1], rec_obs[:, 2], ps, lap, psi, T, dt, norm0)


def survival_probability(psi, grid, ball_radius):
    """int_B |psi|^2 for grid values psi (g = r R in d=3)."""
    mask = np.abs(grid.x) <= ball_radius + 1e-12
    return float(np.sum(grid.measure()[mask] * np.abs(psi[mask]) ** 2))


def laplace_probe(traj, p, tol=1e-8):
    """The accumulated transform at p (one value per probe point).

    Raises ResolutionError when the truncation e^{-Re p T} exceeds ``tol``; the
    neglected tail is bounded by that factor times sup|psi|/Re p.
    """
    p = complex(p)
    if p.real <= 0:
        raise ConfigError("the Laplace transform needs Re p > 0")
    hits = np.flatnonzero(np.abs(traj.ps - p) < 1e-14)
    if hits.size == 0:
        raise ConfigError(f"p={p} was not requested when the trajectory was run")
    if math.exp(-p.real * traj.T) > tol:
        raise ResolutionError(f"T={traj.T} too short for Re p={p.real}: tail factor {math.exp(-p.real * traj.T):.2e}")
    return traj.laplace[hits[0]]


# ---------------------------------------------------------------------------
# stationary oracles
# ---------------------------------------------------------------------------


def square_well_levels(depth, R=1.0):
    """Bound-state energies of -d^2/dx^2 - depth chi_[-R,R] from k tan(kR) = kappa and -k cot(kR) = kappa."""
    z0 = R * math.sqrt(depth)
    out = []
    m = 0
    while m * math.pi / 2 < z0:
        lo = m * math.pi / 2 + 1e-14
        hi = min((m + 1) * math.pi / 2, z0) - 1e-14
        if m % 2 == 0:
            f = lambda z: z * math.tan(z) - math.sqrt(max(z0 * z0 - z * z, 0.0))
        else:
            f = lambda z: -z / math.tan(z) - math.sqrt(max(z0 * z0 - z * z, 0.0))
        if hi > lo and f(lo) * f(hi) < 0:
            z = brentq(f, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
            out.append(-(z0 * z0 - z * z) / (R * R))
        m += 1
    return sorted(out)


def square_well_state(depth, R=1.0, level=0):
    """Normalized eigenfunction (callable) and energy of the square well."""
    E = square_well_levels(depth, R)[level]
    k = math.sqrt(depth + E)
    kap = math.sqrt(-E)
    even = level % 2 == 0
    inner = (lambda x: np.cos(k * x)) if even else (lambda x: np.sin(k * x))
    edge = math.cos(k * R) if even else math.sin(k * R)

    def phi(x):
        x = np.asarray(x, dtype=float)
        out = np.where(np.abs(x) <= R, inner(x), np.sign(x) ** (0 if even else 1) * edge * np.exp(-kap * (np.abs(x) - R)))
        return out

    if even:
        nrm = R + math.sin(2 * k * R) / (2 * k) + edge**2 / kap
    else:
        nrm = R - math.sin(2 * k * R) / (2 * k) + edge**2 / kap
    return (lambda x: phi(x) / math.sqrt(nrm)), E


def grid_bound_state(pot, grid, level=0):
    """Lowest eigenpairs of the static finite-difference Hamiltonian on the oracle grid."""
    x = grid.x
    d = 2.0 / grid.h**2 + pot.V_at(x)
    e = np.full(x.size - 1, -1.0 / grid.h**2)
    vals, vecs = eigh_tridiagonal(d, e, select="i", select_range=(level, level))
    v = vecs[:, 0]
    v = v / math.sqrt(np.sum(grid.measure() * v * v))
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return v.astype(complex), float(vals[0])


def free_gaussian_variance(s, t):
    """Position variance of the free packet exp(-x^2/(4 s^2)) under i psi_t = -psi_xx."""
    return s * s + (t / s) ** 2


def tune_zero_energy_well(R=1.0):
    """Depth of -depth chi_{|x|<R} (d=3) with an l=0 zero-energy resonance, found by shooting.

    g'' = -depth g on (0, R) with g(0) = 0, bounded at zero energy when g'(R) = 0.
    """
    def gprime_at_R(depth):
        sol = solve_ivp(lambda r, y: [y[1], -depth * y[0]], (0.0, R), [0.0, 1.0], rtol=1e-12, atol=1e-14)
        return sol.y[1, -1]

    # first zero of g'(R) lies at R sqrt(depth) in (1, 2)
    return brentq(gprime_at_R, 1.0 / R**2, 4.0 / R**2, xtol=1e-14)
