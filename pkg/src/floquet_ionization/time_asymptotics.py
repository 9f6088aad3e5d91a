"""Large-time reconstruction of psi(x, t) from Laplace-side data.

Deforming the inverse Laplace contour in the strip 0 <= Re sigma < omega upward leaves
residues at the poles sigma_k of psi_hat (decay rates Gamma_k = -i sigma_k) and, per Fourier
mode n, one integral along sigma = i s, s >= 0:

    psi(x, t) = sum_k e^{-Gamma_k t} sum_n i Res_k(psi_hat_n)(x) e^{i n omega t}
              + sum_n e^{i n omega t} int_0^inf F_n(s, x) e^{-s t} ds,

    F_n(s) = [psi_hat_n(u_-) - psi_hat_n(u_+)] / (2 pi i),   u_{+-} = +- e^{i pi/4} sqrt(s).

Only the part of psi_hat odd in u jumps, so F_n(s) = sqrt(s) h_n(s) with h_n analytic at
s = 0. Gauss-Laguerre quadrature with weight s^{1/2} e^{-s t} then evaluates the cut
integral, and the Taylor coefficients of h_n give the t^{-k/2} series exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import roots_genlaguerre

from .errors import DomainError, FitQualityError, ResolutionError, ValidityError
from .floquet_system import build_source, total_density, assemble_C
from .fredholm_solver import locate_pole, real_axis_path, resolvent_scan, solve
from .greens import SpectralPoint

LAGUERRE_NODES = 40
MAX_ORDER = 7
CUT_SUPPORT = 50.0
MIN_SUPPORT = 10.0


@lru_cache(maxsize=8)
def _laguerre(n):
    v, w = roots_genlaguerre(n, 0.5)
    return v, w


# ---------------------------------------------------------------------------
# cut data
# ---------------------------------------------------------------------------


@dataclass
class CutData:
    """Discontinuity of mode n along the cut, F_n(s) = sqrt(s) h_n(s).

    Either ``func`` (a callable returning F at an array of s, any shape of trailing
    observation axis) or Chebyshev samples of h on [0, p_max] are given.
    """

    n: int
    p_max: float = math.inf
    p_samples: np.ndarray | None = None
    h_values: np.ndarray | None = None
    func: object = None
    _cheb: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.func is None and self.p_samples is None:
            raise ValueError("CutData needs either func or samples")
        if self.p_samples is not None:
            self.p_samples = np.asarray(self.p_samples, dtype=float)
            self.h_values = np.asarray(self.h_values, dtype=complex)
            if self.h_values.ndim == 1:
                self.h_values = self.h_values[:, None]
            self.p_max = float(self.p_max if math.isfinite(self.p_max) else self.p_samples.max())
            deg = self.p_samples.size - 1
            self._cheb = [
                np.polynomial.Chebyshev.fit(self.p_samples, self.h_values[:, j], deg, domain=[0, self.p_max])
                for j in range(self.h_values.shape[1])
            ]

    @classmethod
    def from_function(cls, n, F, p_max=math.inf):
        return cls(n=n, p_max=p_max, func=F)

    @property
    def n_points(self):
        return 1 if self._cheb is None else len(self._cheb)

    def h(self, s):
        """h_n(s) = F_n(s)/sqrt(s), shape (len(s), n_points)."""
        s = np.asarray(s, dtype=float)
        if self._cheb is None:
            with np.errstate(divide="ignore", invalid="ignore"):
                val = np.asarray(self.func(s), dtype=complex)
                val = val.reshape(s.size, -1) / np.sqrt(s)[:, None]
            return val
        return np.stack([c(s) for c in self._cheb], axis=1)

    def chebyshev_tail(self):
        """Relative size of the last Chebyshev coefficients, a resolution indicator."""
        if self._cheb is None:
            return 0.0
        out = 0.0
        for c in self._cheb:
            a = np.abs(c.coef)
            out = max(out, a[-3:].max() / max(a.max(), 1e-300))
        return float(out)

    def taylor(self, order):
        """Taylor coefficients of h at s = 0, shape (order + 1, n_points)."""
        if self._cheb is None:
            raise ValueError("Taylor coefficients need sampled cut data")
        out = np.zeros((order + 1, len(self._cheb)), dtype=complex)
        for j, c in enumerate(self._cheb):
            d = c
            for m in range(order + 1):
                out[m, j] = d(0.0) / math.factorial(m)
                d = d.deriv()
        return out


def branch_cut_contribution(n, cut, t, x=None, nodes=LAGUERRE_NODES):
    """int_0^inf F_n(s) e^{-s t} ds for the cut data of mode n.

    With s = v / t the integral is t^{-3/2} sum_i w_i h(v_i / t) for the generalized
    Laguerre rule with weight v^{1/2} e^{-v}. Nodes beyond the sampled interval carry
    weight below e^{-t p_max} and are dropped; if t p_max < 10 the sampled support is
    too short and ResolutionError is raised. ``x`` picks observation points (indices).
    """
    if cut is None:
        return 0.0
    if cut.n != n:
        raise ValueError(f"cut data is for mode {cut.n}, not {n}")
    t = float(t)
    if t <= 0:
        raise ValidityError("t must be positive")
    if t * cut.p_max < MIN_SUPPORT:
        raise ResolutionError(f"cut sampled on [0, {cut.p_max:g}] is too short for t = {t:g}")
    v, w = _laguerre(nodes)
    keep = v <= t * cut.p_max
    vals = w[keep].astype(complex) @ cut.h(v[keep] / t) * t**-1.5
    if x is None:
        return vals if vals.size > 1 else complex(vals[0])
    return vals[x]


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


@dataclass
class PoleTerm:
    """e^{-gamma t} P(t) sum_n fourier[n] e^{i n omega t}; poly holds P's coefficients, lowest first."""

    gamma: complex
    poly: list
    fourier: dict

    def __post_init__(self):
        if self.gamma.real < -1e-12:
            raise DomainError(f"pole with Re Gamma = {self.gamma.real} < 0 (growing term)")
        if abs(self.gamma.real) <= 1e-12 and len(self.poly) > 1:
            raise DomainError("a term with Re Gamma = 0 must have constant P")


@dataclass
class TransseriesModel:
    omega: float
    x: np.ndarray
    poles: list = field(default_factory=list)
    cuts: dict = field(default_factory=dict)
    h_coeffs: dict = field(default_factory=dict)
    t_min: float | None = None
    x_weights: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if self.t_min is None:
            self.t_min = 10.0 / self.omega

    def to_json(self):
        def c(z):
            return [float(np.real(z)), float(np.imag(z))]

        doc = {
            "omega": self.omega,
            "t_min": self.t_min,
            "x": self.x.tolist(),
            "poles": [
                {
                    "gamma": c(p.gamma),
                    "poly": [c(a) for a in p.poly],
                    "fourier": [{"n": int(n), "values": [c(v) for v in np.atleast_1d(f)]} for n, f in sorted(p.fourier.items())],
                }
                for p in self.poles
            ],
            "cuts": [
                {
                    "n": int(n),
                    "p_samples": cut.p_samples.tolist(),
                    "B_values": [[c(v) for v in row] for row in cut.h_values],
                }
                for n, cut in sorted(self.cuts.items())
                if cut.p_samples is not None
            ],
            "h_coeffs": [
                {"k": int(k), "j": int(j), "value": [c(v) for v in np.atleast_1d(val)]}
                for (k, j), val in sorted(self.h_coeffs.items())
            ],
            "meta": self.meta,
        }
        return json.dumps(doc, indent=2)


def transseries_eval(model, t, x=None):
    """psi at time t (all observation points, or the indices ``x``)."""
    t = float(t)
    if t <= 0 or t < model.t_min:
        raise ValidityError(f"t = {t:g} below the certified t_min = {model.t_min:g}")
    out = np.zeros(model.x.size, dtype=complex)
    w = model.omega
    for p in model.poles:
        P = sum(a * t**k for k, a in enumerate(p.poly))
        per = sum(np.asarray(f) * np.exp(1j * n * w * t) for n, f in p.fourier.items())
        out = out + P * np.exp(-p.gamma * t) * per
    for n, cut in model.cuts.items():
        out = out + np.exp(1j * n * w * t) * branch_cut_contribution(n, cut, t)
    if x is None:
        return out if out.size > 1 else complex(out[0])
    return out[x]


def power_series_eval(model, t, x=None):
    """The truncated sum_n e^{i n omega t} sum_k h_{kn} t^{-k/2} (cut part only)."""
    out = np.zeros(model.x.size, dtype=complex)
    for (k, n), val in model.h_coeffs.items():
        out = out + np.exp(1j * n * model.omega * t) * np.asarray(val) * t ** (-k / 2)
    if x is None:
        return out if out.size > 1 else complex(out[0])
    return out[x]


def survival_probability_model(model, t, weights=None):
    """int_B |psi|^2 from the model evaluated on the quadrature grid of B (model.x)."""
    weights = model.x_weights if weights is None else np.asarray(weights, dtype=float)
    if weights is None:
        raise ValueError("model has no quadrature weights for B")
    if not model.poles and not model.cuts:
        return 0.0
    psi = np.atleast_1d(transseries_eval(model, t))
    return float(np.sum(weights * np.abs(psi) ** 2))


def fit_decay_exponent(t, values, omega=None, min_r2=0.95):
    """k0 = -2 x slope of log|psi| vs log t.

    With ``omega`` the data are first averaged over whole periods 2 pi/omega (root mean
    square of |psi|), which removes the e^{i j omega t} modulation.
    """
    t = np.asarray(t, dtype=float)
    a = np.abs(np.asarray(values))
    if t.size < 3 or t.max() / t.min() < 10 * (1 - 1e-9):
        raise FitQualityError("samples must span at least one decade in t")
    if omega is not None:
        period = 2 * math.pi / omega
        idx = np.floor((t - t[0]) / period).astype(int)
        full = idx < idx.max() if idx.max() > 0 else np.ones_like(idx, bool)
        tt, aa = [], []
        for k in np.unique(idx[full]):
            sel = idx == k
            tt.append(t[sel].mean())
            aa.append(math.sqrt(np.mean(a[sel] ** 2)))
        t, a = np.array(tt), np.array(aa)
    if np.any(a <= 0):
        raise FitQualityError("non-positive amplitudes")
    lx, ly = np.log(t), np.log(a)
    slope, icpt = np.polyfit(lx, ly, 1)
    res = ly - (slope * lx + icpt)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(res**2) / ss if ss > 0 else 0.0
    if r2 < min_r2:
        raise FitQualityError(f"power-law fit R^2 = {r2:.3f} < {min_r2}")
    return float(-2 * slope)


# ---------------------------------------------------------------------------
# assembly from the Floquet system
# ---------------------------------------------------------------------------


def psi_hat_at(pot, s, N_modes, psi0, x, regularize_a="auto"):
    """psi_hat(x, i(sigma + n omega)) for every mode, shape (2N+1, len(x))."""
    C = assemble_C(pot, s, N_modes, regularize_a)
    src = build_source(pot, psi0, C)
    y = solve(C, src.w, check=False)
    return C.field_at(total_density(y, src, C), np.atleast_1d(x))


def residue_at(pot, sigma0, N_modes, psi0, x, radius=None, points=32, regularize_a="auto"):
    """Res_{sigma = sigma0} psi_hat_n(x) by the trapezoid rule on a circle."""
    radius = radius or 1e-2 * pot.omega
    acc = 0.0
    for k in range(points):
        e = np.exp(2j * math.pi * k / points)
        s = SpectralPoint.from_sigma(sigma0 + radius * e, pot.omega)
        acc = acc + psi_hat_at(pot, s, N_modes, psi0, x, regularize_a) * (radius * e / points)
    return acc


def sample_cut(pot, N_modes, psi0, x, p_max, n_cheb=48, regularize_a="auto"):
    """h_n(s) at Chebyshev points of [0, p_max] for every mode: (modes, samples (n_cheb,), h (modes, n_cheb, len x))."""
    k = np.arange(n_cheb)
    s = 0.5 * p_max * (1 - np.cos((2 * k + 1) * math.pi / (2 * n_cheb)))
    rot = np.exp(1j * math.pi / 4)
    h = []
    for sj in s:
        up = rot * math.sqrt(sj)
        plus = psi_hat_at(pot, SpectralPoint.from_u(up, pot.omega), N_modes, psi0, x, regularize_a)
        minus = psi_hat_at(pot, SpectralPoint.from_u(-up, pot.omega), N_modes, psi0, x, regularize_a)
        h.append((minus - plus) / (2j * math.pi * math.sqrt(sj)))
    h = np.transpose(np.array(h), (1, 0, 2))
    return np.arange(-N_modes, N_modes + 1), s, h


def find_poles(pot, N_modes, psi0=None, samples=200, gamma_max=None, regularize_a="auto", drop=0.2):
    """Resonances and eigenvalues in the window 0 <= Im sigma <= gamma_max.

    Candidates are local minima of s_min on the real axis that drop below ``drop`` x the
    median; each is refined with Muller's method. Poles further from the axis leave no
    dip and belong to the remainder e^{-gamma_max t}.
    """
    gamma_max = 2 * pot.omega if gamma_max is None else gamma_max
    scan = resolvent_scan(pot, real_axis_path(pot.omega, samples), N_modes, regularize_a)
    sm = scan.smin
    med = float(np.median(sm))
    out = []
    for i in range(1, len(sm) - 1):
        if sm[i] < sm[i - 1] and sm[i] <= sm[i + 1] and sm[i] < drop * med:
            rec = locate_pole(pot, scan.sigmas[i].real + 1e-3j * pot.omega, N_modes, regularize_a)
            if -1e-10 <= rec.sigma0.imag <= gamma_max and all(abs(rec.sigma0 - r.sigma0) > 1e-8 for r in out):
                out.append(rec)
    return out


def build_model(pot, psi0, x, N_modes=32, poles=None, t_min=None, n_cheb=48, gamma_max=None,
                regularize_a="auto", x_weights=None, scan_samples=200, max_order=MAX_ORDER):
    """Assemble the TransseriesModel at observation points x.

    ``poles`` is a list of PoleRecords or complex sigma_0 guesses; None runs
    ``find_poles``. The cut is sampled on [0, 50/t_min].
    """
    omega = pot.omega
    t_min = 10.0 / omega if t_min is None else t_min
    gamma_max = 2 * omega if gamma_max is None else gamma_max
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if poles is None:
        poles = find_poles(pot, N_modes, samples=scan_samples, gamma_max=gamma_max, regularize_a=regularize_a)
    sigmas = []
    for p in poles:
        z = p.sigma0 if hasattr(p, "sigma0") else locate_pole(pot, complex(p), N_modes, regularize_a).sigma0
        if z.imag <= gamma_max:
            sigmas.append(z)
    terms = []
    for z in sigmas:
        if abs(z.real) < 1e-8 and z.imag > 0:
            raise DomainError(f"pole at sigma = {z} lies on the cut")
        res = residue_at(pot, z, N_modes, psi0, x, regularize_a=regularize_a)
        ns = np.arange(-N_modes, N_modes + 1)
        terms.append(PoleTerm(complex(-1j * z), [1.0], {int(n): 1j * res[i] for i, n in enumerate(ns)}))
    p_max = CUT_SUPPORT / t_min
    ns, s, h = sample_cut(pot, N_modes, psi0, x, p_max, n_cheb, regularize_a)
    cuts, coeffs, tail = {}, {}, 0.0
    for i, n in enumerate(ns):
        cut = CutData(int(n), p_max, s, h[i])
        cuts[int(n)] = cut
        tail = max(tail, cut.chebyshev_tail() * float(np.abs(h[i]).max()))
        tay = cut.taylor((max_order - 3) // 2)
        for m in range(tay.shape[0]):
            coeffs[(2 * m + 3, int(n))] = tay[m] * math.gamma(m + 1.5)
    scale = float(np.abs(h).max())
    if tail > 1e-4 * scale:
        raise ResolutionError(f"cut not resolved by {n_cheb} Chebyshev samples (tail {tail / scale:.1e})")
    meta = {"N_modes": N_modes, "n_cheb": n_cheb, "p_max": p_max, "gamma_max": gamma_max,
            "sigma_poles": [[z.real, z.imag] for z in sigmas], "remainder_rate": gamma_max}
    return TransseriesModel(omega, x, terms, cuts, coeffs, t_min, x_weights, meta)


def write_timeseries(model, ts, path, x_index=0):
    """CSV with columns t, Re psi, Im psi, P_B (P_B blank when the model has no B weights)."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "re_psi", "im_psi", "P_B"])
        for t in ts:
            v = np.atleast_1d(transseries_eval(model, t))[x_index]
            pb = "%.17g" % survival_probability_model(model, t) if model.x_weights is not None else ""
            wr.writerow(["%.17g" % t, "%.17g" % v.real, "%.17g" % v.imag, pb])
