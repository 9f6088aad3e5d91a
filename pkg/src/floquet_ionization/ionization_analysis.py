"""Exterior traces of mode functions, Wronskian fluxes and threshold classification.

Outside D every mode satisfies the free equation, and its values come from the
Green representation with the density supported in D. For an outgoing mode
g = c e^{-kappa r} (d=3, g = r R) or y = c e^{-kappa |x|} (d=1),
(2i)^{-1} W = -Im(kappa) |c|^2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ClassificationError, DomainError, ResolutionError
from .greens import gauss_legendre, product_matrix

STENCIL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
STENCIL2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


@dataclass
class ExteriorTrace:
    """Mode n outside D: values and r-derivatives at radii ``r``.

    d=1 stores both sides, index 0 for x = +r and 1 for x = -r, with derivatives taken
    in x. d=3 stores g = r R and g'.
    """

    n: int
    dimension: int
    kappa: complex
    r: np.ndarray
    values: np.ndarray
    derivative: np.ndarray
    second: np.ndarray
    farfield_c: complex
    wronskian: np.ndarray


def _field(C, rho_n, n, pts):
    k = C._kernels[n + C.N]
    return product_matrix(k, pts, C.domain) @ rho_n


def _wronskian(vals, der, dimension):
    w = np.conj(vals) * der - vals * np.conj(der)
    if dimension == 1:
        return w[0] - w[1]
    return w


def _farfield(C, rho_n, n, annulus, dimension, kappa):
    # least squares for c in y_n ~ c e^{-kappa r} / r^{(d-1)/2}
    r = np.linspace(annulus[0], annulus[1], 16)
    y = _field(C, rho_n, n, r)
    amp = np.exp(-kappa * r) / (r if dimension == 3 else 1.0)
    return complex(np.vdot(amp, y) / np.vdot(amp, amp))


def exterior_extend(C, rho, n, r, delta=1e-2, annulus=None):
    """Trace of mode n at radii r (all outside D) from the density rho (shape (2N+1, nD)).

    For a solution v of v = C v the density is ``-C.density(v.values)``.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    R = C.domain.support_radius
    if np.any(r - 2 * delta <= R):
        raise DomainError("exterior points must lie outside D (with room for the stencil)")
    rho_n = rho[n + C.N]
    offs = np.arange(-2, 3) * delta
    grid = r[:, None] + offs[None, :]
    d = C.domain.dimension
    kap = complex(C.kappas[n + C.N])
    if d == 1:
        plus = _field(C, rho_n, n, grid.ravel()).reshape(grid.shape)
        minus = _field(C, rho_n, n, -grid.ravel()).reshape(grid.shape)
        samples = np.stack([plus, minus])
        # derivative in x: on the -r side x decreases along the stencil
        der = np.stack([plus @ STENCIL / delta, -(minus @ STENCIL) / delta])
        sec = np.stack([plus @ STENCIL2, minus @ STENCIL2]) / delta**2
        vals = samples[:, :, 2]
    else:
        y = _field(C, rho_n, n, grid.ravel()).reshape(grid.shape)
        g = y * grid
        vals = g[:, 2]
        der = g @ STENCIL / delta
        sec = g @ STENCIL2 / delta**2
    annulus = annulus or (2 * C.domain.r_B, 4 * C.domain.r_B)
    c = _farfield(C, rho_n, n, annulus, d, kap) if np.any(rho_n) else 0j
    return ExteriorTrace(n, d, kap, r, vals, der, sec, c, _wronskian(vals, der, d))


def trace_from_function(f, r, n=0, kappa=0j, dimension=3, delta=1e-2):
    """Trace of an explicit exterior function (g(r) in d=3; f(x) on both sides in d=1)."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    offs = np.arange(-2, 3) * delta
    grid = r[:, None] + offs[None, :]
    if dimension == 1:
        plus, minus = f(grid), f(-grid)
        vals = np.stack([plus[:, 2], minus[:, 2]])
        der = np.stack([plus @ STENCIL / delta, -(minus @ STENCIL) / delta])
        sec = np.stack([plus @ STENCIL2, minus @ STENCIL2]) / delta**2
    else:
        g = f(grid)
        vals, der, sec = g[:, 2], g @ STENCIL / delta, g @ STENCIL2 / delta**2
    return ExteriorTrace(n, dimension, complex(kappa), r, vals, der, sec, 0j, _wronskian(vals, der, dimension))


def wronskian_flux(trace):
    """W_n = conj(g) g' - conj(g') g at each radius (d=1: flux at +r minus flux at -r)."""
    if trace.r.size == 0:
        raise ResolutionError("no radial samples")
    return trace.wronskian


def radial_wronskian_R(trace):
    """r^2 W[conj(R), R] with R = g / r; equals W[conj(g), g]."""
    if trace.dimension != 3:
        raise DomainError("radial identity is three-dimensional")
    r = trace.r
    R = trace.values / r
    dR = trace.derivative / r - trace.values / r**2
    return r**2 * (np.conj(R) * dR - R * np.conj(dR))


def free_equation_residual(trace):
    """|-y'' + kappa^2 y| relative to |kappa^2 y| (g'' for d=3 radial, l = 0)."""
    k2 = trace.kappa**2
    res = -trace.second + k2 * trace.values
    scale = np.maximum(np.abs(k2 * trace.values), np.abs(trace.second))
    return np.abs(res) / np.where(scale > 0, scale, 1.0)


# ---------------------------------------------------------------------------
# balances and null-vector diagnostics
# ---------------------------------------------------------------------------


def _ball_norms(C, v, rho, r_out, order=24, panels=4):
    """||y_n||^2 over B_r: D-node values of v plus the exterior representation on D..r."""
    dom = C.domain
    inner = np.sum(dom.d_weights * np.abs(v.values) ** 2, axis=1)
    x, w = gauss_legendre(order)
    edges = np.linspace(dom.support_radius, r_out, panels + 1)
    pts = np.concatenate([0.5 * (b - a) * x + 0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:])])
    wts = np.concatenate([0.5 * (b - a) * w for a, b in zip(edges[:-1], edges[1:])])
    if dom.dimension == 3:
        wts = wts * 4 * math.pi * pts**2
        sides = [pts]
    else:
        sides = [pts, -pts]
    outer = np.zeros(C.modes.size)
    for side in sides:
        vals = np.einsum("nij,nj->ni", C.kernel_at(side), rho)
        outer += np.sum(wts * np.abs(vals) ** 2, axis=1)
    return inner + outer


def flux_balance_check(C, v, r=None):
    """-Im sigma sum ||y_n||^2_{B_r} + (2i)^{-1} sum_n flux_n(r) for a candidate null vector v.

    flux_n = W_n in d=1 and 4 pi W[conj g, g] in d=3. Both terms vanish separately at a
    real-axis eigenvalue; for a vector that does not solve v = C v the identity fails.
    """
    r = r or 1.5 * C.domain.r_B
    rho = -C.density(v.values)
    if not np.any(v.values):
        return 0.0
    mass = _ball_norms(C, v, rho, r)
    fl = 0j
    for n in C.modes:
        tr = exterior_extend(C, rho, int(n), [r])
        w = tr.wronskian[0]
        fl += w if C.domain.dimension == 1 else 4 * math.pi * w
    res = -C.s.sigma.imag * np.sum(mass) + fl / 2j
    return float(abs(res) / max(np.sum(mass), 1e-300))


def homogeneity_residual(C, v):
    """h_norm(v - C v) / h_norm(v)."""
    from .floquet_system import h_norm

    return h_norm(v - C.apply(v)) / max(h_norm(v), 1e-300)


def _annulus_norms(C, rho, annulus, order=32):
    dom = C.domain
    x, w = gauss_legendre(order)
    a, b = annulus
    pts = 0.5 * (b - a) * x + 0.5 * (a + b)
    wts = 0.5 * (b - a) * w
    if dom.dimension == 3:
        wts = wts * 4 * math.pi * pts**2
        sides = [pts]
    else:
        sides = [pts, -pts]
    out = np.zeros(C.modes.size)
    for side in sides:
        vals = np.einsum("nij,nj->ni", C.kernel_at(side), rho)
        out += np.sum(wts * np.abs(vals) ** 2, axis=1)
    return np.sqrt(out)


def negative_mode_vanishing(C, v, annulus=None):
    """Exterior L^2 norms on the annulus for every mode n < 0 (dict n -> norm)."""
    annulus = annulus or (2 * C.domain.r_B, 4 * C.domain.r_B)
    norms = _annulus_norms(C, -C.density(v.values), annulus)
    return {int(n): float(norms[i]) for i, n in enumerate(C.modes) if n < 0}


@dataclass
class ThresholdClassification:
    classification: str
    sigma0: complex
    decay_slope: float | None = None
    expected_slope: float | None = None
    tail_constant: complex | None = None


def classify_threshold(C, v, tol=1e-6, annulus=None):
    """Eigenvalue vs threshold resonance for a null vector v at real sigma0 in [0, omega)."""
    s = C.s
    if abs(s.sigma.imag) > 1e-8 * s.omega:
        raise ClassificationError("classification needs a real sigma0")
    annulus = annulus or (2 * C.domain.r_B, 4 * C.domain.r_B)
    rho = -C.density(v.values)
    norms = _annulus_norms(C, rho, annulus)
    total = max(float(np.max(norms)), 1e-300)
    neg = [norms[i] for i, n in enumerate(C.modes) if n < 0]
    if neg and max(neg) > tol * total and abs(s.sigma) > 1e-10:
        raise ClassificationError("n < 0 modes radiate; v is not a bound null vector")
    r = np.linspace(*annulus, 24)
    if abs(s.sigma) > 1e-10:
        dom_i = int(np.argmax(norms))
        n = int(C.modes[dom_i])
        y = _field(C, rho[dom_i], n, r)
        logy = np.log(np.abs(y) * (r if C.domain.dimension == 3 else 1.0))
        slope = float(np.polyfit(r, logy, 1)[0])
        expect = -float(C.kappas[dom_i].real)
        if abs(slope - expect) > 0.02 * abs(expect):
            raise ClassificationError(f"tail slope {slope:.4f} does not match -Re kappa = {expect:.4f}")
        return ThresholdClassification("eigenvalue", s.sigma, slope, expect)
    # sigma0 = 0: a 1/r tail in mode 0 marks a resonance (d=3)
    if C.domain.dimension != 3:
        raise ClassificationError("threshold classification at sigma0 = 0 is implemented for d=3")
    y0 = _field(C, rho[C.N], 0, r)
    ry = r * y0
    Cconst = complex(np.mean(ry))
    spread = float(np.max(np.abs(ry - Cconst)))
    scale = float(np.max(np.abs(ry)))
    if scale <= tol * max(total, 1e-300):
        return ThresholdClassification("eigenvalue", s.sigma, tail_constant=0j)
    if spread <= 1e-6 * scale:
        return ThresholdClassification("resonance", s.sigma, tail_constant=Cconst)
    raise ClassificationError("tail neither ~C/r nor negligible")


def ionization_report(C, v, r=None):
    """JSON report with per-mode W_n, c_n, exterior norm and a classification attempt."""
    r = r or 1.5 * C.domain.r_B
    rho = -C.density(v.values)
    annulus = (2 * C.domain.r_B, 4 * C.domain.r_B)
    norms = _annulus_norms(C, rho, annulus)
    try:
        cls = classify_threshold(C, v).classification
    except ClassificationError as exc:
        cls = f"unclassified: {exc}"
    rows = []
    for i, n in enumerate(C.modes):
        tr = exterior_extend(C, rho, int(n), [r])
        rows.append(
            {
                "n": int(n),
                "W_n": [float(tr.wronskian[0].real), float(tr.wronskian[0].imag)],
                "c_n": [tr.farfield_c.real, tr.farfield_c.imag],
                "exterior_norm": float(norms[i]),
            }
        )
    return json.dumps(
        {
            "sigma": [C.s.sigma.real, C.s.sigma.imag],
            "flux_balance_residual": flux_balance_check(C, v, r),
            "classification": cls,
            "modes": rows,
        },
        indent=2,
    )
