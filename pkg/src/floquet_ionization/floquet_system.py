"""Problem data, the mode-coupled operator C(sigma) and the Laplace-side source.

With p = i(sigma + n omega) and y_n = psi_hat(., p), the Laplace transform of
i psi_t = (-Delta + V + Omega) psi becomes, mode by mode,

    y_n = -i g_n psi0 - g_n [V y_n + sum_j Omega_j y_{n-j}].

Everything that acts on a mode is "kernel applied to a density supported in D",
so the unknowns live on the D nodes and any other point is reached through a
kernel matrix evaluated at that point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DomainError
from .greens import Domain, SpectralPoint, kernel_for_mode, product_matrix

DEFAULT_GAMMA = 1.5
# barrier strength of the 1D n=0 regularization, -d^2 + c chi_D + u^2
DEFAULT_REGULARIZATION = 4.0


def indicator(x, radius):
    """chi_D sampled pointwise, 1/2 on the boundary (the midpoint value of the jump)."""
    r = np.abs(np.asarray(x, dtype=float))
    return np.where(r < radius, 1.0, np.where(r == radius, 0.5, 0.0))


def _constant(value):
    def f(x):
        return np.full(np.shape(x), value, dtype=complex if isinstance(value, complex) else float)

    return f


@dataclass(frozen=True)
class PotentialSpec:
    """omega, static V and forcing harmonics Omega_j, all supported in D.

    ``V`` and the values of ``Omega`` are vectorized callables of x (radius in d=3); they
    are multiplied by chi_D whenever they are sampled.
    """

    omega: float
    V: Callable
    Omega: Mapping[int, Callable]
    domain: Domain
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.omega > 0:
            raise ConfigError("omega must be positive")
        if 0 in self.Omega:
            raise ConfigError("Omega_0 must vanish; put static parts into V")
        for j in self.Omega:
            if -j not in self.Omega:
                raise ConfigError(f"Omega_{j} present without Omega_{-j}")
        x = self.domain.d_nodes
        for j in self.Omega:
            if j > 0 and not np.allclose(self.Omega[-j](x), np.conj(self.Omega[j](x)), atol=1e-14, rtol=0):
                raise ConfigError(f"Omega_{-j} is not the conjugate of Omega_{j}; Omega(x,t) would not be real")
        if np.max(np.abs(np.imag(np.asarray(self.V(x), dtype=complex)))) > 0:
            raise ConfigError("V must be real")

    @property
    def J(self):
        return max((abs(j) for j in self.Omega), default=0)

    @property
    def dimension(self):
        return self.domain.dimension

    @property
    def support_radius(self):
        return self.domain.support_radius

    @property
    def decay_constant(self):
        """sup_{j,x} |Omega_j(x)| j^2 over the stored harmonics."""
        x = self.domain.d_nodes
        return max((float(np.max(np.abs(f(x)))) * j * j for j, f in self.Omega.items()), default=0.0)

    def V_at(self, x):
        return np.real(np.asarray(self.V(x), dtype=complex)) * indicator(x, self.support_radius)

    def Omega_at(self, j, x):
        if j not in self.Omega:
            return np.zeros(np.shape(x), dtype=complex)
        return np.asarray(self.Omega[j](x), dtype=complex) * indicator(x, self.support_radius)

    def forcing(self, x, t):
        """Omega(x, t) = sum_j Omega_j(x) e^{i j omega t}; real up to rounding."""
        total = np.zeros(np.shape(x), dtype=complex)
        for j in self.Omega:
            total += self.Omega_at(j, x) * np.exp(1j * j * self.omega * t)
        return total

    def with_domain(self, domain):
        return PotentialSpec(self.omega, self.V, self.Omega, domain, self.name, self.meta)

    @classmethod
    def nonp(cls, V_D=-2.0, Omega_D=0.5, omega=1.0, domain=None):
        """V_D chi_D + 2 Omega_D chi_D sin(omega t), i.e. Omega_{+-1} = -+ i Omega_D chi_D."""
        domain = domain or Domain(1, 1.0, 2.0)
        return cls(
            omega,
            _constant(float(V_D)),
            {1: _constant(-1j * Omega_D), -1: _constant(1j * Omega_D)},
            domain,
            "nonp",
            {"V_D": V_D, "Omega_D": Omega_D},
        )

    @classmethod
    def square_well(cls, depth, omega=1.0, domain=None):
        """Static well -depth * chi_D, no forcing."""
        domain = domain or Domain(1, 1.0, 2.0)
        return cls(omega, _constant(-float(depth)), {}, domain, "square_well", {"depth": depth})


def mode_weights(ns, gamma=DEFAULT_GAMMA):
    """Weights of the H-norm: max(|n|, 1)^gamma (n = 0 carries weight 1)."""
    return np.maximum(np.abs(np.asarray(ns)), 1).astype(float) ** gamma


@dataclass
class ModeVector:
    """Modes n = -N..N of a function sampled on a grid with quadrature ``weights``."""

    values: np.ndarray
    weights: np.ndarray
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 2 or self.values.shape[0] % 2 != 1:
            raise ValueError("values must have shape (2N+1, npoints)")

    @property
    def N(self):
        return (self.values.shape[0] - 1) // 2

    @property
    def modes(self):
        return np.arange(-self.N, self.N + 1)

    def mode(self, n):
        if abs(n) > self.N:
            return np.zeros(self.values.shape[1], dtype=complex)
        return self.values[n + self.N]

    def mode_norms(self):
        return np.sqrt(np.sum(self.weights * np.abs(self.values) ** 2, axis=1))

    def like(self, values):
        return ModeVector(values, self.weights, self.gamma)

    def __add__(self, other):
        return self.like(self.values + other.values)

    def __sub__(self, other):
        return self.like(self.values - other.values)

    def __mul__(self, c):
        return self.like(self.values * c)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, N, weights, gamma=DEFAULT_GAMMA):
        return cls(np.zeros((2 * N + 1, len(weights)), dtype=complex), weights, gamma)


def h_norm(y):
    """sqrt(sum_n max(|n|,1)^gamma ||y_n||^2)."""
    return float(np.sqrt(np.sum(mode_weights(y.modes, y.gamma) * y.mode_norms() ** 2)))


def shift_convolve(pot, y, x=None):
    """(sum_j Omega_j S^{-j} y)_n = sum_j Omega_j y_{n-j}; modes leaving [-N, N] are dropped.

    ``x`` are the sample points of y; defaults to the D nodes.
    """
    x = pot.domain.d_nodes if x is None else x
    out = np.zeros_like(y.values)
    N = y.N
    for j in pot.Omega:
        om = pot.Omega_at(j, x)
        if j >= 0:
            out[j:] += om * y.values[: 2 * N + 1 - j]
        else:
            out[:j] += om * y.values[-j:]
    return y.like(out)


class BlockOperator:
    """Discretized C(sigma): (C y)_n = -g_n [(V - c_n chi) y_n + sum_j Omega_j y_{n-j}].

    c_n is the regularization strength for the 1D n = 0 mode and 0 otherwise; with it
    g_0 is the Green function of -d^2 + c chi + u^2, so the fixed point is unchanged.
    Unknowns are the values on the D nodes.
    """

    def __init__(self, pot, s, n_modes, regularize_a=None, check=True):
        self.pot = pot
        self.s = s
        self.N = int(n_modes)
        self.domain = pot.domain
        if regularize_a == "auto":
            regularize_a = DEFAULT_REGULARIZATION if pot.dimension == 1 else None
        self.regularize_a = regularize_a
        x = self.domain.d_nodes
        self.modes = np.arange(-self.N, self.N + 1)
        self._kernels = []
        self.kappas = np.empty(self.modes.size, dtype=complex)
        self.G = []
        for i, n in enumerate(self.modes):
            kfn, k = kernel_for_mode(self.domain, n, s, regularize_a)
            if check:
                self.domain.check_resolution(k)
            self._kernels.append(kfn)
            self.kappas[i] = k
            self.G.append(product_matrix(kfn, x, self.domain))
        self.G = np.array(self.G)
        v = pot.V_at(x)
        self.diag_density = np.tile(v, (self.modes.size, 1)).astype(complex)
        if self.regularized_index is not None:
            self.diag_density[self.regularized_index] -= regularize_a * indicator(x, self.domain.support_radius)
        self._target_cache = {}

    @property
    def regularized_index(self):
        if self.pot.dimension == 1 and self.regularize_a is not None:
            return self.N
        return None

    @property
    def n_points(self):
        return self.domain.d_nodes.size

    @property
    def size(self):
        return self.modes.size * self.n_points

    def weights(self, gamma=DEFAULT_GAMMA):
        """Diagonal of the H-norm Gram matrix on the flattened unknowns."""
        return np.kron(mode_weights(self.modes, gamma), self.domain.d_weights)

    def density(self, yv):
        """(V - c_n chi) y_n + sum_j Omega_j y_{n-j} for an array of shape (2N+1, nD)."""
        y = ModeVector(yv, self.domain.d_weights)
        return self.diag_density * yv + shift_convolve(self.pot, y).values

    def apply(self, y):
        """C y for a ModeVector on the D nodes."""
        rho = self.density(y.values)
        return y.like(-np.einsum("nij,nj->ni", self.G, rho))

    def kernel_at(self, targets):
        """Per-mode kernel matrices from D-node densities to ``targets``."""
        targets = np.atleast_1d(np.asarray(targets, dtype=float))
        key = targets.tobytes()
        if key not in self._target_cache:
            self._target_cache[key] = np.array(
                [product_matrix(k, targets, self.domain) for k in self._kernels]
            )
        return self._target_cache[key]

    def field_at(self, rho, targets):
        """sum over D of g_n(x, x') rho_n(x') at the targets, for a density array rho."""
        return np.einsum("nij,nj->ni", self.kernel_at(targets), rho)

    @property
    def blocks(self):
        """Dense (n, k) blocks, |n - k| <= J."""
        x = self.domain.d_nodes
        out = {}
        for a, n in enumerate(self.modes):
            for b, k in enumerate(self.modes):
                if n == k:
                    mult = self.diag_density[a]
                elif (n - k) in self.pot.Omega:
                    mult = self.pot.Omega_at(n - k, x)
                else:
                    continue
                out[(int(n), int(k))] = -self.G[a] * mult[None, :]
        return out

    def matrix(self):
        """C as a sparse matrix on the flattened unknowns (mode-major)."""
        m = self.n_points
        rows, cols, vals = [], [], []
        ii, jj = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        for (n, k), blk in self.blocks.items():
            rows.append((n + self.N) * m + ii.ravel())
            cols.append((k + self.N) * m + jj.ravel())
            vals.append(blk.ravel())
        if not rows:
            return sp.csc_matrix((self.size, self.size), dtype=complex)
        return sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.size, self.size)
        )

    def system_matrix(self):
        """I - C."""
        return (sp.identity(self.size, dtype=complex, format="csc") - self.matrix()).tocsc()


def assemble_C(pot, s, N_modes, regularize_a="auto", check=True):
    return BlockOperator(pot, s, N_modes, regularize_a, check)


@dataclass
class Source:
    """Pieces of the Laplace-side data: y = w + C y and psi_hat = gpsi0 - i psi1 + y.

    All three are ModeVectors on the D nodes; ``rho_*`` are the densities that produce
    them through the mode kernels, which is how they are evaluated elsewhere.
    """

    w: ModeVector
    psi1: ModeVector
    gpsi0: ModeVector
    rho_gpsi0: np.ndarray
    rho_psi1: np.ndarray
    rho_w: np.ndarray


def sample_psi0(pot, psi0):
    """psi0 on the D nodes, rejecting initial data that does not vanish outside D."""
    dom = pot.domain
    R = dom.support_radius
    probe = np.linspace(R, max(dom.r_B, 2 * R), 64)[1:]
    if dom.dimension == 1:
        probe = np.concatenate([probe, -probe])
    outside = np.asarray(psi0(probe))
    if np.max(np.abs(outside), initial=0.0) > 1e-12:
        raise DomainError("psi0 must be supported in D")
    return np.asarray(psi0(dom.d_nodes), dtype=complex)


def build_source(pot, psi0, C):
    """gpsi0_n = -i g_n psi0, psi1 = C(g psi0), w = -i C psi1 (on the D nodes)."""
    p0 = sample_psi0(pot, psi0)
    wts = pot.domain.d_weights
    nm = C.modes.size
    rho_g = np.tile(-1j * p0, (nm, 1))
    gpsi0 = ModeVector(np.einsum("nij,nj->ni", C.G, rho_g), wts)
    # g psi0 = i * gpsi0
    rho_1 = -C.density(1j * gpsi0.values)
    psi1 = ModeVector(np.einsum("nij,nj->ni", C.G, rho_1), wts)
    rho_w = 1j * C.density(psi1.values)
    w = ModeVector(np.einsum("nij,nj->ni", C.G, rho_w), wts)
    return Source(w, psi1, gpsi0, rho_g, rho_1, rho_w)


def reconstruct_psi_hat(y, src, C, x=None, n=None):
    """psi_hat(x, i(sigma + n omega)) = gpsi0_n - i psi1_n + y_n.

    With ``x`` None the values on the D nodes are returned; otherwise the field is
    re-evaluated at x through the kernels. ``n`` selects one mode.
    """
    if x is None:
        out = src.gpsi0.values - 1j * src.psi1.values + y.values
    else:
        rho_y = src.rho_w - C.density(y.values)
        rho = src.rho_gpsi0 - 1j * src.rho_psi1 + rho_y
        out = C.field_at(rho, x)
    return out if n is None else out[n + C.N]


def total_density(y, src, C):
    """Density whose kernel image is the full psi_hat (all modes)."""
    return src.rho_gpsi0 - 1j * src.rho_psi1 + src.rho_w - C.density(y.values)


# ---------------------------------------------------------------------------
# initial states
# ---------------------------------------------------------------------------


def bump(radius=1.0, dimension=1, power=5):
    """Normalized C^{power-1} bump cos^power(pi x / 2R) supported in |x| <= R."""
    x, w = np.polynomial.legendre.leggauss(200)
    r = radius * x if dimension == 1 else radius * (x + 1) / 2
    ww = radius * w if dimension == 1 else radius * w / 2 * 4 * math.pi * r**2
    norm = math.sqrt(np.sum(ww * np.cos(np.pi * r / (2 * radius)) ** (2 * power)))

    def psi0(xx):
        xx = np.asarray(xx, dtype=float)
        inside = np.abs(xx) < radius
        return np.where(inside, np.cos(np.pi * np.clip(xx, -radius, radius) / (2 * radius)) ** power, 0.0) / norm

    return psi0


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_FUNC = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"type": {"const": "constant"}, "value": {"$ref": "#/$defs/number_or_complex"}},
            "required": ["type", "value"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "tabulated"},
                "x": {"type": "array", "items": {"type": "number"}, "minItems": 2},
                "re": {"type": "array", "items": {"type": "number"}},
                "im": {"type": "array", "items": {"type": "number"}},
            },
            "required": ["type", "x", "re"],
            "additionalProperties": False,
        },
    ]
}

PROBLEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "$defs": {
        "number_or_complex": {
            "oneOf": [
                {"type": "number"},
                {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
            ]
        },
        "function": _FUNC,
    },
    "properties": {
        "dimension": {"enum": [1, 3]},
        "omega": {"type": "number", "exclusiveMinimum": 0},
        "support": {
            "type": "object",
            "properties": {"type": {"enum": ["interval", "ball"]}, "radius": {"type": "number", "exclusiveMinimum": 0}},
            "required": ["type", "radius"],
            "additionalProperties": False,
        },
        "ball_radius": {"type": "number", "exclusiveMinimum": 0},
        "V": {"$ref": "#/$defs/function"},
        "Omega": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "j": {"type": "integer", "not": {"const": 0}},
                    "type": {"enum": ["constant", "tabulated"]},
                    "value": {"$ref": "#/$defs/number_or_complex"},
                    "x": {"type": "array", "items": {"type": "number"}},
                    "re": {"type": "array", "items": {"type": "number"}},
                    "im": {"type": "array", "items": {"type": "number"}},
                },
                "required": ["j", "type"],
                "additionalProperties": False,
            },
        },
        "psi0": {
            "type": "object",
            "properties": {
                "type": {"enum": ["bump", "bound_state", "tabulated"]},
                "power": {"type": "integer", "minimum": 1},
                "level": {"type": "integer", "minimum": 0},
                "x": {"type": "array", "items": {"type": "number"}},
                "re": {"type": "array", "items": {"type": "number"}},
                "im": {"type": "array", "items": {"type": "number"}},
            },
            "required": ["type"],
            "additionalProperties": False,
        },
        "truncation": {
            "type": "object",
            "properties": {
                "N_modes": {"type": "integer", "minimum": 0},
                "J": {"type": "integer", "minimum": 0},
                "grid": {
                    "type": "object",
                    "properties": {
                        "panels": {"type": "integer", "minimum": 1},
                        "order": {"type": "integer", "minimum": 2},
                        "exterior_panels": {"type": "integer", "minimum": 1},
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "regularization": {"type": ["number", "null"]},
    },
    "required": ["dimension", "omega", "support", "V"],
    "additionalProperties": False,
}


def _as_complex(v):
    return complex(v[0], v[1]) if isinstance(v, list) else v


def _function_from(entry):
    if entry["type"] == "constant":
        return _constant(_as_complex(entry["value"]))
    xs = np.asarray(entry["x"], dtype=float)
    re = np.asarray(entry["re"], dtype=float)
    im = np.asarray(entry.get("im", np.zeros_like(re)), dtype=float)
    if re.shape != xs.shape or im.shape != xs.shape:
        raise ConfigError("tabulated arrays must have equal length")
    if np.any(np.diff(xs) <= 0):
        raise ConfigError("tabulated x must be strictly increasing")
    if not np.any(im):
        return lambda x: np.interp(x, xs, re)
    return lambda x: np.interp(x, xs, re) + 1j * np.interp(x, xs, im)


@dataclass
class Problem:
    pot: PotentialSpec
    psi0: Callable
    N_modes: int
    regularization: float | None
    psi0_kind: str = "bump"
    level: int = 0

    def require_compact_psi0(self):
        if self.psi0 is None:
            raise ConfigError("a bound-state psi0 is not compactly supported; only 'simulate' accepts it")
        return self.psi0


def validate_config(cfg):
    import jsonschema

    try:
        jsonschema.validate(cfg, PROBLEM_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid problem configuration: {exc.message}") from exc


def problem_from_config(cfg):
    """Build a Problem from a validated JSON-style dict (unknown keys are rejected)."""
    validate_config(cfg)
    dim = cfg["dimension"]
    sup = cfg["support"]
    if (sup["type"] == "interval") != (dim == 1):
        raise ConfigError("support type must be 'interval' in d=1 and 'ball' in d=3")
    trunc = cfg.get("truncation", {})
    grid = trunc.get("grid", {})
    R = float(sup["radius"])
    domain = Domain(
        dim,
        R,
        float(cfg.get("ball_radius", 2 * R)),
        grid.get("panels", 6),
        grid.get("order", 8),
        grid.get("exterior_panels", 2),
    )
    J = trunc.get("J", 8)
    Omega = {}
    for e in cfg.get("Omega", []):
        if e["type"] == "constant" and "value" not in e:
            raise ConfigError(f"Omega_{e['j']}: constant entry needs 'value'")
        if abs(e["j"]) > J:
            raise ConfigError(f"Omega_{e['j']} exceeds the harmonic truncation J={J}")
        Omega[e["j"]] = _function_from(e)
    pot = PotentialSpec(float(cfg["omega"]), _function_from(cfg["V"]), Omega, domain, "config")
    p0 = cfg.get("psi0", {"type": "bump"})
    if p0["type"] == "bump":
        psi0 = bump(R, dim, p0.get("power", 5))
    elif p0["type"] == "tabulated":
        psi0 = _function_from({"type": "tabulated", **{k: v for k, v in p0.items() if k != "type"}})
    else:
        psi0 = None
    reg = cfg.get("regularization", DEFAULT_REGULARIZATION if dim == 1 else None)
    return Problem(pot, psi0, trunc.get("N_modes", 32), reg, p0["type"], p0.get("level", 0))
