"""Free Green kernels of -Laplacian + kappa^2 and their Nystrom discretization.

Conventions: hbar = 2m = 1, so the mode-n resolvent is (-Delta + sigma + n*omega)^-1
with kernel G(kappa_n |x - x'|),

    d=1: exp(-kappa r) / (2 kappa)
    d=2: K0(kappa r) / (2 pi)
    d=3: exp(-kappa r) / (4 pi r)

Only radially symmetric supports are discretized in d=3 (l=0 sector), where the
angular average of the kernel reduces to a half-line Dirichlet Green function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError, DomainError, ResolutionError

EULER_GAMMA = 0.57721566490153286061

# nodes per wavelength 2 pi / |kappa| demanded at assembly
NODES_PER_WAVELENGTH = 8


# ---------------------------------------------------------------------------
# spectral parameter and branch bookkeeping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralPoint:
    """sigma = u**2 together with the forcing frequency omega."""

    sigma: complex
    u: complex
    omega: float

    @classmethod
    def from_sigma(cls, sigma, omega):
        sigma = complex(sigma)
        return cls(sigma, complex(np.sqrt(sigma)), float(omega))

    @classmethod
    def from_u(cls, u, omega):
        u = complex(u)
        return cls(u * u, u, float(omega))

    @classmethod
    def from_p(cls, p, omega):
        """Map a Laplace variable p = i(sigma + n omega) to (sigma, n), Re sigma in [0, omega)."""
        p = complex(p)
        n = math.floor(p.imag / omega)
        sigma = -1j * p - n * omega
        return cls.from_sigma(sigma, omega), n

    def in_strip(self):
        return abs((self.u * self.u).real) < self.omega

    def shifted(self, dsigma):
        """Point at sigma + dsigma, keeping u on the continuous branch."""
        sigma = self.sigma + dsigma
        u = complex(np.sqrt(sigma))
        if abs(u - self.u) > abs(-u - self.u):
            u = -u
        return SpectralPoint(sigma, u, self.omega)


def kappa(n, s):
    """Mode momentum kappa_n = sqrt(sigma + n omega) on the branch analytic in u.

    kappa_0 = u. For n > 0 the principal root, for n < 0 the root -i sqrt(-sigma - n omega);
    both are analytic on S_omega = {|Re u^2| < omega} and lie in the fourth quadrant when
    Im sigma < 0.
    """
    n = int(n)
    if n == 0:
        return s.u
    sigma = s.u * s.u
    if n > 0:
        z = sigma + n * s.omega
        if z.real <= 0 and sigma.imag >= 0 and z != 0:
            raise DomainError(f"kappa_{n}: sigma={sigma} outside the analytic domain")
        return complex(np.sqrt(z))
    z = -sigma - n * s.omega
    if z.real <= 0 and sigma.imag > 0:
        raise DomainError(f"kappa_{n}: u={s.u} outside S_omega (Re u^2 >= {-n}*omega)")
    return complex(-1j * np.sqrt(z))


def kappas(ns, s):
    return np.array([kappa(n, s) for n in ns], dtype=complex)


# ---------------------------------------------------------------------------
# K0
# ---------------------------------------------------------------------------

_GL_CACHE = {}


def gauss_legendre(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _k0_laplace_rep(z):
    # e^{-z} int_0^inf e^{-zs} / sqrt(s(s+2)) ds, rotated onto arg s = -arg z, then s = v^2 e^{-i theta}
    r = abs(z)
    theta = np.angle(z)
    vmax = math.sqrt(46.0 / r)
    x, w = gauss_legendre(40)
    edges = np.linspace(0.0, vmax, 9)
    total = 0.0 + 0.0j
    rot = np.exp(-1j * theta)
    for a, b in zip(edges[:-1], edges[1:]):
        v = 0.5 * (b - a) * x + 0.5 * (b + a)
        f = 2.0 * np.exp(-r * v * v) / np.sqrt(v * v * rot + 2.0)
        total += 0.5 * (b - a) * np.dot(w, f)
    return np.exp(-z) * np.exp(-0.5j * theta) * total


def _k0_series(z):
    # K0(z) = -(log(z/2) + gamma) I0(z) + sum_{k>=1} (z^2/4)^k / (k!)^2 H_k
    q = z * z / 4.0
    term = 1.0 + 0.0j
    i0 = term
    tail = 0.0 + 0.0j
    harmonic = 0.0
    for k in range(1, 200):
        term = term * q / (k * k)
        harmonic += 1.0 / k
        i0 += term
        tail += term * harmonic
        if abs(term) * (1 + harmonic) < 1e-18 * abs(i0):
            break
    return -(np.log(z / 2.0) + EULER_GAMMA) * i0 + tail


def bessel_k0(z):
    """Modified Bessel function K0 for Re z > 0.

    Uses the exponentially weighted integral e^{-z} int_0^inf e^{-zs}/sqrt(s(s+2)) ds for
    Re z >= 0.5 and the ascending series below that.
    """
    zs = np.asarray(z, dtype=complex)
    if np.any(zs.real <= 0):
        raise DomainError("bessel_k0 requires Re z > 0")
    out = np.empty(zs.shape, dtype=complex)
    for idx, zz in np.ndenumerate(zs):
        out[idx] = _k0_laplace_rep(zz) if zz.real >= 0.5 else _k0_series(zz)
    return out[()] if out.ndim == 0 else out


def bessel_k0_cosh(z, tmax=None):
    """The first integral representation int_0^inf exp(-z cosh t) dt (real-axis quadrature)."""
    z = complex(z)
    if z.real <= 0:
        raise DomainError("bessel_k0_cosh requires Re z > 0")
    if tmax is None:
        tmax = math.acosh(max(1.0, 40.0 / z.real)) + 1.0
    x, w = gauss_legendre(40)
    edges = np.linspace(0.0, tmax, 17)
    total = 0.0 + 0.0j
    for a, b in zip(edges[:-1], edges[1:]):
        t = 0.5 * (b - a) * x + 0.5 * (b + a)
        total += 0.5 * (b - a) * np.dot(w, np.exp(-z * np.cosh(t)))
    return total


def green_value(d, kappa_, r):
    """Free kernel G(kappa r) in dimension d."""
    r = np.asarray(r, dtype=float)
    k = complex(kappa_)
    if d == 1:
        return np.exp(-k * r) / (2.0 * k)
    if d not in (2, 3):
        raise DomainError(f"dimension must be 1, 2 or 3, got {d}")
    if np.any(r <= 0):
        raise DomainError(f"G is singular at r=0 in d={d}; use singularity-aware quadrature")
    if d == 2:
        return bessel_k0(k * r) / (2.0 * math.pi)
    return np.exp(-k * r) / (4.0 * math.pi * r)


# ---------------------------------------------------------------------------
# quadrature on D and B
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Domain:
    """Composite Gauss-Legendre grid on the ball B, with panel breaks at the edge of D.

    d=1: D = [-R, R], B = [-r_B, r_B].  d=3: radial grids on [0, R] and [R, r_B]; the
    measure includes 4 pi r^2.
    """

    dimension: int = 1
    support_radius: float = 1.0
    ball_radius: float | None = None
    panels: int = 6
    order: int = 8
    exterior_panels: int = 2

    def __post_init__(self):
        if self.dimension not in (1, 3):
            raise ConfigError("Nystrom discretization is implemented for d=1 and radial d=3")
        if self.ball_radius is not None and self.ball_radius < self.support_radius:
            raise ConfigError("ball B must contain D")

    @property
    def r_B(self):
        return self.support_radius if self.ball_radius is None else self.ball_radius

    @cached_property
    def _grid(self):
        R, rb = self.support_radius, self.r_B
        if self.dimension == 1:
            d_edges = np.linspace(-R, R, self.panels + 1)
        else:
            d_edges = np.linspace(0.0, R, self.panels + 1)
        d_panels = list(zip(d_edges[:-1], d_edges[1:]))
        left, right = [], []
        if rb > R:
            e = np.linspace(R, rb, self.exterior_panels + 1)
            right = list(zip(e[:-1], e[1:]))
            if self.dimension == 1:
                left = [(-b, -a) for a, b in reversed(right)]
        all_panels = left + d_panels + right
        x, w = gauss_legendre(self.order)
        nodes, weights = [], []
        for a, b in all_panels:
            nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
            weights.append(0.5 * (b - a) * w)
        nodes = np.concatenate(nodes)
        weights = np.concatenate(weights)
        if self.dimension == 3:
            weights = weights * 4.0 * math.pi * nodes**2
        n_left = len(left) * self.order
        d_slice = slice(n_left, n_left + len(d_panels) * self.order)
        return nodes, weights, d_slice, d_panels

    @property
    def nodes(self):
        return self._grid[0]

    @property
    def weights(self):
        return self._grid[1]

    @property
    def d_slice(self):
        return self._grid[2]

    @property
    def d_panels(self):
        return self._grid[3]

    @property
    def d_nodes(self):
        return self.nodes[self.d_slice]

    @property
    def d_weights(self):
        return self.weights[self.d_slice]

    @property
    def node_spacing(self):
        a, b = self.d_panels[0]
        return (b - a) / self.order

    def check_resolution(self, kappa_):
        if abs(kappa_) * self.node_spacing > 2 * math.pi / NODES_PER_WAVELENGTH:
            raise ResolutionError(
                f"|kappa|={abs(kappa_):.3g} needs node spacing <= "
                f"{2 * math.pi / NODES_PER_WAVELENGTH / abs(kappa_):.3g}, have {self.node_spacing:.3g}"
            )

    def l2_inner(self, f, g):
        return np.sum(self.weights * np.conj(f) * g)


def _barycentric_basis(ref_nodes, eta):
    """Lagrange basis on ref_nodes evaluated at eta; returns shape eta.shape + (p,)."""
    p = len(ref_nodes)
    lam = np.array([1.0 / np.prod([ref_nodes[j] - ref_nodes[k] for k in range(p) if k != j]) for j in range(p)])
    diff = eta[..., None] - ref_nodes
    exact = diff == 0
    diff = np.where(exact, 1.0, diff)
    terms = lam / diff
    basis = terms / terms.sum(axis=-1, keepdims=True)
    hit = exact.any(axis=-1)
    if np.any(hit):
        basis[hit] = exact[hit].astype(float)
    return basis


def product_matrix(kernel, targets, domain, sub_order=None):
    """Nystrom matrix of f -> int_D kernel(x, s) f(s) ds for f sampled on the D nodes.

    Each source panel is split at the target point, so kernels with a derivative jump on
    the diagonal keep spectral accuracy (product integration against the panel's
    Lagrange interpolant).
    """
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    p = domain.order
    q = sub_order or 2 * p
    ref, _ = gauss_legendre(p)
    eta, weta = gauss_legendre(q)
    out = np.zeros((targets.size, len(domain.d_panels) * p), dtype=complex)
    for k, (a, b) in enumerate(domain.d_panels):
        c = np.clip(targets, a, b)[:, None]
        s_left = a + (c - a) * (eta + 1) / 2
        s_right = c + (b - c) * (eta + 1) / 2
        w_left = (c - a) / 2 * weta
        w_right = (b - c) / 2 * weta
        s = np.concatenate([s_left, s_right], axis=1)
        ws = np.concatenate([w_left, w_right], axis=1)
        basis = _barycentric_basis(ref, 2 * (s - a) / (b - a) - 1)
        kv = kernel(targets[:, None], s) * ws
        out[:, k * p:(k + 1) * p] = np.einsum("tq,tqj->tj", kv, basis)
    return out


def _sinh_over(u, y):
    u = np.asarray(u, dtype=complex)
    small = np.abs(u * y) < 1e-8
    safe = np.where(small, 1.0, u)
    return np.where(small, y * (1 + (u * y) ** 2 / 6), np.sinh(u * y) / safe)


def _one_minus_exp_over(k, m):
    # (1 - exp(-2 k m)) / (2 k), with the k -> 0 limit m
    if k == 0:
        return m + 0j
    return -np.expm1(-2.0 * k * m) / (2.0 * k)


def free_kernel(d, kappa_):
    """Kernel callable K(x, s) so that (g f)(x) = int_D K(x, s) f(s) ds (d=3: radial, ds = dr')."""
    k = complex(kappa_)
    if d == 1:
        if k == 0:
            raise DomainError("1D free kernel is singular at kappa=0; use the regularized n=0 kernel")
        return lambda x, s: np.exp(-k * np.abs(x - s)) / (2.0 * k)
    if d == 3:
        def k3(x, s):
            m = np.minimum(x, s)
            return s * np.exp(-k * np.abs(x - s)) * _one_minus_exp_over(k, m) / x
        return k3
    raise DomainError("discretized kernels exist for d=1 and radial d=3 only")


# ---------------------------------------------------------------------------
# regularized 1D n=0 kernel g_{0,a}
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegularizedZeroMode:
    """Solutions psi_+/psi_- of -psi'' + (c chi_[-R,R] + u^2) psi = 0 and their Green function.

    psi_+ = exp(-u x) for x >= R, psi_- = exp(u x) for x <= -R; both analytic in u at u = 0.
    Inside [-R, R], with tau^2 = -c - u^2,
    psi_pm(x) = exp(-u R) [cos(tau (x -+ R)) -+ u sin(tau (x -+ R)) / tau].
    c < 0 is a well (the construction with a = -c), c > 0 a barrier.
    """

    c: float
    u: complex
    R: float = 1.0

    def __post_init__(self):
        if self.c == 0:
            raise ConfigError("regularization strength must be nonzero")
        if self.c < 0 and abs(math.sin(2 * self.R * math.sqrt(-self.c))) < 1e-8:
            raise ConfigError(f"sin(2 R sqrt(a)) vanishes for a={-self.c}; choose another a")

    @property
    def tau(self):
        return complex(np.sqrt(-self.c - self.u * self.u + 0j))

    def _inside(self, x, sign):
        # sign=+1 -> psi_+, sign=-1 -> psi_-
        u, R, tau = self.u, self.R, self.tau
        y = x - sign * R
        sinc_tau = np.sin(tau * y) / tau if tau != 0 else y + 0j
        val = np.exp(-u * R) * (np.cos(tau * y) - sign * u * sinc_tau)
        der = np.exp(-u * R) * (-tau * np.sin(tau * y) - sign * u * np.cos(tau * y))
        return val, der

    def psi(self, x, sign, derivative=False):
        x = np.asarray(x, dtype=float)
        u, R = self.u, self.R
        val = np.empty(x.shape, dtype=complex)
        der = np.empty(x.shape, dtype=complex)
        mid = np.abs(x) <= R
        v, d = self._inside(x[mid], sign)
        val[mid], der[mid] = v, d
        free = sign * x > R
        val[free] = np.exp(-sign * u * x[free])
        der[free] = -sign * u * np.exp(-sign * u * x[free])
        # opposite side: continue from that edge with the free equation
        far = ~mid & ~free
        if np.any(far):
            edge = -sign * R
            v0, d0 = self._inside(np.array([edge]), sign)
            y = x[far] - edge
            ch = np.cosh(u * y)
            sh = _sinh_over(u, y)
            val[far] = v0[0] * ch + d0[0] * sh
            der[far] = v0[0] * u * u * sh + d0[0] * ch
        return der if derivative else val

    @property
    def wronskian(self):
        """W = psi_- psi_+' - psi_-' psi_+ (independent of x)."""
        x = np.array([self.R])
        return complex(
            self.psi(x, -1)[0] * self.psi(x, +1, True)[0] - self.psi(x, -1, True)[0] * self.psi(x, +1)[0]
        )

    def kernel(self):
        W = self.wronskian
        if abs(W) < 1e-13:
            raise DomainError(f"regularized zero-mode Wronskian vanishes at u={self.u}")

        def k(x, s):
            hi, lo = np.broadcast_arrays(np.maximum(x, s), np.minimum(x, s))
            return -(self.psi(hi.ravel(), +1) * self.psi(lo.ravel(), -1)).reshape(hi.shape) / W

        return k


# ---------------------------------------------------------------------------
# assembled kernels
# ---------------------------------------------------------------------------


@dataclass
class GreenKernel:
    """Discretized g_n: matrix maps values on the D nodes to values on ``targets``."""

    dimension: int
    n: int
    kappa: complex
    matrix: np.ndarray
    domain: Domain
    regularization: float | None = None
    kernel_fn: object = field(default=None, repr=False)

    def apply(self, f):
        return self.matrix @ f

    def at(self, targets):
        """Matrix for evaluation at arbitrary points (used for exterior traces)."""
        return product_matrix(self.kernel_fn, targets, self.domain)

    def kernel_values(self):
        """Kernel sampled at (node, node) pairs of D; symmetric for a symmetric kernel."""
        x = self.domain.d_nodes
        vals = self.kernel_fn(x[:, None], x[None, :])
        if self.dimension == 3:
            vals = vals / x[None, :] ** 2
        return vals

    def to_bytes(self):
        """Row-major little-endian (re, im) float64 pairs."""
        return np.ascontiguousarray(self.matrix, dtype="<c16").tobytes()

    @staticmethod
    def matrix_from_bytes(data, shape):
        return np.frombuffer(data, dtype="<c16").reshape(shape).copy()


def kernel_for_mode(domain, n, s, regularize_a=None):
    """Kernel callable and kappa_n for mode n.

    In d=1 with ``regularize_a`` = c set, n=0 uses the Green function of
    -d^2/dx^2 + c chi_D + u^2, which stays analytic through u = 0.
    """
    k = kappa(n, s)
    if domain.dimension == 1 and n == 0 and regularize_a is not None:
        reg = RegularizedZeroMode(regularize_a, s.u, domain.support_radius)
        return reg.kernel(), k
    return free_kernel(domain.dimension, k), k


def assemble_g_n(domain, n, s, regularize_a=None, targets=None, check=True):
    """Nystrom matrix of g_n as a map from L^2(D) samples to the B nodes (or ``targets``)."""
    kfn, k = kernel_for_mode(domain, n, s, regularize_a)
    if check:
        domain.check_resolution(k)
    pts = domain.nodes if targets is None else targets
    mat = product_matrix(kfn, pts, domain)
    reg = regularize_a if (domain.dimension == 1 and n == 0) else None
    return GreenKernel(domain.dimension, n, k, mat, domain, reg, kfn)


def green_0a(a, u, domain):
    """Regularized 1D zero-mode kernel g_{0,a} built on a well of depth a > 0.

    Its Wronskian at u = 0 is sqrt(a) sin(2 sqrt(a)) (R = 1); it inverts
    -d^2/dx^2 - a chi_D + u^2.
    """
    if domain.dimension != 1:
        raise DomainError("g_{0,a} is a one-dimensional construction")
    s = SpectralPoint.from_u(u, 1.0)
    return assemble_g_n(domain, 0, s, regularize_a=-a)


def weighted_norm(matrix, w_out, w_in):
    """Operator 2-norm between weighted L^2 spaces."""
    m = np.sqrt(w_out)[:, None] * matrix / np.sqrt(w_in)[None, :]
    return float(np.linalg.norm(m, 2))


def g_norm_estimate(domain, n, s, regularize_a=None):
    """Largest singular value of g_n as an operator L^2(D) -> L^2(D)."""
    gk = assemble_g_n(domain, n, s, regularize_a, targets=domain.d_nodes)
    return weighted_norm(gk.matrix, domain.d_weights, domain.d_weights)
