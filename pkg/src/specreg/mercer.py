"""Explicit kernels and Mercer eigensystems.

Four families are shipped: the ``min`` kernel on [0, 1] with its closed-form
sine eigensystem, the Sobolev H^1([0, 1]) kernel (evaluator only), shift
invariant kernels on the torus [-pi, pi)^d with a real Fourier eigenbasis, and
dot-product kernels on the sphere S^d described through their per-degree
eigenvalues.

Eigen-indices are 1-based throughout: ``eigenvalue(1)`` is the largest.
Eigenfunctions are vectorised as ``eigenfunction(indices, points)`` returning
an array of shape ``(len(points), len(indices))``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate, special

__all__ = [
    "Interval",
    "Torus",
    "Sphere",
    "EigenSystem",
    "Kernel",
    "min_kernel",
    "min_kernel_eigensystem",
    "sobolev_h1_kernel",
    "h1_reproducing_residual",
    "mercer_partial_sum",
    "orthonormality_error",
    "periodic_kernel",
    "periodic_kernel_eigensystem",
    "sphere_harmonic_dims",
    "sphere_dot_product_kernel",
    "sphere_eigenvalues",
    "EmbeddingCheck",
    "dot_product_embedding_check",
    "get_kernel",
    "get_eigensystem",
]

# Max number of float64 entries materialised per block in chunked sums.
_BLOCK = 1 << 22


@dataclass(frozen=True)
class Interval:
    lo: float = 0.0
    hi: float = 1.0

    @property
    def dim(self) -> int:
        return 1

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all((x >= self.lo) & (x <= self.hi)))

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * rng.random(n)


@dataclass(frozen=True)
class Torus:
    """The periodic box [-pi, pi)^d with the uniform probability measure."""

    d: int = 1

    @property
    def dim(self) -> int:
        return self.d

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all((x >= -np.pi) & (x <= np.pi)))

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        pts = -np.pi + 2 * np.pi * rng.random((n, self.d))
        return pts[:, 0] if self.d == 1 else pts


@dataclass(frozen=True)
class Sphere:
    """The unit sphere S^d embedded in R^{d+1}."""

    d: int = 2

    @property
    def dim(self) -> int:
        return self.d + 1

    def contains(self, x, atol: float = 1e-9) -> bool:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return bool(np.all(np.abs(np.linalg.norm(x, axis=1) - 1) <= atol))

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        g = rng.standard_normal((n, self.d + 1))
        return g / np.linalg.norm(g, axis=1, keepdims=True)


Domain = Union[Interval, Torus, Sphere]


def _points(x, dim: int) -> np.ndarray:
    """Coerce points to shape (p,) for dim 1 or (p, dim) otherwise."""
    x = np.asarray(x, dtype=float)
    if dim == 1:
        return x.reshape(-1)
    return x.reshape(-1, dim)


@dataclass(frozen=True)
class EigenSystem:
    """A Mercer system (lambda_i, e_i) with a claimed decay exponent ``beta``.

    ``size`` is set for finite systems (e.g. truncated Fourier bases); asking
    for an index beyond it raises ``IndexError``. ``labels`` optionally maps
    index ``i`` to ``labels[i - 1]``, a human-readable mode description.
    """

    name: str
    eigenvalue: Callable[[np.ndarray], np.ndarray]
    eigenfunction: Callable[[np.ndarray, np.ndarray], np.ndarray]
    beta: float
    domain: Domain
    default_truncation: int = 100_000
    size: Optional[int] = None
    labels: Optional[tuple] = None

    def _check(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and idx.min() < 1:
            raise IndexError("eigen-indices are 1-based")
        if self.size is not None and idx.size and idx.max() > self.size:
            raise IndexError(f"{self.name} has only {self.size} modes")
        return idx

    def lam(self, idx) -> np.ndarray:
        return self.eigenvalue(self._check(idx))

    def eval(self, idx, x) -> np.ndarray:
        idx = np.atleast_1d(self._check(idx))
        return self.eigenfunction(idx, _points(x, self.domain.dim))

    def truncation(self, n: Optional[int] = None) -> int:
        n = self.default_truncation if n is None else int(n)
        return n if self.size is None else min(n, self.size)

    @classmethod
    def from_values(cls, values: Sequence[float], beta: float = 2.0, name: str = "explicit") -> "EigenSystem":
        """Finite toy system with the given eigenvalues and no eigenfunctions."""
        vals = np.asarray(values, dtype=float)

        def eigenfunction(idx, x):
            raise NotImplementedError("explicit eigenvalue list carries no eigenfunctions")

        return cls(
            name=name,
            eigenvalue=lambda idx: vals[idx - 1],
            eigenfunction=eigenfunction,
            beta=beta,
            domain=Interval(),
            default_truncation=len(vals),
            size=len(vals),
        )


@dataclass(frozen=True)
class Kernel:
    """Pointwise-evaluable symmetric PSD kernel.

    ``evaluate`` maps two point arrays to the cross Gram matrix.
    """

    name: str
    evaluate: Callable[[np.ndarray, np.ndarray], np.ndarray]
    domain: Domain
    kappa_sq: float
    eigensystem: Optional[EigenSystem] = field(default=None, compare=False)

    def __call__(self, x, y) -> float:
        return float(self.gram(x, y)[0, 0])

    def gram(self, xs, ys=None) -> np.ndarray:
        dim = self.domain.dim
        xs = _points(xs, dim)
        ys = xs if ys is None else _points(ys, dim)
        return self.evaluate(xs, ys)


# --------------------------------------------------------------------------
# [0, 1] kernels


def min_kernel() -> Kernel:
    """k(x, y) = min(x, y) on [0, 1]."""
    return Kernel(
        name="min",
        evaluate=lambda a, b: np.minimum.outer(a, b),
        domain=Interval(0.0, 1.0),
        kappa_sq=1.0,
        eigensystem=min_kernel_eigensystem(),
    )


def _min_freq(idx: np.ndarray) -> np.ndarray:
    return (2.0 * idx - 1.0) * np.pi / 2.0


def min_kernel_eigensystem() -> EigenSystem:
    """lambda_n = ((2n - 1) pi / 2)^-2, e_n(x) = sqrt(2) sin((2n - 1) pi x / 2)."""
    return EigenSystem(
        name="min",
        eigenvalue=lambda idx: _min_freq(idx) ** -2.0,
        eigenfunction=lambda idx, x: np.sqrt(2.0) * np.sin(np.multiply.outer(x, _min_freq(idx))),
        beta=2.0,
        domain=Interval(0.0, 1.0),
        default_truncation=100_000,
    )


def _h1(a, b):
    lo = np.minimum.outer(a, b)
    hi = np.maximum.outer(a, b)
    return np.cosh(lo) * np.cosh(1.0 - hi) / np.sinh(1.0)


def sobolev_h1_kernel() -> Kernel:
    """Reproducing kernel of H^1([0, 1]) with norm ||f||^2 = int f^2 + f'^2.

    k(x, y) = cosh(min(x, y)) cosh(1 - max(x, y)) / sinh(1). This is the
    variant that passes :func:`h1_reproducing_residual`; the alternative with
    cosh(1 - min(x, y)) in the second factor is rank one and does not.
    """
    return Kernel(
        name="sobolev_h1",
        evaluate=_h1,
        domain=Interval(0.0, 1.0),
        kappa_sq=float(np.cosh(1.0) / np.sinh(1.0)),
    )


def h1_reproducing_residual(k: Callable[[float, float], float], x: float, y: float, h: float = 1e-6) -> float:
    """<k(x, .), k(y, .)>_{H^1} - k(x, y), by adaptive quadrature.

    Derivatives are central differences; the kinks at ``x`` and ``y`` are
    passed to the integrator as breakpoints.
    """

    def integrand(t):
        kx, ky = k(x, t), k(y, t)
        dkx = (k(x, t + h) - k(x, t - h)) / (2 * h)
        dky = (k(y, t + h) - k(y, t - h)) / (2 * h)
        return kx * ky + dkx * dky

    val, _ = integrate.quad(integrand, 0.0, 1.0, points=sorted({x, y}), limit=200, epsabs=1e-12)
    return float(val - k(x, y))


# --------------------------------------------------------------------------
# Mercer utilities


def mercer_partial_sum(es: EigenSystem, x, y, N: int):
    """Sum_{i <= N} lambda_i e_i(x) e_i(y).

    Scalars in, scalar out; arrays in, a ``(len(x), len(y))`` matrix out.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    scalar = np.ndim(x) == 0 and np.ndim(y) == 0 and es.domain.dim == 1
    dim = es.domain.dim
    xs, ys = _points(x, dim), _points(y, dim)
    N = es.truncation(N)
    out = np.zeros((len(xs), len(ys)))
    step = max(1, _BLOCK // max(len(xs), len(ys), 1))
    for start in range(1, N + 1, step):
        idx = np.arange(start, min(start + step, N + 1))
        lam = es.lam(idx)
        out += (es.eval(idx, xs) * lam) @ es.eval(idx, ys).T
    return float(out[0, 0]) if scalar else out


def _simpson_nodes(lo: float, hi: float, panels: int):
    x = np.linspace(lo, hi, panels + 1)
    w = np.ones(panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return x, w * (hi - lo) / (3.0 * panels)


def orthonormality_error(es: EigenSystem, n_funcs: int = 10, panels: int = 10_000, mc_points: int = 200_000, seed: int = 0) -> float:
    """max_{i,j <= n_funcs} |<e_i, e_j>_{L^2(mu)} - delta_ij|.

    Composite Simpson on an interval, tensor Simpson on a torus with d <= 2,
    fixed-seed Monte Carlo otherwise. Spheres are not supported.
    """
    if panels % 2:
        raise ValueError("panels must be even")
    dom = es.domain
    idx = np.arange(1, es.truncation(n_funcs) + 1)
    if isinstance(dom, Interval):
        x, w = _simpson_nodes(dom.lo, dom.hi, panels)
        w = w / (dom.hi - dom.lo)
    elif isinstance(dom, Torus) and dom.d <= 2:
        per_dim = panels if dom.d == 1 else min(panels, 1000)
        g, gw = _simpson_nodes(-np.pi, np.pi, per_dim)
        gw = gw / (2 * np.pi)
        if dom.d == 1:
            x, w = g, gw
        else:
            X, Y = np.meshgrid(g, g, indexing="ij")
            x = np.column_stack([X.ravel(), Y.ravel()])
            w = np.multiply.outer(gw, gw).ravel()
    elif isinstance(dom, Torus):
        rng = np.random.default_rng(seed)
        x = dom.uniform(rng, mc_points)
        w = np.full(mc_points, 1.0 / mc_points)
    else:
        raise TypeError(f"no quadrature rule for {type(dom).__name__}")
    E = es.eval(idx, x)
    G = (E * w[:, None]).T @ E
    return float(np.abs(G - np.eye(len(idx))).max())


# --------------------------------------------------------------------------
# Shift-invariant kernels on the torus


def _wrap(z):
    return (np.asarray(z) + np.pi) % (2 * np.pi) - np.pi


def periodic_kernel(g: Callable[[np.ndarray], np.ndarray], d: int = 1, kappa_sq: Optional[float] = None) -> Kernel:
    """k(x, y) = g((x - y) mod [-pi, pi)^d). ``g`` takes an (..., d) array for d > 1."""

    def evaluate(a, b):
        if d == 1:
            return g(_wrap(np.subtract.outer(a, b)))
        diff = _wrap(a[:, None, :] - b[None, :, :])
        return g(diff)

    zero = np.zeros(d) if d > 1 else 0.0
    k0 = float(g(np.asarray(zero))) if kappa_sq is None else kappa_sq
    return Kernel(name="periodic", evaluate=evaluate, domain=Torus(d), kappa_sq=k0)


def _half_space_frequencies(d: int, max_freq: int) -> list[tuple[int, ...]]:
    """Nonzero m in [-max_freq, max_freq]^d whose first nonzero entry is positive.

    Ordered by (|m|_1, m) lexicographically.
    """
    out = []
    for m in itertools.product(range(-max_freq, max_freq + 1), repeat=d):
        nz = [c for c in m if c != 0]
        if nz and nz[0] > 0:
            out.append(m)
    out.sort(key=lambda m: (sum(abs(c) for c in m), tuple(-c for c in m)))
    return out


def _fourier_coefficients(g, d: int, max_freq: int, grid: Optional[int] = None) -> dict:
    """(1/(2pi)^d) int g(z) cos<m, z> dz for |m_j| <= max_freq, via the FFT."""
    P = grid or max(64, 8 * max_freq + 16)
    z1 = -np.pi + 2 * np.pi * np.arange(P) / P
    if d == 1:
        samples = np.asarray(g(z1), dtype=float)
    else:
        mesh = np.stack(np.meshgrid(*([z1] * d), indexing="ij"), axis=-1)
        samples = np.asarray(g(mesh), dtype=float)
    F = np.fft.fftn(samples) / P**d
    coeffs = {}
    for m in itertools.product(range(-max_freq, max_freq + 1), repeat=d):
        # grid starts at -pi, so each frequency picks up a (-1)^{sum m} phase
        val = F[tuple(c % P for c in m)] * (-1) ** (sum(m) % 2)
        coeffs[m] = float(val.real)
    return coeffs


def periodic_kernel_eigensystem(
    g: Optional[Callable] = None,
    d: int = 1,
    max_freq: int = 16,
    coefficient_rule: Optional[Callable[[tuple], float]] = None,
    beta: Optional[float] = None,
    psd_tol: float = 1e-9,
) -> EigenSystem:
    """Real Fourier eigensystem of a shift-invariant kernel on [-pi, pi)^d.

    Either ``g`` (an even function on the torus) or ``coefficient_rule``
    (frequency tuple -> Fourier coefficient) must be given. Modes are the
    constant 1 and, for each half-space frequency m, sqrt(2) cos<m, x>
    (label ``+m``) followed by sqrt(2) sin<m, x> (label ``-m``); both carry the
    eigenvalue g_hat(m). The enumeration is stable-sorted by eigenvalue,
    descending.
    """
    if (g is None) == (coefficient_rule is None):
        raise ValueError("give exactly one of g or coefficient_rule")
    if coefficient_rule is None:
        table = _fourier_coefficients(g, d, max_freq)
        coefficient_rule = table.__getitem__
    zero = (0,) * d
    modes = [(zero, "cos", float(coefficient_rule(zero)))]
    for m in _half_space_frequencies(d, max_freq):
        c = float(coefficient_rule(m))
        modes.append((m, "cos", c))
        modes.append((m, "sin", c))
    vals = np.array([v for *_, v in modes])
    if vals.min() < -psd_tol:
        bad = modes[int(vals.argmin())]
        raise ValueError(f"kernel is not PSD: eigenvalue {bad[2]:.3g} at frequency {bad[0]}")
    order = np.argsort(-vals, kind="stable")
    vals = np.clip(vals[order], 0.0, None)
    freqs = np.array([modes[i][0] for i in order], dtype=float).reshape(len(order), d)
    is_sin = np.array([modes[i][1] == "sin" for i in order])
    is_const = np.all(freqs == 0, axis=1)
    labels = tuple(
        (tuple(-c for c in modes[i][0]) if modes[i][1] == "sin" else modes[i][0]) for i in order
    )

    def eigenfunction(idx, x):
        x = x.reshape(len(x), d)
        phase = x @ freqs[idx - 1].T
        out = np.where(is_sin[idx - 1], np.sin(phase), np.cos(phase)) * np.sqrt(2.0)
        return np.where(is_const[idx - 1], 1.0, out)

    if beta is None:
        beta = _loglog_decay(vals)
    return EigenSystem(
        name="periodic",
        eigenvalue=lambda idx: vals[idx - 1],
        eigenfunction=eigenfunction,
        beta=beta,
        domain=Torus(d),
        default_truncation=len(vals),
        size=len(vals),
        labels=labels,
    )


def _loglog_decay(vals: np.ndarray) -> float:
    pos = vals[vals > 0]
    if len(pos) < 10:
        return float("nan")
    i = np.arange(1, len(pos) + 1)
    slope = np.polyfit(np.log(i[len(i) // 2 :]), np.log(pos[len(i) // 2 :]), 1)[0]
    return float(-slope)


# --------------------------------------------------------------------------
# Sphere


def sphere_harmonic_dims(d: int, n: int) -> int:
    """Dimension of degree-n spherical harmonics on S^d."""
    if d < 2 or n < 0:
        raise ValueError("need d >= 2 and n >= 0")
    return comb(n + d, n) - (comb(n - 2 + d, n - 2) if n >= 2 else 0)


def sphere_eigenvalues(mu_rule: Callable[[int], float], d: int, max_degree: int) -> np.ndarray:
    """Eigenvalues mu_n repeated a_n times, sorted non-increasing."""
    mus = np.array([mu_rule(n) for n in range(max_degree + 1)], dtype=float)
    mult = [sphere_harmonic_dims(d, n) for n in range(max_degree + 1)]
    return np.sort(np.repeat(mus, mult))[::-1]


def sphere_dot_product_kernel(mu_rule: Callable[[int], float], d: int = 2, max_degree: int = 64) -> Kernel:
    """k(x, y) = sum_n mu_n a_n C_n^l(<x, y>) / C_n^l(1), l = (d - 1) / 2.

    This is the addition theorem under the normalised surface measure, so
    mu_n is the eigenvalue of degree n with multiplicity a_n.
    """
    lam = (d - 1) / 2.0
    degrees = np.arange(max_degree + 1)
    weights = np.array([mu_rule(n) * sphere_harmonic_dims(d, n) for n in degrees], dtype=float)
    norm = special.eval_gegenbauer(degrees, lam, 1.0)

    def evaluate(a, b):
        t = np.clip(a @ b.T, -1.0, 1.0)
        out = np.zeros_like(t)
        for n in degrees:
            out += weights[n] * special.eval_gegenbauer(n, lam, t) / norm[n]
        return out

    return Kernel(name="sphere", evaluate=evaluate, domain=Sphere(d), kappa_sq=float(weights.sum()))


@dataclass(frozen=True)
class EmbeddingCheck:
    partial_sums: tuple  # ((N, S_N), ...)
    verdict: str  # "convergent" | "divergent"
    implied_edr: float
    predicted: str  # verdict implied by alpha vs 1 / beta


def dot_product_embedding_check(
    mu_rule: Callable[[int], float],
    d: int,
    beta: float,
    alpha: float,
    N_grid: Sequence[int] = (100, 1_000, 10_000),
    ratio_tol: float = 0.5,
) -> EmbeddingCheck:
    """Evidence on whether sum_n a_n mu_n^alpha converges.

    Verdict is "convergent" when the increments between consecutive grid
    values shrink by at least ``ratio_tol`` each step. The implied EDR is the
    slope of log mu_n against the log cumulative multiplicity over the upper
    half of the degree range.
    """
    N_grid = sorted(int(n) for n in N_grid)
    if len(N_grid) < 3:
        raise ValueError("need at least three grid values")
    top = N_grid[-1]
    degrees = np.arange(top + 1)
    mus = np.array([mu_rule(int(n)) for n in degrees], dtype=float)
    # a_n in floating point; exact ints overflow float for large n, d
    mult = np.array([float(sphere_harmonic_dims(d, int(n))) for n in degrees])
    terms = mult * mus**alpha
    csum = np.cumsum(terms)
    sums = tuple((n, float(csum[n])) for n in N_grid)
    inc = np.diff([s for _, s in sums])
    shrinking = np.all(inc[1:] <= ratio_tol * inc[:-1])
    verdict = "convergent" if shrinking else "divergent"

    count = np.cumsum(mult)
    half = degrees[top // 2 :]
    slope = np.polyfit(np.log(count[half]), np.log(mus[half]), 1)[0]
    return EmbeddingCheck(
        partial_sums=sums,
        verdict=verdict,
        implied_edr=float(-slope),
        predicted="convergent" if alpha > 1.0 / beta else "divergent",
    )


# --------------------------------------------------------------------------
# registry


def _von_mises(z):
    return np.exp(np.cos(z))


def get_kernel(name: str, **opts) -> Kernel:
    """Kernel by stable config id: ``min``, ``sobolev_h1``, ``periodic``, ``sphere``."""
    if name == "min":
        return min_kernel()
    if name == "sobolev_h1":
        return sobolev_h1_kernel()
    if name == "periodic":
        g = opts.get("g", _von_mises)
        es = periodic_kernel_eigensystem(g, d=opts.get("d", 1), max_freq=opts.get("max_freq", 16))
        k = periodic_kernel(g, d=opts.get("d", 1))
        return Kernel(k.name, k.evaluate, k.domain, k.kappa_sq, es)
    if name == "sphere":
        beta = opts.get("beta", 2.0)
        d = opts.get("d", 2)
        return sphere_dot_product_kernel(lambda n: (n + 1.0) ** (-d * beta), d, opts.get("max_degree", 64))
    raise KeyError(f"unknown kernel id {name!r}")


def get_eigensystem(name: str, **opts) -> EigenSystem:
    """Eigensystem by id: ``min`` or ``periodic``.

    ``periodic`` uses the coefficient rule (1 + |m|_1)^-beta unless ``g`` is
    given. The H^1 kernel ships no eigensystem.
    """
    if name == "min":
        return min_kernel_eigensystem()
    if name == "periodic":
        d = int(opts.get("d", 1))
        if "g" in opts:
            return periodic_kernel_eigensystem(opts["g"], d=d, max_freq=int(opts.get("max_freq", 16)))
        beta = float(opts.get("beta", 2.0))
        return periodic_kernel_eigensystem(
            coefficient_rule=lambda m: (1.0 + sum(abs(c) for c in m)) ** -beta,
            d=d,
            max_freq=int(opts.get("max_freq", 256)),
            beta=beta,
        )
    raise KeyError(f"unknown eigensystem id {name!r}")
