"""Misspecified series targets, data generation and lower-bound hard instances."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy import fft

from .estimator import SampleSet
from .mercer import EigenSystem, Interval, min_kernel_eigensystem

__all__ = [
    "SeriesTarget",
    "SeriesNorm",
    "series_target",
    "sobolev_series_target",
    "min_series_target",
    "get_target",
    "evaluate_target",
    "interpolation_norm",
    "series_norm",
    "sample_data",
    "SAMPLER",
    "PackingError",
    "pack_hypercube",
    "HardInstanceFamily",
    "hard_instance",
    "write_hard_instance",
    "read_hard_instance",
]

SAMPLER = "numpy.random.default_rng (PCG64)"
_BLOCK = 1 << 22


@dataclass(frozen=True)
class SeriesTarget:
    """f = sum_{k <= truncation} coefficient_rule(k) * basis_{term_map(k)}.

    ``basis(indices, x)`` returns an array of shape ``(len(x), len(indices))``.
    With an eigensystem attached the basis is its eigenfunctions and the
    interpolation norms are computable.
    """

    name: str
    coefficient_rule: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    term_map: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    basis: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(repr=False)
    truncation: int
    smoothness_s: Optional[float] = None
    eigensystem: Optional[EigenSystem] = field(default=None, repr=False)
    domain: Interval = Interval()
    # (coefficients over basis indices 1..M, x_j = j/M) -> values; None when unavailable
    grid_kind: Optional[str] = None

    def terms(self, truncation: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
        """(coefficients, basis indices) for k = 1..truncation."""
        N = self.truncation if truncation is None else int(truncation)
        return _terms(self.coefficient_rule, self.term_map, N)

    def with_truncation(self, truncation: int) -> "SeriesTarget":
        return replace(self, truncation=int(truncation))

    def __call__(self, x) -> np.ndarray:
        return evaluate_target(self, x)

    def grid_values(self, panels: int) -> np.ndarray:
        """Values at the panels + 1 uniform nodes of the domain."""
        c, idx = self.terms()
        if self.grid_kind is not None and idx.max() <= panels and self.domain == Interval(0.0, 1.0):
            if self.grid_kind == "min_sine":
                return _min_sine_grid(c, idx, panels)
            if self.grid_kind == "trig":
                return _trig_grid(c, idx, panels)
        x = np.linspace(self.domain.lo, self.domain.hi, panels + 1)
        return evaluate_target(self, x)


@functools.lru_cache(maxsize=32)
def _cached_terms(rule, term_map, N):
    k = np.arange(1, N + 1)
    c = np.asarray(rule(k), dtype=float)
    idx = np.asarray(term_map(k), dtype=np.int64)
    c.setflags(write=False)
    idx.setflags(write=False)
    return c, idx


def _terms(rule, term_map, N):
    try:
        return _cached_terms(rule, term_map, N)
    except TypeError:  # unhashable callables
        return _cached_terms.__wrapped__(rule, term_map, N)


def _min_sine_grid(c, idx, M):
    # sum_n b_n sqrt(2) sin((2n - 1) pi j / (2M)) for j = 1..M is a DST-II
    b = np.zeros(M)
    np.add.at(b, idx - 1, c)
    vals = fft.dst(b, type=2) / 2.0
    return np.concatenate([[0.0], np.sqrt(2.0) * vals])


def _trig_grid(c, idx, M):
    # sum_k c_k (sin 2 pi k j/M + cos 2 pi k j/M): exact after folding k mod M
    b = np.zeros(M, dtype=complex)
    np.add.at(b, idx % M, c)
    z = fft.ifft(b) * M
    vals = z.real + z.imag
    return np.concatenate([vals, vals[:1]])


def series_target(
    es: EigenSystem,
    coefficients: Sequence[float],
    indices: Optional[Sequence[int]] = None,
    name: str = "series",
    smoothness_s: Optional[float] = None,
) -> SeriesTarget:
    """Finite target sum_k coefficients[k] e_{indices[k]} over an explicit eigensystem."""
    coef = np.asarray(coefficients, dtype=float)
    idx = np.arange(1, len(coef) + 1) if indices is None else np.asarray(indices, dtype=np.int64)
    if len(idx) != len(coef):
        raise ValueError("coefficients and indices differ in length")
    return SeriesTarget(
        name=name,
        coefficient_rule=_Lookup(coef),
        term_map=_Lookup(idx),
        basis=es.eval,
        truncation=len(coef),
        smoothness_s=smoothness_s,
        eigensystem=es,
        domain=es.domain if isinstance(es.domain, Interval) else Interval(),
        grid_kind="min_sine" if es.name == "min" else None,
    )


class _Lookup:
    """k -> table[k - 1], hashable by identity."""

    def __init__(self, table):
        self.table = np.asarray(table)

    def __call__(self, k):
        return self.table[np.asarray(k) - 1]


def _power_rule(exponent: float):
    return functools.partial(_power, exponent=exponent)


def _power(k, exponent):
    return np.asarray(k, dtype=float) ** -exponent


def _odd(k):
    return 2 * np.asarray(k) - 1


def _identity(k):
    return np.asarray(k)


def _trig_basis(idx, x):
    a = 2.0 * np.pi * np.multiply.outer(np.asarray(x, dtype=float), idx)
    return np.sin(a) + np.cos(a)


def sobolev_series_target(s: float = 0.4, truncation: int = 3000) -> SeriesTarget:
    """f(x) = sum_k k^-(s + 1/2) (sin 2 pi k x + cos 2 pi k x)."""
    if not 0 < s < 0.5:
        raise ValueError("s must lie in (0, 0.5)")
    return SeriesTarget(
        name="sobolev_series",
        coefficient_rule=_power_rule(s + 0.5),
        term_map=_identity,
        basis=_trig_basis,
        truncation=int(truncation),
        smoothness_s=s,
        grid_kind="trig",
    )


_MIN = min_kernel_eigensystem()


def min_series_target(s: float = 0.4, truncation: int = 3000) -> SeriesTarget:
    """f(x) = sum_k k^-(s + 1/2) e_{2k - 1}(x) over the min-kernel eigensystem."""
    if not 0 < s < 0.5:
        raise ValueError("s must lie in (0, 0.5)")
    return SeriesTarget(
        name="min_series",
        coefficient_rule=_power_rule(s + 0.5),
        term_map=_odd,
        basis=_MIN.eval,
        truncation=int(truncation),
        smoothness_s=s,
        eigensystem=_MIN,
        grid_kind="min_sine",
    )


def get_target(name: str, s: float = 0.4, truncation: int = 3000) -> SeriesTarget:
    """Target by config id: ``sobolev_series`` or ``min_series``."""
    if name == "sobolev_series":
        return sobolev_series_target(s, truncation)
    if name == "min_series":
        return min_series_target(s, truncation)
    raise KeyError(f"unknown target id {name!r}")


def evaluate_target(t: SeriesTarget, x) -> np.ndarray | float:
    """Truncated series value(s) at ``x``; scalar in, scalar out."""
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    c, idx = t.terms()
    out = np.zeros(len(xs))
    step = max(1, _BLOCK // max(len(idx), 1))
    for i in range(0, len(xs), step):
        out[i : i + step] = t.basis(idx, xs[i : i + step]) @ c
    return float(out[0]) if scalar else out


# --------------------------------------------------------------------------
# norms in coefficient space


class SeriesNorm(NamedTuple):
    value: float
    verdict: str  # "converged" | "diverging"
    change: float  # |value(2N) - value(N)|


def series_norm(
    terms_fn: Callable[[int], np.ndarray],
    truncation: int,
    tol: float = 1e-4,
    doublings: int = 3,
    decay_margin: float = 0.05,
) -> SeriesNorm:
    """sqrt(sum of non-negative terms) with a convergence verdict.

    ``terms_fn(N)`` returns the first N terms. Converged when doubling N moves
    the value by less than ``tol``, or when the increments over successive
    doublings shrink like a p-series with p >= 1 + decay_margin.
    """
    N = int(truncation)
    terms = terms_fn(N * 2**doublings)
    csum = np.cumsum(terms)
    value = float(np.sqrt(csum[N - 1]))
    ladder = [csum[N * 2**j - 1] for j in range(doublings + 1)]
    change = float(abs(np.sqrt(ladder[1]) - value))
    verdict = "diverging"
    if change < tol:
        verdict = "converged"
    else:
        inc = np.diff(ladder)
        if np.all(inc[:-1] > 0):
            ratios = inc[1:] / inc[:-1]
            # increments of a p-series over doublings shrink by 2^(1 - p)
            if np.all(ratios <= 2.0 ** (-decay_margin)):
                verdict = "converged"
    return SeriesNorm(value, verdict, change)


def _require_eigensystem(t: SeriesTarget) -> EigenSystem:
    if t.eigensystem is None:
        raise ValueError(f"target {t.name!r} has no eigensystem attached")
    return t.eigensystem


def interpolation_norm(t: SeriesTarget, s_prime: float, truncation: Optional[int] = None, tol: float = 1e-4) -> SeriesNorm:
    """(sum_k c_k^2 lambda_{term_map(k)}^-s')^(1/2), with a doubling-test verdict."""
    es = _require_eigensystem(t)
    if s_prime < 0:
        raise ValueError("s_prime must be non-negative")
    N = t.truncation if truncation is None else int(truncation)
    return series_norm(_weighted_terms(t, es, lambda lam: lam**-s_prime), N, tol)


def _weighted_terms(t: SeriesTarget, es: EigenSystem, weight: Callable) -> Callable[[int], np.ndarray]:
    """M -> c_k^2 * weight(lambda_{term_map(k)}) for k <= M, zero past a finite table."""
    limit = len(t.coefficient_rule.table) if isinstance(t.coefficient_rule, _Lookup) else None

    def terms(M):
        K = M if limit is None else min(M, limit)
        c, idx = _terms(t.coefficient_rule, t.term_map, K)
        out = c**2 * weight(es.lam(idx))
        return np.pad(out, (0, M - K))

    return terms


# --------------------------------------------------------------------------
# data


def sample_data(t: SeriesTarget, n: int, sigma: float, seed: int) -> SampleSet:
    """x ~ U(domain), y = f(x) + N(0, sigma^2); a pure function of ``seed``."""
    rng = np.random.default_rng(seed)
    x = t.domain.uniform(rng, n)
    noise = rng.standard_normal(n)
    return SampleSet(x, evaluate_target(t, x) + sigma * noise)


# --------------------------------------------------------------------------
# lower-bound construction


class PackingError(RuntimeError):
    def __init__(self, achieved: int, needed: int):
        super().__init__(f"packing stopped at {achieved} codewords, need {needed}")
        self.achieved = achieved
        self.needed = needed


def _bits(word: int, m: int) -> str:
    return format(word, f"0{m}b")


def pack_hypercube(m: int, seed: int = 0, budget: int = 1_000_000) -> list[str]:
    """Greedy Gilbert-Varshamov packing of {0,1}^m.

    Keeps candidates at Hamming distance >= ceil(m/8) from everything kept,
    starting from the all-zeros word, until more than 2^(m/8) words are held.
    Candidates are ``budget`` seeded random draws, then lexicographic order.
    """
    if m < 8:
        raise ValueError("m must be >= 8")
    dist = -(-m // 8)
    needed = int(np.floor(2 ** (m / 8))) + 1
    kept = [0]
    rng = np.random.default_rng(seed)

    def consider(w: int) -> bool:
        if all((w ^ k).bit_count() >= dist for k in kept):
            kept.append(w)
        return len(kept) >= needed

    draws = 0
    done = False
    while draws < budget and not done:
        batch = min(4096, budget - draws)
        words = rng.integers(0, 2, size=(batch, m), dtype=np.uint8)
        for row in words:
            if consider(int("".join(map(str, row)), 2)):
                done = True
                break
        draws += batch
    if not done and m <= 24:
        for w in range(1, 1 << m):
            if consider(w):
                done = True
                break
    if not done:
        raise PackingError(len(kept), needed)
    return [_bits(w, m) for w in kept]


@dataclass(frozen=True)
class HardInstanceFamily:
    m: int
    epsilon: float
    gamma: float
    s: float
    codewords: tuple
    functions: tuple  # SeriesTarget per codeword
    norms_s: tuple  # ||f_i||_{[H]^s}
    pairwise: dict = field(repr=False)  # (i, j) -> ||f_i - f_j||^2_{[H]^gamma}

    def hamming(self, i: int, j: int) -> int:
        return sum(a != b for a, b in zip(self.codewords[i], self.codewords[j]))


def _codeword_target(es, m, eps, gamma, word, name):
    omega = np.array([int(ch) for ch in word], dtype=float)
    idx = m + np.arange(1, m + 1)
    coef = np.sqrt(eps) * omega * es.lam(idx) ** (gamma / 2.0)
    return series_target(es, coef, idx, name=name)


def hard_instance(
    es: EigenSystem,
    m: int,
    s: float,
    gamma: float = 0.0,
    epsilon: Optional[float] = None,
    C0: float = 0.01,
    seed: int = 0,
) -> HardInstanceFamily:
    """f_i = eps^(1/2) sum_{k <= m} omega^(i)_k lambda_{m+k}^(gamma/2) e_{m+k}.

    ``epsilon`` defaults to C0 * m^(-(s - gamma) beta - 1). For m < 8 the
    packing is bypassed and the family is the single all-ones codeword.
    """
    if not 0 <= gamma <= min(1.0, s):
        raise ValueError("gamma must lie in [0, min(1, s)]")
    if es.size is not None and es.size < 2 * m:
        raise ValueError("eigensystem too small for this m")
    eps = C0 * m ** (-(s - gamma) * es.beta - 1.0) if epsilon is None else float(epsilon)
    words = ["1" * m] if m < 8 else pack_hypercube(m, seed=seed)
    funcs = tuple(_codeword_target(es, m, eps, gamma, w, f"f_{i}") for i, w in enumerate(words))
    norms = tuple(interpolation_norm(f, s).value for f in funcs)
    pairwise = {}
    for i in range(len(funcs)):
        ci, idx = funcs[i].terms()
        for j in range(i + 1, len(funcs)):
            cj, _ = funcs[j].terms()
            diff = series_target(es, ci - cj, idx)
            pairwise[(i, j)] = interpolation_norm(diff, gamma).value ** 2
    return HardInstanceFamily(m, eps, gamma, s, tuple(words), funcs, norms, pairwise)


def write_hard_instance(family: HardInstanceFamily, path) -> None:
    """Plain-text export: a header, then per codeword one ``index coefficient`` line per term."""
    with open(path, "w") as fh:
        fh.write(f"# m={family.m} epsilon={family.epsilon!r} gamma={family.gamma!r} s={family.s!r}\n")
        for i, (word, f) in enumerate(zip(family.codewords, family.functions)):
            fh.write(f"codeword {i} {word}\n")
            c, idx = f.terms()
            for j, v in zip(idx, c):
                fh.write(f"{int(j)} {float(v)!r}\n")


def read_hard_instance(path) -> dict:
    """Parse :func:`write_hard_instance` output into header values and per-codeword terms."""
    header, words = {}, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                for item in line[1:].split():
                    key, val = item.split("=")
                    header[key] = float(val)
            elif line.startswith("codeword"):
                _, _, word = line.split()
                words.append({"codeword": word, "terms": []})
            elif line:
                j, v = line.split()
                words[-1]["terms"].append((int(j), float(v)))
    return {"header": header, "codewords": words}
