"""Spectral-algorithm estimator via spectral calculus on the normalised Gram matrix.

With K the Gram matrix of the sample and K/n = U diag(sigma) U^T, the
estimator phi_nu(T_X) g_Z lies in span{k(x_i, .)} with coefficients

    alpha = (1/n) U diag(phi_nu(sigma)) U^T y.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Union

import numpy as np
from scipy import linalg

from .filters import Filter
from .mercer import Kernel

__all__ = [
    "Sample",
    "SampleSet",
    "NonPSDGramError",
    "Decomposition",
    "FittedEstimator",
    "decompose",
    "fit",
    "predict",
    "ridge_closed_form",
    "regularization_from_n",
]

NEG_EIG_TOL = 1e-9


class NonPSDGramError(ValueError):
    """Raised when K/n has an eigenvalue below -NEG_EIG_TOL."""


class Sample(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class SampleSet:
    """n samples stored column-wise. Iterating yields :class:`Sample` tuples."""

    x: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    def __iter__(self):
        return (Sample(xi, float(yi)) for xi, yi in zip(self.x, self.y))

    @classmethod
    def from_samples(cls, samples: Iterable[Sample]) -> "SampleSet":
        samples = list(samples)
        return cls(np.array([s[0] for s in samples], dtype=float), np.array([s[1] for s in samples], dtype=float))


Samples = Union[SampleSet, Iterable[Sample], tuple]


def _as_set(samples: Samples) -> SampleSet:
    if isinstance(samples, SampleSet):
        return samples
    if isinstance(samples, tuple) and len(samples) == 2 and not isinstance(samples[0], Sample):
        return SampleSet(np.asarray(samples[0], dtype=float), np.asarray(samples[1], dtype=float))
    return SampleSet.from_samples(samples)


@dataclass(frozen=True)
class FittedEstimator:
    points: np.ndarray
    coefficients: np.ndarray
    kernel: Kernel = field(repr=False)
    nu: float
    filter_name: str

    def __call__(self, xs) -> np.ndarray:
        return predict(self, xs)


@dataclass(frozen=True)
class Decomposition:
    """Eigendecomposition of K/n for one sample; reusable across filters and nu."""

    points: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    kernel: Kernel = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    def coefficients(self, flt: Filter, nu: float, y) -> np.ndarray:
        return self.coefficient_matrix(flt, [nu], y)[:, 0]

    def coefficient_matrix(self, flt: Filter, nus, y) -> np.ndarray:
        """Coefficients for each nu in ``nus`` as columns of an (n, len(nus)) array."""
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise ValueError("responses must be finite")
        nus = np.asarray(nus, dtype=float)
        if np.any(nus <= 0):
            raise ValueError("nu must be positive")
        proj = self.eigenvectors.T @ y
        gains = np.stack([flt(nu, self.eigenvalues) for nu in nus], axis=1)
        return self.eigenvectors @ (gains * proj[:, None]) / self.n

    def estimator(self, flt: Filter, nu: float, y) -> FittedEstimator:
        return FittedEstimator(self.points, self.coefficients(flt, nu, y), self.kernel, float(nu), flt.name)


def decompose(kernel: Kernel, x) -> Decomposition:
    x = np.asarray(x, dtype=float)
    if len(x) < 1:
        raise ValueError("need at least one sample")
    if not kernel.domain.contains(x):
        raise ValueError("sample points outside the kernel domain")
    K = kernel.gram(x) / len(x)
    K = (K + K.T) / 2.0
    w, U = np.linalg.eigh(K)
    if w[0] < -NEG_EIG_TOL:
        raise NonPSDGramError(f"Gram matrix eigenvalue {w[0]:.3e} below -{NEG_EIG_TOL:g}")
    return Decomposition(x, np.clip(w, 0.0, None), U, kernel)


def fit(kernel: Kernel, filter: Filter, samples: Samples, nu: float) -> FittedEstimator:
    """Fit phi_nu(T_X) g_Z on the given samples."""
    if not nu > 0:
        raise ValueError("nu must be positive")
    data = _as_set(samples)
    if not np.all(np.isfinite(data.y)):
        raise ValueError("responses must be finite")
    return decompose(kernel, data.x).estimator(filter, nu, data.y)


def predict(est: FittedEstimator, xs) -> np.ndarray:
    """sum_i alpha_i k(x_i, x) for each x in ``xs``."""
    return est.kernel.gram(xs, est.points) @ est.coefficients


def ridge_closed_form(kernel: Kernel, samples: Samples, lam: float) -> FittedEstimator:
    """Classical ridge solve alpha = (K + n lam I)^-1 y; equals fit(krr, nu = 1/lam)."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    data = _as_set(samples)
    n = len(data)
    K = kernel.gram(data.x)
    alpha = linalg.solve(K + n * lam * np.eye(n), data.y, assume_a="pos")
    return FittedEstimator(np.asarray(data.x, dtype=float), alpha, kernel, 1.0 / lam, "krr")


def regularization_from_n(beta: float, s: float, c: float, n: int) -> float:
    """nu = c * n^(beta / (s beta + 1))."""
    if min(beta, s, c, n) <= 0:
        raise ValueError("all parameters must be positive")
    return float(c * n ** (beta / (s * beta + 1.0)))
