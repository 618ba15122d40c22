"""Regularization filters phi_nu and a grid validator for their defining bounds.

A filter is a family phi_nu : [0, kappa^2] -> R+ together with constants
(tau, E, F_tau) such that, with psi_nu(z) = 1 - z phi_nu(z),

    sup_z z^a phi_nu(z)     <= E nu^(1 - a)   for a in [0, 1]
    sup_z |psi_nu(z)| z^a   <= F_tau nu^(-a)  for a in [0, tau]
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Filter",
    "krr_filter",
    "gradient_flow_filter",
    "spectral_cutoff_filter",
    "get_filter",
    "FilterValidation",
    "validate_filter",
    "default_grids",
]

# Below this value of nu * z, gradient flow uses its Taylor expansion.
_GF_SERIES_CUTOFF = 1e-8


@dataclass(frozen=True)
class Filter:
    name: str
    phi: Callable[[float, np.ndarray], np.ndarray] = field(repr=False)
    tau: float
    E: float
    F_tau: float
    # closed form of 1 - z phi_nu(z), free of cancellation; optional
    residual: Optional[Callable[[float, np.ndarray], np.ndarray]] = field(default=None, repr=False)

    def __call__(self, nu: float, z) -> np.ndarray:
        return self.phi(nu, np.asarray(z, dtype=float))

    def psi(self, nu: float, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.residual is not None:
            return self.residual(nu, z)
        return 1.0 - z * self.phi(nu, z)


def _krr(nu, z):
    return nu / (nu * z + 1.0)


def krr_filter() -> Filter:
    """Kernel ridge regression: phi_nu(z) = nu / (nu z + 1)."""
    return Filter("krr", _krr, tau=1.0, E=1.0, F_tau=1.0, residual=lambda nu, z: 1.0 / (nu * z + 1.0))


def _gf(nu, z):
    z = np.asarray(z, dtype=float)
    u = nu * z
    small = u < _GF_SERIES_CUTOFF
    safe = np.where(small, 1.0, z)
    return np.where(small, nu - nu * u / 2.0, -np.expm1(-u) / safe)


def gradient_flow_filter(tau: float = 2.0) -> Filter:
    """Gradient flow at time nu: phi_nu(z) = (1 - exp(-nu z)) / z, phi_nu(0) = nu.

    ``F_tau`` is (tau / e)^tau. That value bounds |psi| z^a only at a = tau
    and for a >= e; :func:`validate_filter` reports the constant actually
    needed on a grid.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    return Filter("gf", _gf, tau=float(tau), E=1.0, F_tau=float((tau / np.e) ** tau), residual=lambda nu, z: np.exp(-nu * z))


def _cutoff(nu, z):
    z = np.asarray(z, dtype=float)
    keep = (z >= 1.0 / nu) & (z > 0)
    return np.where(keep, 1.0 / np.where(keep, z, 1.0), 0.0)


def _cutoff_residual(nu, z):
    z = np.asarray(z, dtype=float)
    return np.where((z >= 1.0 / nu) & (z > 0), 0.0, 1.0)


def spectral_cutoff_filter(tau_cap: float = 8.0) -> Filter:
    """Spectral cut-off: phi_nu(z) = 1/z if 1/z <= nu else 0.

    The qualification is unbounded; ``tau_cap`` is the finite stand-in used by
    validation.
    """
    return Filter("cutoff", _cutoff, tau=float(tau_cap), E=1.0, F_tau=1.0, residual=_cutoff_residual)


def get_filter(name: str, **opts) -> Filter:
    """Filter by config id: ``krr``, ``gf`` (option ``tau``), ``cutoff`` (option ``tau_cap``)."""
    if name == "krr":
        return krr_filter()
    if name == "gf":
        return gradient_flow_filter(float(opts.get("tau", 2.0)))
    if name == "cutoff":
        return spectral_cutoff_filter(float(opts.get("tau_cap", 8.0)))
    raise KeyError(f"unknown filter id {name!r}")


@dataclass(frozen=True)
class Violation:
    kind: str  # "phi" or "psi"
    nu: float
    z: float
    alpha: float
    ratio: float


@dataclass(frozen=True)
class FilterValidation:
    filter_name: str
    phi_ratio: float
    psi_ratio: float
    # worst offending grid point per (kind, alpha)
    violations: tuple
    n_violations: int
    # smallest E and F_tau that would make this grid pass
    required_E: float
    required_F_tau: float
    tol: float = 1e-9

    @property
    def passed(self) -> bool:
        return self.phi_ratio <= 1 + self.tol and self.psi_ratio <= 1 + self.tol


def default_grids(f: Filter, kappa_sq: float = 1.0):
    """(nu_grid, z_grid, phi_alphas, psi_alphas) used when none are given."""
    nu = np.logspace(-1, 5, 200)
    z = np.concatenate([[0.0], np.geomspace(1e-7 * kappa_sq, kappa_sq, 500)])
    phi_alphas = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    psi_alphas = np.arange(0.0, f.tau + 1e-12, 0.25)
    if psi_alphas[-1] < f.tau:
        psi_alphas = np.append(psi_alphas, f.tau)
    return nu, z, phi_alphas, psi_alphas


def _ratios(values: np.ndarray, z: np.ndarray, alphas: np.ndarray, bound: Callable) -> np.ndarray:
    # shape (alpha, nu, z)
    zp = z[None, None, :] ** alphas[:, None, None]
    return values[None] * zp / bound(alphas)[:, :, None]


def validate_filter(
    f: Filter,
    nu_grid: Optional[Sequence[float]] = None,
    z_grid: Optional[Sequence[float]] = None,
    alpha_grid: Optional[Sequence[float]] = None,
    kappa_sq: float = 1.0,
    tol: float = 1e-9,
) -> FilterValidation:
    """Check both filter inequalities on a finite grid.

    With ``alpha_grid`` given, the phi bound is checked on its members in
    [0, 1] and the psi bound on its members in [0, tau]. A grid is a sample,
    not a proof.
    """
    d_nu, d_z, d_phi, d_psi = default_grids(f, kappa_sq)
    nu = d_nu if nu_grid is None else np.asarray(nu_grid, dtype=float)
    z = d_z if z_grid is None else np.asarray(z_grid, dtype=float)
    if alpha_grid is None:
        phi_a, psi_a = d_phi, d_psi
    else:
        a = np.asarray(alpha_grid, dtype=float)
        if a.min() < 0 or a.max() > max(1.0, f.tau) + 1e-12:
            raise ValueError("alpha_grid must lie in [0, max(1, tau)]")
        phi_a, psi_a = a[a <= 1.0], a[a <= f.tau + 1e-12]
    if nu.size == 0 or z.size == 0:
        raise ValueError("grids must be non-empty")

    NU, Z = np.meshgrid(nu, z, indexing="ij")
    phi = f(NU, Z)
    psi = np.abs(f.psi(NU, Z))
    r_phi = _ratios(phi, z, phi_a, lambda a: f.E * nu[None, :] ** (1.0 - a[:, None]))
    r_psi = _ratios(psi, z, psi_a, lambda a: f.F_tau * nu[None, :] ** (-a[:, None]))

    violations = []
    count = 0
    for kind, r, alphas in (("phi", r_phi, phi_a), ("psi", r_psi, psi_a)):
        for ai, a in enumerate(alphas):
            bad = r[ai] > 1 + tol
            if bad.any():
                count += int(bad.sum())
                i, j = np.unravel_index(np.argmax(r[ai]), r[ai].shape)
                violations.append(Violation(kind, float(nu[i]), float(z[j]), float(a), float(r[ai][i, j])))
    phi_max = float(r_phi.max()) if r_phi.size else 0.0
    psi_max = float(r_psi.max()) if r_psi.size else 0.0
    return FilterValidation(
        filter_name=f.name,
        phi_ratio=phi_max,
        psi_ratio=psi_max,
        violations=tuple(violations),
        n_violations=count,
        required_E=phi_max * f.E,
        required_F_tau=psi_max * f.F_tau,
        tol=tol,
    )
