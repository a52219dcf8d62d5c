"""Karhunen-Loeve expansion of a Gaussian log-conductivity field.

The covariance is separable exponential,
``C(s, s') = var * exp(-|x - x'| / eta - |y - y'| / eta)``, so the 2D
eigenpairs are products of the analytic 1D ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SolverError


def _bisect(f, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    flo = f(lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0 or (hi - lo) <= tol * max(1.0, abs(mid)):
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def exponential_eigenpairs_1d(half_length: float, corr_length: float, n: int):
    """Leading ``n`` eigenpairs of exp(-|x - x'| / corr_length) on [-a, a].

    Returns (eigenvalues, list of (kind, omega, norm)) with eigenfunction
    ``cos(omega x) / norm`` (kind "even") or ``sin(omega x) / norm`` ("odd").
    Roots of ``c - w tan(w a) = 0`` and ``w + c tan(w a) = 0`` are bracketed
    per branch of tan and located by bisection.
    """
    a, c = half_length, 1.0 / corr_length
    eps = 1e-14
    pairs = []
    for i in range(n):
        # even: tan(w a) = c / w on (i pi / a, (i + 1/2) pi / a)
        lo, hi = (i * np.pi + eps) / a, ((i + 0.5) * np.pi - eps) / a
        w = _bisect(lambda w: c - w * np.tan(w * a), lo, hi)
        pairs.append((2 * c / (w * w + c * c), "even", w, np.sqrt(a + np.sin(2 * w * a) / (2 * w))))
        # odd: tan(w a) = -w / c on ((i + 1/2) pi / a, (i + 1) pi / a)
        lo, hi = ((i + 0.5) * np.pi + eps) / a, ((i + 1) * np.pi - eps) / a
        w = _bisect(lambda w: w + c * np.tan(w * a), lo, hi)
        pairs.append((2 * c / (w * w + c * c), "odd", w, np.sqrt(a - np.sin(2 * w * a) / (2 * w))))
    pairs.sort(key=lambda p: -p[0])
    pairs = pairs[:n]
    lam = np.array([p[0] for p in pairs])
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
        raise SolverError("KLE eigenvalue computation failed")
    return lam, [(p[1], p[2], p[3]) for p in pairs]


def _eval_1d(basis, x):
    kind, w, norm = basis
    if kind == "even":
        return np.cos(w * x) / norm, -w * np.sin(w * x) / norm
    return np.sin(w * x) / norm, w * np.cos(w * x) / norm


@dataclass(frozen=True, eq=False)
class ConductivityField:
    """A log-conductivity realisation on cell centres of a square grid."""

    log_k: np.ndarray  # (ny, nx)
    grad_x: np.ndarray  # d(log K)/dx, physical units
    grad_y: np.ndarray
    x: np.ndarray  # cell-centre coordinates, physical units
    y: np.ndarray
    n_terms: int
    correlation_length: float
    mean: float
    variance: float
    seed: int
    eigenvalues: np.ndarray  # retained 2D eigenvalues (unit variance)
    domain_length: float

    @property
    def conductivity(self) -> np.ndarray:
        return np.exp(self.log_k)

    @property
    def shape(self):
        return self.log_k.shape

    def expected_variance(self) -> float:
        """Domain-averaged variance of the truncated expansion."""
        return self.variance * float(self.eigenvalues.sum()) / self.domain_length**2


def gen_kle_field(nx: int = 51, ny: int = 51, domain_length: float = 1020.0, correlation_length: float = 408.0,
                  n_terms: int = 20, mean: float = 0.0, variance: float = 1.0, seed: int = 0) -> ConductivityField:
    """Truncated KLE realisation of log K on an ``nx`` x ``ny`` cell grid."""
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    if not correlation_length > 0:
        raise ValueError("correlation_length must be > 0")
    a = domain_length / 2.0
    lam1, basis = exponential_eigenpairs_1d(a, correlation_length, n_terms)
    prods = sorted(((lam1[i] * lam1[j], i, j) for i in range(n_terms) for j in range(n_terms)), key=lambda p: -p[0])
    prods = prods[:n_terms]
    hx, hy = domain_length / nx, domain_length / ny
    x = (np.arange(nx) + 0.5) * hx
    y = (np.arange(ny) + 0.5) * hy
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n_terms)
    field = np.zeros((ny, nx))
    gx = np.zeros((ny, nx))
    gy = np.zeros((ny, nx))
    sd = np.sqrt(variance)
    for (lam, i, j), zk in zip(prods, z):
        fx, dfx = _eval_1d(basis[i], x - a)
        fy, dfy = _eval_1d(basis[j], y - a)
        amp = sd * np.sqrt(lam) * zk
        field += amp * np.outer(fy, fx)
        gx += amp * np.outer(fy, dfx)
        gy += amp * np.outer(dfy, fx)
    return ConductivityField(
        log_k=mean + field, grad_x=gx, grad_y=gy, x=x, y=y, n_terms=n_terms,
        correlation_length=correlation_length, mean=mean, variance=variance, seed=seed,
        eigenvalues=np.array([p[0] for p in prods]), domain_length=domain_length,
    )
