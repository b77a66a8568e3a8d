"""Stationary Gaussian fields with prescribed covariance decay, and the
pointwise transform into admissible coefficient fields.

The decay exponent gamma labels the covariance envelope (1+r)^(-gamma).
For gamma < d the spectral density carries the matching power-law
singularity at k = 0 (long-range correlations); for gamma >= d a
Matern-type integrable spectrum is used, whose (exponentially decaying)
covariance satisfies the same envelope.  The coarseness label is
beta_eff = max(0, 1 - gamma/d).
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr  # standard normal CDF, vectorized

from .lattice import GridSpec

__all__ = [
    "CovarianceSpec",
    "CoefficientModel",
    "CoefficientField",
    "SeedSpec",
    "sample_gaussian",
    "to_coefficients",
    "empirical_covariance",
    "beta_effective",
]

_KCUT = np.pi  # spectral cap: unit correlation length


def beta_effective(gamma, d):
    return max(0.0, 1.0 - gamma / d)


@dataclass(frozen=True)
class CovarianceSpec:
    gamma: float
    beta_target: float = 0.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not 0.0 <= self.beta_target < 1.0:
            raise ValueError("beta_target must lie in [0, 1)")

    def validate(self, d):
        # integrability of the covariance envelope against (1+r)^(-d*beta)
        if self.gamma <= d * (1.0 - self.beta_target):
            raise ValueError(
                f"need gamma > d(1-beta): gamma={self.gamma}, "
                f"d={d}, beta={self.beta_target}")


@dataclass(frozen=True)
class SeedSpec:
    """Deterministic stream derivation: distinct (seed, index) pairs give
    independent streams, identical pairs reproduce bit-identical fields."""

    master_seed: int
    realization_index: int = 0
    salt: int = 0

    def rng(self):
        key = f"{self.master_seed}:{self.realization_index}:{self.salt}"
        digest = hashlib.sha256(key.encode()).digest()
        words = np.frombuffer(digest[:16], dtype=np.uint32)
        return np.random.default_rng(np.random.SeedSequence(list(words)))


@dataclass(frozen=True)
class CoefficientModel:
    lam: float = 0.25
    skew_amplitude: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lambda must lie in (0, 1)")
        nu_max = (1.0 - self.lam) / 2.0
        if self.skew_amplitude < 0.0 or self.skew_amplitude > nu_max:
            raise ValueError(
                f"skew amplitude must lie in [0, {nu_max}] for lambda="
                f"{self.lam} to keep the symmetric part elliptic")


@dataclass
class CoefficientField:
    """Per-cell d x d matrices, shape (d, d) + grid; the symmetric part has
    ellipticity >= lam_eff and the operator norm is <= 1, per cell."""

    a: np.ndarray
    lam_eff: float
    grid: GridSpec = field(default=None)

    def __post_init__(self):
        if self.grid is None:
            self.grid = GridSpec(self.a.ndim - 2, self.a.shape[-1])

    def transpose(self):
        return CoefficientField(np.swapaxes(self.a, 0, 1).copy(),
                                self.lam_eff, self.grid)

    def is_symmetric(self, tol=1e-13):
        return float(np.max(np.abs(self.a - np.swapaxes(self.a, 0, 1)))) <= tol


def _spectral_density(spec: CovarianceSpec, grid: GridSpec):
    """Unnormalized radial spectral density on the discrete wavevector
    lattice, zero mode nulled."""
    d, n = grid.d, grid.n
    k2 = np.zeros(grid.shape)
    for j in range(d):
        freq = 2.0 * np.pi * np.fft.fftfreq(n)
        sh = [1] * d
        sh[j] = n
        k2 = k2 + freq.reshape(sh) ** 2
    kk = np.sqrt(k2)
    if spec.gamma < d:
        dens = np.minimum(np.maximum(kk, 1e-300), _KCUT) ** (spec.gamma - d)
    else:
        # Matern profile at unit correlation length; exponent tied to gamma
        # so the spectrum stays integrable and smooth across gamma >= d
        dens = (1.0 + k2) ** (-(spec.gamma + d) / 2.0)
    dens[(0,) * d] = 0.0
    total = dens.sum()
    return dens * (n**d / total)  # unit variance at the origin


def sample_gaussian(spec: CovarianceSpec, grid: GridSpec, seed: SeedSpec):
    """Zero-mean unit-variance stationary Gaussian field, sampled by
    spectral filtering of white noise (Hermitian symmetry holds because the
    noise is filtered in physical space)."""
    spec.validate(grid.d)
    rng = seed.rng()
    white = rng.standard_normal(grid.shape)
    dens = _spectral_density(spec, grid)
    fhat = np.fft.fftn(white) * np.sqrt(dens)
    return np.real(np.fft.ifftn(fhat))


def _skew_generator(d):
    j = np.zeros((d, d))
    j[0, 1], j[1, 0] = -1.0, 1.0  # rotation generator (about e3 when d=3)
    return j


def to_coefficients(g_sym, model: CoefficientModel, g_skew=None,
                    grid: GridSpec = None):
    """a(x) = [lam + (1-lam) Phi(g_sym)] Id + nu (2 Phi(g_skew) - 1) J,
    rescaled by the worst-case operator-norm bound so |a(x) xi| <= |xi|."""
    if grid is None:
        grid = GridSpec(g_sym.ndim, g_sym.shape[-1])
    d = grid.d
    nu = model.skew_amplitude
    if nu > 0.0 and g_skew is None:
        raise ValueError("skew amplitude > 0 requires a skew Gaussian field")
    sym = model.lam + (1.0 - model.lam) * ndtr(g_sym)
    a = np.zeros((d, d) + grid.shape)
    for i in range(d):
        a[i, i] = sym
    if nu > 0.0:
        w = nu * (2.0 * ndtr(g_skew) - 1.0)
        jmat = _skew_generator(d)
        for i in range(d):
            for j in range(d):
                if jmat[i, j] != 0.0:
                    a[i, j] += jmat[i, j] * w
    scale = 1.0 / np.sqrt(1.0 + nu**2)
    a *= scale
    return CoefficientField(a, lam_eff=model.lam * scale, grid=grid)


def constant_coefficients(grid: GridSpec, matrix=None):
    """a == matrix (default identity) everywhere; handy control ensemble."""
    d = grid.d
    if matrix is None:
        matrix = np.eye(d)
    matrix = np.asarray(matrix, dtype=np.float64)
    a = np.zeros((d, d) + grid.shape)
    for i in range(d):
        for j in range(d):
            a[i, j] = matrix[i, j]
    lam = float(np.min(np.linalg.eigvalsh((matrix + matrix.T) / 2)))
    return CoefficientField(a, lam_eff=lam, grid=grid)


def check_admissible(field: CoefficientField, tol=1e-12):
    """Per-cell symmetric-part ellipticity >= lam_eff and operator norm <= 1."""
    a = field.a
    d = a.shape[0]
    mats = np.moveaxis(a.reshape(d, d, -1), -1, 0)
    sym = (mats + np.swapaxes(mats, 1, 2)) / 2
    eig_min = np.linalg.eigvalsh(sym)[:, 0]
    op_norm = np.linalg.norm(mats, ord=2, axis=(1, 2))
    return (float(eig_min.min()) >= field.lam_eff - tol
            and float(op_norm.max()) <= 1.0 + tol)


def empirical_covariance(samples, max_lag=None):
    """c(r) along e1: average of u(x) u(x + r e1) over x and samples."""
    if len(samples) < 2:
        raise ValueError("need at least two samples")
    n = samples[0].shape[0]
    if max_lag is None:
        max_lag = n // 2
    lags = np.arange(max_lag + 1)
    acc = np.zeros(max_lag + 1)
    for u in samples:
        for r in lags:
            acc[r] += float(np.mean(u * np.roll(u, -r, axis=0)))
    return lags, acc / len(samples)
