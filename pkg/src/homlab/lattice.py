"""Periodic lattice substrate: difference calculus, spectral solves, averaging.

Conventions: spacing h = 1 (unit correlation length), torus side L = N.
``grad`` is the forward difference, ``div`` the backward difference, so that
<grad u, v> = -<u, div v> holds exactly and the divergence-form operator is
exactly symmetric for symmetric coefficients.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridSpec",
    "Ball",
    "grad",
    "div",
    "laplacian_symbol",
    "poisson_solve",
    "ball_mask",
    "ball_average",
    "box_mollify",
    "ball_mean_field",
    "save_field",
    "load_field",
]


@dataclass(frozen=True)
class GridSpec:
    """Periodic d-dimensional grid of n cells per axis, spacing 1."""

    d: int
    n: int

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if self.n < 8:
            raise ValueError(f"grid size must be >= 8, got {self.n}")
        if self.n % 2:
            raise ValueError(f"grid size must be even, got {self.n}")

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def length(self):
        return float(self.n)


@dataclass(frozen=True)
class Ball:
    """Discrete ball: cells whose centers lie within radius of center
    under the periodic metric."""

    center: tuple
    radius: float

    def validate(self, grid: GridSpec):
        if len(self.center) != grid.d:
            raise ValueError("ball center dimension mismatch")
        if self.radius > grid.n / 4:
            raise ValueError(
                f"ball radius {self.radius} exceeds L/4 = {grid.n / 4}")
        if self.radius < 0.5:
            raise ValueError("empty ball: radius below half a cell")


def grad(u):
    """Forward-difference gradient with periodic wrap, shape (d,) + grid."""
    d = u.ndim
    return np.stack([np.roll(u, -1, axis=j) - u for j in range(d)])


def bgrad(u):
    """Backward-difference gradient, shape (d,) + grid."""
    d = u.ndim
    return np.stack([u - np.roll(u, 1, axis=j) for j in range(d)])


def div(f):
    """Backward-difference divergence; exact negative adjoint of grad."""
    d = f.shape[0]
    out = f[0] - np.roll(f[0], 1, axis=0)
    for j in range(1, d):
        out += f[j] - np.roll(f[j], 1, axis=j)
    return out


def laplacian_symbol(shape, rfft=False):
    """Fourier symbol of -div(grad .): sum_j 4 sin^2(pi k_j / n)."""
    d = len(shape)
    sym = np.zeros(shape[:-1] + ((shape[-1] // 2 + 1) if rfft else shape[-1],))
    for j, n in enumerate(shape):
        freq = np.fft.rfftfreq(n) if (rfft and j == d - 1) else np.fft.fftfreq(n)
        s = (2.0 * np.sin(np.pi * freq)) ** 2
        sh = [1] * d
        sh[j] = s.size
        sym = sym + s.reshape(sh)
    return sym


def poisson_solve(rhs):
    """Zero-mean u with -div(grad u) = rhs - mean(rhs), spectrally exact."""
    shape = rhs.shape
    sym = laplacian_symbol(shape, rfft=True)
    rhat = np.fft.rfftn(rhs)
    with np.errstate(divide="ignore", invalid="ignore"):
        uhat = rhat / sym
    uhat[(0,) * rhs.ndim] = 0.0
    return np.fft.irfftn(uhat, s=shape, axes=range(rhs.ndim))


def _offsets(n, center):
    """Signed periodic offsets of cell indices from a center coordinate."""
    idx = np.arange(n, dtype=np.float64)
    return (idx - center + n / 2) % n - n / 2


def periodic_dist_sq(grid: GridSpec, center):
    """Squared periodic distance of every cell center to ``center``."""
    d2 = np.zeros(grid.shape)
    for j in range(grid.d):
        off = _offsets(grid.n, center[j])
        sh = [1] * grid.d
        sh[j] = grid.n
        d2 = d2 + off.reshape(sh) ** 2
    return d2


def ball_mask(grid: GridSpec, ball: Ball):
    ball.validate(grid)
    return periodic_dist_sq(grid, ball.center) <= ball.radius**2


def ball_average(u, ball: Ball, grid: GridSpec = None):
    """Arithmetic mean of u over the discrete ball; componentwise for
    fields with leading axes."""
    if grid is None:
        grid = GridSpec(u.ndim if u.ndim <= 3 else u.ndim - 1, u.shape[-1])
    mask = ball_mask(grid, ball)
    if u.ndim == grid.d:
        return float(u[mask].mean())
    flat = u.reshape((-1,) + grid.shape)
    return np.array([comp[mask].mean() for comp in flat]).reshape(u.shape[:-grid.d])


def _ball_kernel_hat(grid: GridSpec, radius):
    """rfft of the normalized ball indicator centered at the origin."""
    mask = (periodic_dist_sq(grid, (0.0,) * grid.d) <= radius**2)
    kern = mask.astype(np.float64)
    kern /= kern.sum()
    return np.fft.rfftn(kern)


def ball_mean_field(u, radius, grid: GridSpec):
    """At each x, the mean of u over the ball of given radius centered at x.

    Periodic convolution with the (symmetric) ball indicator, so this is
    exact up to floating point.
    """
    if radius > grid.n / 4:
        raise ValueError("mollification scale exceeds L/4")
    khat = _ball_kernel_hat(grid, radius)
    if u.ndim == grid.d:
        return np.fft.irfftn(np.fft.rfftn(u) * khat, s=grid.shape,
                              axes=range(grid.d))
    flat = u.reshape((-1,) + grid.shape)
    out = np.empty_like(flat)
    for i, comp in enumerate(flat):
        out[i] = np.fft.irfftn(np.fft.rfftn(comp) * khat, s=grid.shape,
                                  axes=range(grid.d))
    return out.reshape(u.shape)


def box_mollify(u, scale, grid: GridSpec = None):
    """Moving simple average over balls of radius ``scale``; linear and
    mass-preserving; the single-cell limit returns the field unchanged."""
    if grid is None:
        grid = GridSpec(u.ndim if u.ndim <= 3 else u.ndim - 1, u.shape[-1])
    if scale < 0.5:
        return u.copy()
    return ball_mean_field(u, scale, grid)


_MAGIC_DTYPE = "<i8"


def save_field(path, arr, d):
    """Flat binary layout: int64-LE header (d, n, ncomp), then row-major
    float64 values."""
    n = arr.shape[-1]
    ncomp = int(np.prod(arr.shape[:-d], dtype=np.int64)) if arr.ndim > d else 1
    with open(path, "wb") as fh:
        np.array([d, n, ncomp], dtype=_MAGIC_DTYPE).tofile(fh)
        np.ascontiguousarray(arr, dtype="<f8").tofile(fh)


def load_field(path):
    """Inverse of save_field; returns array of shape (ncomp,) + grid
    (leading axis dropped when ncomp == 1)."""
    with open(path, "rb") as fh:
        header = np.fromfile(fh, dtype=_MAGIC_DTYPE, count=3)
        d, n, ncomp = (int(v) for v in header)
        data = np.fromfile(fh, dtype="<f8")
    expect = ncomp * n**d
    if data.size != expect:
        raise ValueError(f"corrupt field file {path}: {data.size} != {expect}")
    arr = data.reshape((ncomp,) + (n,) * d)
    return arr[0] if ncomp == 1 else arr
