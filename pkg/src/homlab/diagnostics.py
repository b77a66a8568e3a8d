"""Large-scale regularity functionals: excess, non-degeneracy, mean-value
ratios, the minimal radius, growth profiles, and gradient averages."""

from dataclasses import dataclass

import numpy as np

from .corrector import CorrectorSet, extended_components
from .elliptic import SolveOptions, solve_dirichlet_ball
from .lattice import Ball, GridSpec, ball_average, ball_mean_field, grad

__all__ = [
    "ExcessReport",
    "MinimalRadiusReport",
    "GrowthProfile",
    "DegenerateGramError",
    "excess",
    "minimal_radius",
    "excess_decay_experiment",
    "mean_value_ratio",
    "gradient_average",
    "growth_profile",
    "harmonic_quadratic",
    "dyadic_radii",
    "regime_reference",
]


class DegenerateGramError(RuntimeError):
    """Gram matrix of the corrected coordinate gradients is singular;
    signals the r < r_* regime."""


@dataclass
class ExcessReport:
    radius: float
    excess: float
    xi: np.ndarray
    gram: np.ndarray


@dataclass
class MinimalRadiusReport:
    r_star: float          # dyadic, or inf sentinel
    delta: float
    radii: np.ndarray
    values: np.ndarray     # (1/R^2) * centered ball variance of (phi, sigma)


@dataclass
class GrowthProfile:
    radii: np.ndarray
    values: np.ndarray     # centered ball variance, averaged over centers
    reference: np.ndarray  # regime curve mu^2_{d, beta}
    regime: str


def dyadic_radii(grid: GridSpec, lo=1.0, hi=None):
    hi = hi if hi is not None else grid.n / 8
    radii = []
    r = float(lo)
    while r <= hi + 1e-9:
        radii.append(r)
        r *= 2.0
    return np.array(radii)


def excess(grad_u, corr: CorrectorSet, ball: Ball, cond_limit=1e10):
    """Deviation of grad u on the ball from the best corrected-affine
    gradient xi + grad phi_xi, via the d x d normal equations."""
    grid = corr.grid
    d = grid.d
    gram = np.zeros((d, d))
    b = np.zeros(d)
    basis = [corr.grad_phi[i].copy() for i in range(d)]
    for i in range(d):
        basis[i][i] += 1.0
    for i in range(d):
        b[i] = ball_average(np.einsum("j...,j...->...", grad_u, basis[i]),
                            ball, grid)
        for j in range(i, d):
            gram[i, j] = gram[j, i] = ball_average(
                np.einsum("k...,k...->...", basis[i], basis[j]), ball, grid)
    if np.linalg.cond(gram) > cond_limit:
        raise DegenerateGramError(
            f"Gram matrix singular at r = {ball.radius}")
    xi = np.linalg.solve(gram, b)
    exc = ball_average(np.einsum("j...,j...->...", grad_u, grad_u),
                       ball, grid) - float(xi @ b)
    return ExcessReport(ball.radius, max(exc, 0.0), xi, gram)


def _centered_variance(comps, ball: Ball, grid: GridSpec):
    """sum over components of the ball variance at the given center."""
    total = 0.0
    for comp in comps:
        m = ball_average(comp, ball, grid)
        total += ball_average(comp**2, ball, grid) - m**2
    return total


def minimal_radius(corr: CorrectorSet, delta, center=None):
    """Smallest dyadic r with (1/R^2) fint_{B_R} |(phi, sigma) - mean|^2
    <= delta for every dyadic R in [r, L/8]; inf sentinel if none."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    grid = corr.grid
    center = tuple(center) if center is not None else (0.0,) * grid.d
    comps = extended_components(corr.phi, corr.sigma)
    radii = dyadic_radii(grid)
    vals = np.array([
        _centered_variance(comps, Ball(center, r), grid) / r**2
        for r in radii
    ])
    ok = vals <= delta
    r_star = np.inf
    # smallest r whose whole dyadic tail satisfies the threshold
    tail_ok = np.logical_and.accumulate(ok[::-1])[::-1]
    hits = np.nonzero(tail_ok)[0]
    if hits.size:
        r_star = float(radii[hits[0]])
    return MinimalRadiusReport(r_star, float(delta), radii, vals)


def harmonic_quadratic(a_hom, grid: GridSpec, center, rng):
    """Random quadratic x.Qx (coordinates centered at ``center``, unwrapped)
    with tr(a_hom_sym Q) = 0, so it is a_hom-harmonic on the lattice away
    from the seam; normalized to unit coefficient norm."""
    d = grid.d
    sym = (a_hom + a_hom.T) / 2
    q = rng.standard_normal((d, d))
    q = (q + q.T) / 2
    q -= (np.sum(sym * q) / np.sum(sym * sym)) * sym
    q /= np.linalg.norm(q)
    coords = []
    for j in range(d):
        idx = np.arange(grid.n, dtype=np.float64)
        off = (idx - center[j] + grid.n / 2) % grid.n - grid.n / 2
        sh = [1] * d
        sh[j] = grid.n
        coords.append(off.reshape(sh))
    out = np.zeros(grid.shape)
    for i in range(d):
        for j in range(d):
            out += q[i, j] * coords[i] * coords[j]
    return out


def excess_decay_experiment(a, corr: CorrectorSet, R, r_list, rng,
                            opts: SolveOptions = None, center=None):
    """Excess-decay table for an a-harmonic function with random
    a_hom-harmonic quadratic boundary data on B_R."""
    grid = corr.grid
    center = tuple(center) if center is not None else (0.0,) * grid.d
    boundary = harmonic_quadratic(corr.a_hom, grid, center, rng)
    u, rep = solve_dirichlet_ball(a, Ball(center, float(R)), boundary, opts)
    gu = grad(u)
    rows = []
    for r in r_list:
        rows.append(excess(gu, corr, Ball(center, float(r))))
    rr = np.array([row.radius for row in rows])
    ee = np.array([row.excess for row in rows])
    good = ee > 0
    if good.sum() >= 2:
        slope = np.polyfit(np.log(rr[good]), np.log(ee[good]), 1)[0]
    else:
        slope = np.nan
    return rows, float(slope), rep


def mean_value_ratio(grad_u, r, R, grid: GridSpec, center=None):
    """fint_{B_r} |grad u|^2 / fint_{B_R} |grad u|^2."""
    center = tuple(center) if center is not None else (0.0,) * grid.d
    e2 = np.einsum("j...,j...->...", grad_u, grad_u)
    num = ball_average(e2, Ball(center, float(r)), grid)
    den = ball_average(e2, Ball(center, float(R)), grid)
    return float(num / den)


def gradient_average(field_comp, r, grid: GridSpec, center=None):
    """fint_{B_r(center)} of a (gradient) component against the constant
    unit direction; full-torus average is exactly zero by periodicity."""
    center = tuple(center) if center is not None else (0.0,) * grid.d
    return float(ball_average(field_comp, Ball(center, float(r)), grid))


def regime_reference(d, beta, radii):
    """mu^2_{d,beta} curve: constant / log R / R^{d(beta - 1 + 2/d)}."""
    crit = 1.0 - 2.0 / d
    radii = np.asarray(radii, dtype=np.float64)
    if beta < crit - 1e-12:
        return np.ones_like(radii), "bounded"
    if abs(beta - crit) <= 1e-12:
        return np.log(2.0 + radii), "critical"
    return radii ** (d * (beta - 1.0 + 2.0 / d)), "growing"


def growth_profile(corr: CorrectorSet, radii, beta=0.0):
    """Centered ball variance of (phi, sigma) as a function of R, averaged
    over all torus centers (FFT ball means, so every center contributes)."""
    grid = corr.grid
    comps = extended_components(corr.phi, corr.sigma)
    radii = np.asarray(radii, dtype=np.float64)
    if np.any(radii > grid.n / 8):
        raise ValueError("growth radii must stay <= L/8")
    vals = np.zeros(len(radii))
    for idx, r in enumerate(radii):
        total = 0.0
        for comp in comps:
            m1 = ball_mean_field(comp, r, grid)
            m2 = ball_mean_field(comp**2, r, grid)
            total += float(np.mean(m2 - m1**2))
        vals[idx] = total
    ref, regime = regime_reference(grid.d, beta, radii)
    return GrowthProfile(radii, vals, ref, regime)
