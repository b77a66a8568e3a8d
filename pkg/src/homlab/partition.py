"""Triadic partition of a region around the origin whose cells grow like
(dist + 1)^beta, plus the refinement check and the interaction sum that
certify the coarseness window."""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

__all__ = [
    "Partition",
    "build_partition",
    "check_refinement",
    "interaction_sum",
    "locate_cell",
    "lattice_partition_labels",
]


@dataclass
class Partition:
    corners: np.ndarray   # (m, d) lower corners
    sides: np.ndarray     # (m,)
    n_sub: np.ndarray     # (m,) subdivision count of the parent triadic cube
    beta: float
    half_width: float
    d: int

    @property
    def diam(self):
        return np.sqrt(self.d) * self.sides

    @property
    def dist(self):
        """Euclidean distance of each cell to the origin."""
        gap = np.maximum.reduce([
            self.corners,
            -(self.corners + self.sides[:, None]),
            np.zeros_like(self.corners),
        ])
        return np.sqrt(np.einsum("ij,ij->i", gap, gap))

    def volume(self):
        return float(np.sum(self.sides**self.d))


def _triadic_cubes(half_width, d):
    """Triadic family covering [-W, W)^d: the central unit cube plus the
    shells 3^k([-1/2, 1/2)^d + tau), tau in {0, +-1}^d \\ {0}."""
    levels = math.log(2.0 * half_width) / math.log(3.0) - 1.0
    k_max = round(levels)
    if abs(levels - k_max) > 1e-9 or k_max < -1:
        raise ValueError(
            f"half width {half_width} must equal 3**k / 2 for integer k >= 0")
    cubes = [(np.full(d, -0.5), 1.0)]
    for k in range(k_max + 1):
        side = 3.0**k
        for tau in np.ndindex(*(3,) * d):
            shift = np.array(tau) - 1
            if np.all(shift == 0):
                continue
            cubes.append((side * (shift - 0.5), side))
    return cubes


def _subdivision_count(side, corner, beta, d):
    diam = math.sqrt(d) * side
    gap = np.maximum.reduce([corner, -(corner + side), np.zeros(d)])
    dist = math.sqrt(float(gap @ gap))
    target = (dist + 1.0) ** beta
    n = max(1, math.ceil(diam / target - 1e-12))
    return n


def build_partition(half_width, beta, d=2):
    """Split each triadic cube Q into n_Q^d equal subcubes, n_Q the unique
    integer with diam(Q)/n_Q <= (dist(Q)+1)^beta < diam(Q)/(n_Q - 1)."""
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    corners, sides, subs = [], [], []
    for corner, side in _triadic_cubes(half_width, d):
        n = _subdivision_count(side, corner, beta, d)
        sub = side / n
        for idx in np.ndindex(*(n,) * d):
            corners.append(corner + sub * np.array(idx))
            sides.append(sub)
            subs.append(n)
    return Partition(np.array(corners), np.array(sides),
                     np.array(subs, dtype=np.int64),
                     float(beta), float(half_width), d)


def check_refinement(part: Partition):
    """Hard-assert diam(D) <= (dist(D)+1)^beta for every cell; return the
    smallest C with (dist(D)+1)^beta <= C diam(D)."""
    diam = part.diam
    target = (part.dist + 1.0) ** part.beta
    bad = diam > target * (1.0 + 1e-12)
    if np.any(bad):
        i = int(np.nonzero(bad)[0][0])
        raise AssertionError(
            f"refinement violated at cell {i}: diam {diam[i]} > {target[i]}")
    return float(np.max(target / diam))


def interaction_sum(part: Partition, gamma):
    """sup over cells D of sum_{D'} (1 + dist(D, D'))^(-gamma)."""
    if gamma <= part.d * (1.0 - part.beta):
        raise ValueError(
            f"gamma = {gamma} is in the non-integrable range "
            f"(need > {part.d * (1.0 - part.beta)})")
    # the cell family is invariant under coordinate permutations and sign
    # flips, so the sup is attained on the canonical wedge
    # c_1 >= c_2 >= ... >= c_d >= 0 of cell centers
    centers = part.corners + 0.5 * part.sides[:, None]
    tol = 1e-9 * max(1.0, part.half_width)
    wedge = np.all(np.diff(centers, axis=1) <= tol, axis=1)
    wedge &= centers[:, -1] >= -tol
    outer = np.nonzero(wedge)[0]
    return float(kernels.pair_interaction_sup(
        part.corners, part.sides, gamma, outer))


def locate_cell(point, beta, d=None):
    """Index-free location of the partition cell containing a point:
    returns (corner, side) of the cell from the triadic construction."""
    point = np.asarray(point, dtype=np.float64)
    d = d if d is not None else point.size
    m = float(np.max(np.abs(point)))
    if m < 0.5:
        corner, side = np.full(d, -0.5), 1.0
    else:
        # level k with the point inside the shell 3^k([-3/2,3/2) \ [-1/2,1/2))
        k = 0
        while 0.5 * 3.0 ** (k + 1) <= m:
            k += 1
        side = 3.0**k
        shift = np.floor(point / side + 0.5)
        corner = side * (shift - 0.5)
    n = _subdivision_count(side, corner, beta, d)
    sub = side / n
    idx = np.minimum(np.floor((point - corner) / sub), n - 1)
    return corner + sub * idx, sub


def lattice_partition_labels(grid, beta, center=None):
    """Label array over the torus assigning every cell its partition cell,
    via the periodic offset to ``center`` (default origin)."""
    d, n = grid.d, grid.n
    center = center or (0.0,) * d
    key_to_label = {}
    labels = np.empty(grid.shape, dtype=np.int64)
    for idx in np.ndindex(*grid.shape):
        off = tuple(((idx[j] - center[j] + n / 2) % n) - n / 2
                    for j in range(d))
        corner, side = locate_cell(np.array(off), beta, d)
        key = (round(side * 2**24),) + tuple(round(c * 2**24) for c in corner)
        labels[idx] = key_to_label.setdefault(key, len(key_to_label))
    return labels
