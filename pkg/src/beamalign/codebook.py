"""Hierarchical beamforming codebooks and the random-scan codebook.

Level l (1-based) holds 2^l codewords whose angular supports partition the
sector dyadically; codeword (l, k) is the union of its two children
(l+1, 2k-1) and (l+1, 2k).  Nodes are also addressed by a flat id
``2^l - 2 + (k - 1)`` used by the session kernels.

Two construction modes:

* ideal -- constant in-beam power gain pi / |D| (support width in radians),
  zero out-of-beam.  The gain therefore doubles per level.
* practical -- unit-norm least-squares weights fitted on an oversampled
  angle grid against a flat in-beam / zero out-of-beam target, with the
  realized min in-beam and max out-of-beam power gains stored per codeword
  for threshold setting.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .array_channel import AngleGrid, ArrayGeometry, steering_matrix

__all__ = [
    "Codeword",
    "HierCodebook",
    "RandomScanBook",
    "RandomBeam",
    "build_ideal",
    "build_practical",
    "children",
    "parent",
    "sample_random_beam",
    "scan_power_gain",
]


def node_id(level: int, k: int) -> int:
    """Flat id of codeword (level, k), level >= 1, k in [1, 2^level]."""
    return (1 << level) - 2 + (k - 1)


def node_lk(nid: int) -> tuple[int, int]:
    level = (nid + 2).bit_length() - 1
    return level, nid - ((1 << level) - 2) + 1


@dataclass(frozen=True)
class Codeword:
    """One beam of the hierarchy with its support and stored gain data."""

    level: int
    k: int
    support: tuple[int, int]          # half-open grid-index range [lo, hi)
    weights: np.ndarray | None        # unit-norm, practical mode only
    in_gain: float                    # min in-beam power gain
    out_gain: float                   # max out-of-beam power gain

    @property
    def node(self) -> int:
        return node_id(self.level, self.k)


class HierCodebook:
    """S-level binary beam hierarchy over an AngleGrid.

    response[node, i] is the complex beam response w^H a(theta_i) at grid
    point i (real G_l on the support in ideal mode).
    """

    def __init__(self, grid: AngleGrid, mode: str, response: np.ndarray,
                 in_gain: np.ndarray, out_gain: np.ndarray,
                 weights: np.ndarray | None = None,
                 geometry: ArrayGeometry | None = None):
        self.grid = grid
        self.mode = mode
        self.levels = grid.levels
        self.response = response
        self.in_gain = in_gain
        self.out_gain = out_gain
        self.weights = weights
        self.geometry = geometry

    @property
    def num_nodes(self) -> int:
        return (1 << (self.levels + 1)) - 2

    def support(self, level: int, k: int) -> tuple[int, int]:
        if not (1 <= level <= self.levels and 1 <= k <= (1 << level)):
            raise IndexError(f"codeword ({level}, {k}) outside the hierarchy")
        m = self.grid.resolution >> level
        return (k - 1) * m, k * m

    def codeword(self, level: int, k: int) -> Codeword:
        nid = node_id(level, k)
        w = self.weights[nid] if self.weights is not None else None
        return Codeword(level, k, self.support(level, k), w,
                        float(self.in_gain[nid]), float(self.out_gain[nid]))

    def level_gains(self, level: int) -> tuple[float, float]:
        """Worst-case (min in-beam, max out-of-beam) power gains at a level."""
        ids = [node_id(level, k) for k in range(1, (1 << level) + 1)]
        return float(np.min(self.in_gain[ids])), float(np.max(self.out_gain[ids]))


def children(cb: HierCodebook, level: int, k: int) -> tuple[Codeword, Codeword]:
    """Codewords (level+1, 2k-1) and (level+1, 2k); supports union to the parent's."""
    if level >= cb.levels:
        raise IndexError(f"level {level} has no children (S = {cb.levels})")
    return cb.codeword(level + 1, 2 * k - 1), cb.codeword(level + 1, 2 * k)


def parent(level: int, k: int) -> tuple[int, int]:
    if level <= 1:
        raise IndexError("level-1 codewords have no codeword parent")
    return level - 1, (k + 1) // 2


def _supports(grid: AngleGrid):
    for level in range(1, grid.levels + 1):
        m = grid.resolution >> level
        for k in range(1, (1 << level) + 1):
            yield level, k, (k - 1) * m, k * m


def build_ideal(grid: AngleGrid) -> HierCodebook:
    """Ideal codebook: flat power gain pi/|D_l| inside each support, zero outside."""
    M = grid.resolution
    n_nodes = (1 << (grid.levels + 1)) - 2
    response = np.zeros((n_nodes, M), dtype=complex)
    in_gain = np.zeros(n_nodes)
    out_gain = np.zeros(n_nodes)
    for level, k, lo, hi in _supports(grid):
        width = grid.width / (1 << level)
        g_pow = np.pi / width
        nid = node_id(level, k)
        response[nid, lo:hi] = np.sqrt(g_pow)
        in_gain[nid] = g_pow
        out_gain[nid] = 0.0
    return HierCodebook(grid, "ideal", response, in_gain, out_gain)


def build_practical(grid: AngleGrid, geometry: ArrayGeometry,
                    oversample: int = 4, regularization: float = 1e-6) -> HierCodebook:
    """Least-squares codebook designed over the full visible sine range.

    Each codeword solves min_w ||A^H w - t||^2 + reg ||w||^2 with t flat on
    the support's sine interval and zero on the rest of sin(theta) in
    [-1, 1), then is normalized to unit norm.  Sampling the whole visible
    range uniformly in sine keeps the normal matrix well conditioned (a
    sector-only design grid leaves near-invisible array directions that
    swallow the solution).  The realized min in-beam / max out-of-beam power
    gains over the AoA grid are stored per codeword for threshold setting.
    """
    M = grid.resolution
    N = geometry.num_antennas
    if N < M:
        warnings.warn(f"num_antennas = {N} below resolution {M}; "
                      "leaf beams will be wide", stacklevel=2)
    if not (-np.pi / 2 <= grid.theta_lo and grid.theta_hi <= np.pi / 2):
        raise ValueError("practical design needs the sector within "
                         "[-pi/2, pi/2] (broadside angles)")
    n_design = M * oversample
    u = -1.0 + (np.arange(n_design) + 0.5) * 2.0 / n_design
    n_idx = np.arange(N)[:, None]
    A = np.exp(1j * 2.0 * np.pi * geometry.spacing * n_idx * u[None, :])
    gram = A @ A.conj().T + regularization * np.eye(N)
    try:
        gram_inv_A = np.linalg.solve(gram, A)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"least-squares design system is singular: {exc}") from exc
    A_grid = steering_matrix(geometry, grid.angles())  # N x M
    cell_edges = grid.theta_lo + np.arange(M + 1) * grid.delta * grid.width

    n_nodes = (1 << (grid.levels + 1)) - 2
    response = np.zeros((n_nodes, M), dtype=complex)
    in_gain = np.zeros(n_nodes)
    out_gain = np.zeros(n_nodes)
    weights = np.zeros((n_nodes, N), dtype=complex)
    for level, k, lo, hi in _supports(grid):
        u_lo, u_hi = np.sin(cell_edges[lo]), np.sin(cell_edges[hi])
        target = ((u >= u_lo) & (u < u_hi)).astype(float)
        w = gram_inv_A @ target
        w /= np.linalg.norm(w)
        nid = node_id(level, k)
        weights[nid] = w
        resp = w.conj() @ A_grid
        response[nid] = resp
        power = np.abs(resp) ** 2
        in_gain[nid] = power[lo:hi].min()
        mask = np.ones(M, dtype=bool)
        mask[lo:hi] = False
        out_gain[nid] = power[mask].max() if mask.any() else 0.0
    return HierCodebook(grid, "practical", response, in_gain, out_gain,
                        weights=weights, geometry=geometry)


@dataclass(frozen=True)
class RandomScanBook:
    """Non-adaptive scan codebook: n directions, q probed per beam.

    The C(n, q) beam patterns are never enumerated; beams are sampled lazily.
    """

    grid: AngleGrid
    n: int
    q: int

    def __post_init__(self):
        if not 1 <= self.q <= self.n:
            raise ValueError(f"require 1 <= q ({self.q}) <= n ({self.n})")
        if self.grid.resolution % self.n != 0:
            raise ValueError("n must divide the grid resolution")

    @property
    def points_per_direction(self) -> int:
        return self.grid.resolution // self.n


def scan_power_gain(book: RandomScanBook) -> float:
    """Ideal in-beam power gain of a q-of-n beam: 3/(2 f) with f = q/n.

    Matches the hierarchy's pi/|D| convention on a 120-degree sector, where a
    beam of width fraction f has |D| = f * 2*pi/3.
    """
    return 3.0 * book.n / (2.0 * book.q)


@dataclass(frozen=True)
class ScanBeamDesign:
    """Per-direction LS building blocks for practical multi-lobe scan beams.

    A sampled beam is the normalized sum of its directions' weight vectors;
    responses add the same way, so sampling a beam costs O(q N + M).
    """

    dir_weights: np.ndarray    # (n, N) complex, unnormalized
    dir_response: np.ndarray   # (n, M) complex, matching the weights


def build_scan_design(book: RandomScanBook, geometry: ArrayGeometry,
                      oversample: int = 4,
                      regularization: float = 1e-6) -> ScanBeamDesign:
    """LS design of the n single-direction building blocks (full sine grid)."""
    grid = book.grid
    M = grid.resolution
    N = geometry.num_antennas
    n_design = M * oversample
    u = -1.0 + (np.arange(n_design) + 0.5) * 2.0 / n_design
    n_idx = np.arange(N)[:, None]
    A = np.exp(1j * 2.0 * np.pi * geometry.spacing * n_idx * u[None, :])
    gram = A @ A.conj().T + regularization * np.eye(N)
    gram_inv_A = np.linalg.solve(gram, A)
    A_grid = steering_matrix(geometry, grid.angles())
    cell_edges = grid.theta_lo + np.arange(M + 1) * grid.delta * grid.width
    ppd = book.points_per_direction
    dir_weights = np.empty((book.n, N), dtype=complex)
    dir_response = np.empty((book.n, M), dtype=complex)
    for d in range(book.n):
        u_lo = np.sin(cell_edges[d * ppd])
        u_hi = np.sin(cell_edges[(d + 1) * ppd])
        target = ((u >= u_lo) & (u < u_hi)).astype(float)
        w = gram_inv_A @ target
        dir_weights[d] = w
        dir_response[d] = w.conj() @ A_grid
    return ScanBeamDesign(dir_weights, dir_response)


@dataclass(frozen=True)
class RandomBeam:
    """One sampled scan beam: probed directions, grid response, gain extremes."""

    directions: np.ndarray     # sorted q-subset of range(n)
    grid_mask: np.ndarray      # boolean over the AoA grid
    response: np.ndarray       # complex beam response at every grid point
    in_gain: float             # min in-beam power gain
    out_gain: float            # max out-of-beam power gain


def sample_random_beam(book: RandomScanBook, rng: np.random.Generator,
                       design: ScanBeamDesign | None = None) -> RandomBeam:
    """Uniformly sample a q-subset of the n directions and model its beam.

    Without a design the beam is ideal (flat amplitude on its directions,
    zero elsewhere); with one, the practical LS multi-lobe pattern is used.
    """
    dirs = np.sort(rng.choice(book.n, size=book.q, replace=False))
    mask = np.zeros(book.grid.resolution, dtype=bool)
    ppd = book.points_per_direction
    for d in dirs:
        mask[d * ppd:(d + 1) * ppd] = True
    if design is None:
        amp = float(np.sqrt(scan_power_gain(book)))
        response = np.where(mask, amp + 0.0j, 0.0j)
        return RandomBeam(dirs, mask, response, amp * amp, 0.0)
    w = design.dir_weights[dirs].sum(axis=0)
    nrm = np.linalg.norm(w)
    response = design.dir_response[dirs].sum(axis=0) / nrm
    power = np.abs(response) ** 2
    out = float(power[~mask].max()) if (~mask).any() else 0.0
    return RandomBeam(dirs, mask, response, float(power[mask].min()), out)
