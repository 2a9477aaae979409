"""Posterior over the AoA grid: Bayes updates, nesting, and divergence functionals.

The posterior is a plain nonnegative numpy vector summing to one.  Updates
are functional (they return a new vector).  The full-measurement update runs
in the log domain with max-subtraction: at 64-antenna gains and 10 dB raw
SNR the Gaussian likelihood ratios overflow double range otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .array_channel import AngleGrid, ArrayGeometry, steering_matrix

__all__ = [
    "NestedPosterior",
    "DegenerateUpdateError",
    "init_uniform",
    "update_full",
    "update_onebit",
    "mass",
    "nest",
    "avg_loglik",
    "onebit_conditionals",
    "ejs",
    "js",
]

NORMALIZATION_TOL = 1e-12


class DegenerateUpdateError(RuntimeError):
    """All posterior mass annihilated by a zero-likelihood observation."""


@dataclass(frozen=True)
class NestedPosterior:
    """Posterior aggregated onto the 2^level dyadic cells of one tree level."""

    level: int
    pi: np.ndarray


def init_uniform(resolution: int) -> np.ndarray:
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    return np.full(resolution, 1.0 / resolution)


def _support_slice(pi: np.ndarray, support) -> np.ndarray:
    """Boolean mask for a support given as (lo, hi), an index array, or a mask."""
    mask = np.zeros(pi.shape[0], dtype=bool)
    if isinstance(support, tuple) and len(support) == 2:
        lo, hi = support
        if not (0 <= lo < hi <= pi.shape[0]):
            raise ValueError(f"support range {support} invalid for grid size {pi.shape[0]}")
        mask[lo:hi] = True
    else:
        arr = np.asarray(support)
        if arr.dtype == bool:
            mask = arr.copy()
        else:
            mask[arr] = True
    if not mask.any():
        raise ValueError("empty support")
    return mask


def update_onebit(pi: np.ndarray, z: int, support, p_in: float,
                  p_out: float | None = None) -> np.ndarray:
    """Bayes update for z = 1{|y|^2 > v} with flat flip probabilities.

    In-support hypotheses see Bern(1 - p_in) for z = 1; out-of-support ones
    see Bern(p_out).  Under the minimax threshold p_in = p_out = p[l].
    """
    if p_out is None:
        p_out = p_in
    mask = _support_slice(pi, support)
    like = np.where(mask, 1.0 - p_in if z else p_in,
                    p_out if z else 1.0 - p_out)
    post = pi * like
    total = post.sum()
    if total <= 0.0:
        raise DegenerateUpdateError("1-bit update annihilated the posterior")
    return post / total


def update_full(pi: np.ndarray, y: complex, w: np.ndarray, alpha_hat: complex,
                power: float, noise_var: float, grid: AngleGrid,
                geometry: ArrayGeometry) -> np.ndarray:
    """Bayes update under the complex Gaussian likelihood CN(y; ahat sqrt(P) w^H a, sigma^2).

    alpha_hat is the (possibly mismatched) fading estimate used by the
    algorithm; the true alpha only enters through the observed y.
    """
    resp = w.conj() @ steering_matrix(geometry, grid.angles())
    mean = alpha_hat * math.sqrt(power) * resp
    with np.errstate(divide="ignore"):
        ll = np.log(pi) - np.abs(y - mean) ** 2 / noise_var
    ll -= ll.max()
    post = np.exp(ll)
    total = post.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateUpdateError("full-measurement update produced no finite mass")
    return post / total


def mass(pi: np.ndarray, support) -> float:
    """Posterior probability of the AoA lying in the support."""
    if isinstance(support, tuple) and len(support) == 2:
        lo, hi = support
        if lo >= hi:
            return 0.0
        return float(pi[lo:hi].sum())
    return float(pi[np.asarray(support)].sum())


def nest(pi: np.ndarray, level: int) -> NestedPosterior:
    """Aggregate onto 2^level contiguous blocks (level S is the identity)."""
    M = pi.shape[0]
    cells = 1 << level
    if level < 0 or cells > M:
        raise ValueError(f"level {level} outside [0, log2({M})]")
    return NestedPosterior(level, pi.reshape(cells, M // cells).sum(axis=1))


def avg_loglik(pi) -> float:
    """U = sum pi log(pi / (1 - pi)); +inf (flagged) when some entry is 1."""
    vec = pi.pi if isinstance(pi, NestedPosterior) else np.asarray(pi)
    if np.any(vec >= 1.0):
        return math.inf
    return float(np.sum(xlogy(vec, vec) - xlogy(vec, 1.0 - vec)))


def onebit_conditionals(size: int, support, p_in: float,
                        p_out: float | None = None) -> np.ndarray:
    """Per-hypothesis law of the next bit, shape (size, 2): columns P(z=0), P(z=1)."""
    if p_out is None:
        p_out = p_in
    mask = _support_slice(np.empty(size), support)
    p1 = np.where(mask, 1.0 - p_in, p_out)
    return np.column_stack([1.0 - p1, p1])


def _rowwise_kl(p_rows: np.ndarray, q_rows: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = xlogy(p_rows, p_rows) - xlogy(p_rows, q_rows)
    # xlogy(p>0, 0) = -inf; the divergence for such rows is +inf
    return terms.sum(axis=1)


def ejs(pi: np.ndarray, conditionals: np.ndarray) -> float:
    """Extrinsic Jensen-Shannon divergence sum_i pi_i D(P_i || P_{!= i}).

    ``conditionals`` has one row per hypothesis (the observation law given
    that hypothesis).  A degenerate posterior entry pi_i = 1 leaves the
    leave-one-out mixture undefined; the single-term +inf limit is returned.
    """
    pi = np.asarray(pi, dtype=float)
    cond = np.asarray(conditionals, dtype=float)
    if np.any(pi >= 1.0):
        return math.inf
    mixture = pi @ cond
    loo = (mixture[None, :] - pi[:, None] * cond) / (1.0 - pi)[:, None]
    kl = _rowwise_kl(cond, loo)
    return float(np.sum(pi * np.where(pi > 0, kl, 0.0)))


def js(pi: np.ndarray, conditionals: np.ndarray) -> float:
    """Jensen-Shannon divergence sum_i pi_i D(P_i || P), the mutual information."""
    pi = np.asarray(pi, dtype=float)
    cond = np.asarray(conditionals, dtype=float)
    mixture = pi @ cond
    kl = _rowwise_kl(cond, mixture[None, :])
    return float(np.sum(pi * np.where(pi > 0, kl, 0.0)))
