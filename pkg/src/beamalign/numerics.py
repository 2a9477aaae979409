"""Scalar special functions and information measures.

Everything here is a pure function; all divergences and entropies are in
nats (callers convert to bits only at reporting boundaries).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import chndtr, i0e, xlogy

__all__ = [
    "BernoulliPair",
    "RicianParams",
    "rice_pdf",
    "rice_cdf",
    "marcum_q1",
    "binary_entropy",
    "bsc_mutual_info",
    "c1_exponent",
    "bernoulli_kl",
    "kl_divergence",
    "solve_root_monotone",
    "gallager_e0",
    "random_coding_bound",
]


@dataclass(frozen=True)
class BernoulliPair:
    """Crossover probability p in [0, 1/2] and input bias q in [0, 1]."""

    p: float
    q: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 0.5:
            raise ValueError(f"crossover p={self.p} outside [0, 1/2]")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"input bias q={self.q} outside [0, 1]")


@dataclass(frozen=True)
class RicianParams:
    """Noncentrality nu >= 0 and per-component noise scale s > 0 (amplitude units)."""

    nu: float
    s: float

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError(f"noncentrality nu={self.nu} must be >= 0")
        if self.s <= 0:
            raise ValueError(f"scale s={self.s} must be > 0")


def rice_pdf(x, params: RicianParams):
    """Rician density (x/s^2) exp(-(x^2+nu^2)/(2 s^2)) I0(x nu / s^2).

    Uses the exponentially scaled Bessel function, so it stays finite for
    arbitrarily large nu/s (the naive I0 overflows past ~ x*nu/s^2 = 700).
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("rice_pdf domain is x >= 0")
    nu, s = params.nu, params.s
    s2 = s * s
    # exp(-(x^2+nu^2)/(2s^2)) I0(x nu/s^2) == exp(-(x-nu)^2/(2s^2)) i0e(x nu/s^2)
    out = (x / s2) * np.exp(-((x - nu) ** 2) / (2.0 * s2)) * i0e(x * nu / s2)
    return out if out.ndim else float(out)


def marcum_q1(a, b):
    """First-order Marcum Q function Q1(a, b) via the noncentral chi-square CDF."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = 1.0 - chndtr(b * b, 2.0, a * a)
    return out if out.ndim else float(out)


def rice_cdf(x, params: RicianParams):
    """Rician CDF, equal to 1 - Q1(nu/s, x/s); nondecreasing, in [0, 1]."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("rice_cdf domain is x >= 0")
    nu, s = params.nu, params.s
    out = chndtr((x / s) ** 2, 2.0, (nu / s) ** 2)
    return out if out.ndim else float(out)


def binary_entropy(x):
    """Binary entropy in nats, with 0 log 0 := 0."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("binary_entropy domain is [0, 1]")
    out = -(xlogy(x, x) + xlogy(1.0 - x, 1.0 - x))
    return out if out.ndim else float(out)


def bsc_mutual_info(q, p):
    """Mutual information I(q; p) of a BSC(p) with input Bern(q), in nats.

    Symmetric in q <-> 1-q; zero for p = 1/2; at most log 2.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any((q < 0) | (q > 1)) or np.any((p < 0) | (p > 1)):
        raise ValueError("bsc_mutual_info arguments must lie in [0, 1]")
    out = binary_entropy(q * (1.0 - p) + (1.0 - q) * p) - binary_entropy(p)
    # guard tiny negative round-off at the p=1/2 boundary
    out = np.maximum(out, 0.0)
    return out if out.ndim else float(out)


def c1_exponent(p):
    """Hypothesis-testing exponent D(Bern(p) || Bern(1-p)) = (1-2p) log((1-p)/p)."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("c1_exponent requires 0 < p < 1 (infinite at the endpoints)")
    out = (1.0 - 2.0 * p) * np.log((1.0 - p) / p)
    return out if out.ndim else float(out)


def bernoulli_kl(a, b):
    """D(Bern(a) || Bern(b)) in nats; +inf when absolute continuity fails."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore"):
        out = (xlogy(a, a) - xlogy(a, b)) + (xlogy(1 - a, 1 - a) - xlogy(1 - a, 1 - b))
    return out if out.ndim else float(out)


def kl_divergence(p, q):
    """KL divergence sum p log(p/q) between finite distributions, in nats.

    Returns +inf when q has a zero where p does not (absolute continuity
    failure); 0 log 0 := 0 throughout.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("kl_divergence requires equal support sizes")
    if np.any((q == 0) & (p > 0)):
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = xlogy(p, p) - xlogy(p, q)
    return float(np.sum(terms))


def solve_root_monotone(f, lo, hi, tol=1e-13, max_iter=200):
    """Bracketing bisection: returns x with |f(x)| <= tol or bracket <= tol.

    Raises ValueError when f(lo) and f(hi) do not straddle zero.
    """
    flo = f(lo)
    fhi = f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise ValueError(f"no sign change on [{lo}, {hi}]: f(lo)={flo}, f(hi)={fhi}")
    # orient so that the root is crossed from negative to positive
    if flo > 0:
        lo, hi = hi, lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if abs(fmid) <= tol or abs(hi - lo) <= tol:
            return mid
        if fmid < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def gallager_e0(rho, q, p_q):
    """Gallager E0 for a BSC(p_q) with input bias q, in nats.

    Zero at rho = 0, nondecreasing in rho on [0, 1], symmetric in q <-> 1-q.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any((rho < 0) | (rho > 1)):
        raise ValueError("gallager_e0 requires rho in [0, 1]")
    if not (0.0 <= q <= 1.0 and 0.0 <= p_q <= 1.0):
        raise ValueError("gallager_e0 requires q, p_q in [0, 1]")
    e = 1.0 / (1.0 + rho)
    t0 = (q * p_q**e + (1.0 - q) * (1.0 - p_q) ** e) ** (1.0 + rho)
    t1 = (q * (1.0 - p_q) ** e + (1.0 - q) * p_q**e) ** (1.0 + rho)
    out = -np.log(t0 + t1)
    return out if out.ndim else float(out)


def random_coding_bound(tau, resolution, p_of_q, n_directions=None, rho_points=1000):
    """Error-probability bound for the non-adaptive random scan.

    Minimizes exp(-tau * max_rho (E0(rho, q) - rho * log2(resolution)/tau))
    over beams probing q of n directions, q in {1, ..., n/2} (beams are a
    fraction q/n of the sector, never enumerated).  Clamped to [0, 1].

    ``p_of_q`` maps the direction fraction q/n to the crossover probability
    of the induced binary channel.
    """
    if tau < 1:
        raise ValueError("tau must be >= 1")
    n = int(n_directions if n_directions is not None else resolution)
    rate = math.log2(resolution) / tau
    rho = np.linspace(0.0, 1.0, rho_points)
    best = math.inf
    for q_int in range(1, n // 2 + 1):
        frac = q_int / n
        p_q = p_of_q(frac)
        exponent = np.max(gallager_e0(rho, frac, p_q) - rho * rate)
        best = min(best, math.exp(-tau * exponent))
    return min(max(best, 0.0), 1.0)
