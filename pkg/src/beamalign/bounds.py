"""Computable theory layer: per-level crossovers, search-time and error bounds,
and the divergence-inequality audit for recorded sessions.

All rates and exponents are in nats.  The expected-search-time bound carries
an unmodeled o(log 1/(delta epsilon)) term (no constant is available for
it); the reported value excludes it and the report says so.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .array_channel import optimal_threshold
from .codebook import HierCodebook
from .numerics import (bernoulli_kl, bsc_mutual_info, c1_exponent,
                       random_coding_bound)
from .posterior import ejs, onebit_conditionals

__all__ = [
    "LevelNoiseProfile",
    "BoundReport",
    "AuditResult",
    "level_profile",
    "compute_K0",
    "theorem1_bound",
    "corollary_error_bound",
    "corollary_precondition",
    "acquisition_rate_check",
    "lemma3_audit",
    "scan_crossover",
]


@dataclass(frozen=True)
class LevelNoiseProfile:
    """Per-level 1-bit crossovers p[l] and power thresholds v[l], l = 1..S."""

    p: np.ndarray
    v: np.ndarray
    power: float
    noise_var: float
    alpha_mag: float = 1.0

    @property
    def levels(self) -> int:
        return self.p.shape[0]


@dataclass(frozen=True)
class BoundReport:
    """Theorem-style search-time bound and its ingredients.

    tau_bound excludes the paper-style o(log 1/(delta epsilon)) correction
    (no constant is defined for it); ``degenerate`` flags a saturated
    channel (p = 1/2 somewhere needed), which makes the bound infinite.
    """

    rate: float          # R_h, nats/sample
    exponent: float      # E_h, nats/sample
    l_prime: int
    k0: float
    tau_bound: float
    degenerate: bool
    o_term_excluded: bool = True


def level_profile(cb: HierCodebook, power: float, noise_var: float,
                  alpha_mag: float = 1.0) -> LevelNoiseProfile:
    """Worst-case minimax crossover per level from the stored codeword gains."""
    S = cb.levels
    p = np.empty(S)
    v = np.empty(S)
    for level in range(1, S + 1):
        in_gain, out_gain = cb.level_gains(level)
        res = optimal_threshold(in_gain, out_gain, power, noise_var, alpha_mag)
        p[level - 1] = res.p
        v[level - 1] = res.v
    return LevelNoiseProfile(p, v, power, noise_var, alpha_mag)


def compute_K0(p1: float) -> float:
    """Drift floor of the nested-posterior divergence, from the level-1 crossover.

    min of I(1/3; p1) and (2/3) D(mix || Bern(p1)) with the 1/3-to-2/3 mixture
    of Bern(1-p1) and Bern(p1).  At p1 = 0 the second term is infinite and
    the mutual-information term (its noiseless limit) is returned.
    """
    if not 0.0 <= p1 < 0.5:
        raise ValueError("compute_K0 requires p1 in [0, 1/2)")
    mix = (1.0 + p1) / 3.0  # P(z=1) under (1/3) Bern(1-p1) + (2/3) Bern(p1)
    return min(bsc_mutual_info(1.0 / 3.0, p1),
               (2.0 / 3.0) * bernoulli_kl(mix, p1))


def _safe_c1(p: float) -> float:
    if p <= 0.0:
        return math.inf
    if p >= 0.5:
        return c1_exponent(p) if p < 1.0 else math.inf
    return c1_exponent(p)


def theorem1_bound(delta: float, epsilon: float,
                   profile: LevelNoiseProfile) -> BoundReport:
    """Expected-search-time bound log(1/delta)/R_h + log(1/epsilon)/E_h.

    E_h is the leaf-level testing exponent; R_h is evaluated at the level
    l' = floor(K0 ceil(log log 1/delta) / log 2 - 1), clamped into [1, S].
    """
    S = profile.levels
    resolution = round(1.0 / delta)
    if 1 << S != resolution:
        raise ValueError(f"profile has {S} levels but 1/delta = {1/delta}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1)")
    p_leaf = float(profile.p[S - 1])
    p1 = max(float(profile.p[0]), 0.0)
    exponent = _safe_c1(p_leaf)
    if p1 >= 0.5:
        return BoundReport(rate=0.0, exponent=exponent, l_prime=1, k0=0.0,
                           tau_bound=math.inf, degenerate=True)
    k0 = compute_K0(p1)
    loglog = math.ceil(math.log(math.log(1.0 / delta)))
    l_prime = math.floor(k0 * loglog / math.log(2.0) - 1.0)
    l_prime = min(max(l_prime, 1), S)
    rate = bsc_mutual_info(1.0 / 3.0, float(profile.p[l_prime - 1]))
    if rate <= 0.0:
        return BoundReport(rate=rate, exponent=exponent, l_prime=l_prime, k0=k0,
                           tau_bound=math.inf, degenerate=True)
    reliability = 0.0 if math.isinf(exponent) else math.log(1.0 / epsilon) / exponent
    tau = math.log(1.0 / delta) / rate + reliability
    return BoundReport(rate=rate, exponent=exponent, l_prime=l_prime, k0=k0,
                       tau_bound=tau, degenerate=False)


def corollary_precondition(n: float, delta: float,
                           profile: LevelNoiseProfile) -> bool:
    """Literal precondition delta <= 2^(-n R_h) of the error-probability corollary.

    Note the direction: it holds exactly where the exponential bound
    saturates at 1 (log(1/delta) >= n R_h), i.e. where the rate cannot
    support the target resolution.  See also the clamped bound itself, which
    is informative on the complementary (rate-supported) side.
    """
    report = theorem1_bound(delta, 0.5, profile)
    if report.degenerate:
        return True
    return math.log2(1.0 / delta) >= n * report.rate / math.log(2.0)


def corollary_error_bound(n: float, delta: float,
                          profile: LevelNoiseProfile) -> float:
    """Error bound exp(-n E_h (1 - log(1/delta)/(n R_h))), clamped to [0, 1].

    The log ratio is base-free; E_h * n is in nats to match exp().  Vacuous
    (1.0) whenever the rate term cannot support the resolution.
    """
    report = theorem1_bound(delta, 0.5, profile)
    if report.degenerate or report.rate <= 0.0:
        return 1.0
    margin = 1.0 - math.log(1.0 / delta) / (n * report.rate)
    if margin <= 0.0:
        return 1.0
    if math.isinf(report.exponent):
        return 0.0
    return min(math.exp(-n * report.exponent * margin), 1.0)


def scan_crossover(power: float, noise_var: float, alpha_mag: float = 1.0):
    """Crossover map fraction -> p for ideal q-of-n scan beams (gain 3/(2 f))."""
    def p_of_fraction(fraction: float) -> float:
        gain = 3.0 / (2.0 * fraction)
        return optimal_threshold(gain, 0.0, power, noise_var, alpha_mag).p
    return p_of_fraction


@dataclass(frozen=True)
class RateCheckRow:
    resolution: int
    delta: float
    l_prime: int
    rate_nats: float
    rate_bits: float
    sim_rate_nats: float | None


def acquisition_rate_check(profiles: dict[int, LevelNoiseProfile],
                           measured_tau: dict[int, float] | None = None,
                           ) -> list[RateCheckRow]:
    """Rate report over a resolution sequence (theory, plus measured rates if given).

    ``profiles`` maps resolution 1/delta to its level profile; ``measured_tau``
    optionally maps resolution to a Monte Carlo mean stopping time, reported
    as the empirical acquisition rate log(1/delta)/E[tau].
    """
    rows = []
    for resolution in sorted(profiles):
        profile = profiles[resolution]
        delta = 1.0 / resolution
        report = theorem1_bound(delta, 0.5, profile)
        sim_rate = None
        if measured_tau and resolution in measured_tau:
            sim_rate = math.log(resolution) / measured_tau[resolution]
        rows.append(RateCheckRow(resolution, delta, report.l_prime, report.rate,
                                 report.rate / math.log(2.0), sim_rate))
    return rows


@dataclass
class AuditResult:
    steps: int
    violations: int
    worst_slack: float   # most negative margin seen (>= -slack passes)
    pi_tilde: float


def lemma3_audit(traces, profile: LevelNoiseProfile, n: float, epsilon: float,
                 slack: float = 1e-9) -> AuditResult:
    """Check the hiePM divergence inequalities on recorded 1-bit sessions.

    For every recorded step: EJS(pi, policy) >= I(1/3; p[l_selected]), and
    whenever max_i pi_i >= pi_tilde, EJS >= pi_tilde * C1(p[S]), with
    pi_tilde = 1 - 1/(1 + max(n, log 1/epsilon)).  Violations are counted
    beyond the numerical slack.
    """
    pi_tilde = 1.0 - 1.0 / (1.0 + max(n, math.log(1.0 / epsilon)))
    e_floor = pi_tilde * _safe_c1(float(profile.p[-1]))
    steps = 0
    violations = 0
    worst = math.inf
    for trace in traces:
        if trace.posteriors is None:
            raise ValueError("lemma3_audit needs traces with posterior snapshots")
        for t, (level, k) in enumerate(trace.queries):
            pi = trace.posteriors[t]
            p = float(profile.p[level - 1])
            lo = (k - 1) * (pi.shape[0] >> level)
            hi = lo + (pi.shape[0] >> level)
            cond = onebit_conditionals(pi.shape[0], (lo, hi), p)
            val = ejs(pi, cond)
            margin = val - bsc_mutual_info(1.0 / 3.0, p)
            if float(pi.max()) >= pi_tilde and not math.isinf(e_floor):
                margin = min(margin, val - e_floor)
            worst = min(worst, margin)
            if margin < -slack:
                violations += 1
            steps += 1
    return AuditResult(steps, violations, worst, pi_tilde)


def bounds_table(cb: HierCodebook, snr_db_grid, n: float, delta: float,
                 epsilon: float, alpha_mag: float = 1.0):
    """Rows for the bounds CSV: per-SNR profile, theorem/corollary values, and
    the non-adaptive random-coding bound at the same sample budget."""
    rows = []
    resolution = round(1.0 / delta)
    for snr_db in snr_db_grid:
        power = 10.0 ** (snr_db / 10.0)
        profile = level_profile(cb, power, 1.0, alpha_mag)
        report = theorem1_bound(delta, epsilon, profile)
        err = corollary_error_bound(n, delta, profile)
        rc = random_coding_bound(n, resolution,
                                 scan_crossover(power, 1.0, alpha_mag))
        rows.append({
            "snr_db": snr_db,
            "p_levels": profile.p.copy(),
            "rate": report.rate,
            "exponent": report.exponent,
            "tau_bound": report.tau_bound,
            "err_bound": err,
            "random_coding_bound": rc,
        })
    return rows
