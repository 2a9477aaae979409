"""Monte Carlo experiment harness: SNR sweeps, metric estimation, audits.

Determinism contract: every trial owns a counter-based RNG stream derived
from (master seed, policy, SNR index, trial index), results are reduced in
trial order, and the aggregate is therefore bit-identical for any thread
count.  Raw SNR maps to power = 10^(snr_db/10) against unit noise variance.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .array_channel import AngleGrid, ArrayGeometry, ChannelState
from .codebook import (HierCodebook, RandomScanBook, build_ideal,
                       build_practical, build_scan_design, node_id)
from .numerics import bsc_mutual_info
from .policies import (HiepmContext, PolicySpec, ResolutionRule, SessionTrace,
                       StoppingRule, run_hiepm_session, run_session)
from .posterior import avg_loglik, ejs, js, onebit_conditionals, update_onebit
from . import bounds as bounds_mod

__all__ = [
    "ExperimentConfig",
    "MetricRow",
    "EjsAuditReport",
    "derive_stream",
    "wilson_ci",
    "trial_error",
    "transmission_rate",
    "run_sweep",
    "calibrate_epsilon",
    "ejs_audit_run",
]

_CAL_KEY = 900  # spawn-key namespace for calibration streams


def derive_stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based stream for one unit of work."""
    seq = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seed=seq))


def wilson_ci(successes: int, trials: int, z: float = 1.959963984540054):
    """95% Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    phat = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z2 / (4 * trials * trials)) / denom
    return max(center - half, 0.0), min(center + half, 1.0)


@dataclass
class ExperimentConfig:
    """Everything a sweep needs; see the README for the file format."""

    geometry: ArrayGeometry
    grid: AngleGrid
    policies: list[PolicySpec]
    snr_db: list[float]
    trials: int = 2000
    master_seed: int = 0
    alpha: complex = 1.0 + 0.0j
    fading: str = "known"               # known | mismatched
    sigma_alpha_sq: float = 0.05
    frame_t: float = 2800.0             # total frame for the rate metric
    tau_max: int = 10_000
    threads: int = 1
    calibration_trials: int = 200
    common_random_numbers: bool = False
    fixed_aoa: int | None = None
    oversample: int = 4

    def validate(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.snr_db:
            raise ValueError("snr_db grid must be nonempty")
        if not self.policies:
            raise ValueError("at least one policy is required")
        if self.fading not in ("known", "mismatched"):
            raise ValueError(f"unknown fading mode {self.fading!r}")
        if self.fading == "mismatched" and self.sigma_alpha_sq <= 0:
            raise ValueError("mismatched fading needs sigma_alpha_sq > 0")
        if self.frame_t <= 0:
            raise ValueError("frame_t must be > 0")
        if self.tau_max < 1:
            raise ValueError("tau_max must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.fixed_aoa is not None and not (
                0 <= self.fixed_aoa < self.grid.resolution):
            raise ValueError("fixed_aoa outside the grid")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha"] = [self.alpha.real, self.alpha.imag]
        d["policies"] = [asdict(p) for p in self.policies]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["geometry"] = ArrayGeometry(**d["geometry"])
        d["grid"] = AngleGrid(**d["grid"])
        alpha = d["alpha"]
        d["alpha"] = complex(alpha[0], alpha[1])
        pols = []
        for pd in d["policies"]:
            pd = dict(pd)
            if pd.get("stopping"):
                pd["stopping"] = StoppingRule(**pd["stopping"])
            if pd.get("resolution"):
                pd["resolution"] = ResolutionRule(**pd["resolution"])
            pols.append(PolicySpec(**pd))
        d["policies"] = pols
        return cls(**d)


@dataclass(frozen=True)
class MetricRow:
    """One sweep point.  mean_rate is in bits/s/Hz (internal math is in nats)."""

    policy: str
    snr_db: float
    trials: int
    err: float
    err_ci_lo: float
    err_ci_hi: float
    mean_tau: float
    mean_rate: float


def trial_error(trace: SessionTrace, channel: ChannelState, cb: HierCodebook) -> int:
    """1 iff the final beam misses the true AoA at its own resolution.

    At fixed resolution the final cell is a single grid point, so containment
    coincides with exact-leaf equality; capped variable-length runs count as
    errors.
    """
    if trace.capped:
        return 1
    lo, hi = trace.final_support(cb)
    return int(not (lo <= channel.aoa_index < hi))


def transmission_rate(trace: SessionTrace, channel: ChannelState,
                      cb: HierCodebook, frame_t: float) -> float:
    """(T - tau)/T log(1 + P |alpha w_hat^H a(phi)|^2 / sigma^2), in nats.

    Zero when the search consumed the whole frame (tau >= T).
    """
    if frame_t <= 0:
        raise ValueError("frame_t must be > 0")
    gain = abs(cb.response[node_id(trace.final_level, trace.final_k),
                           channel.aoa_index])
    eff = channel.power * (abs(channel.alpha) * gain) ** 2 / channel.noise_var
    overhead = max(frame_t - trace.tau, 0.0) / frame_t
    return overhead * math.log1p(eff)


def _draw_trial_setup(config: ExperimentConfig, rng: np.random.Generator,
                      power: float):
    """AoA index, channel, and fading estimate for one trial (fixed draw order)."""
    if config.fixed_aoa is None:
        idx = int(rng.integers(config.grid.resolution))
    else:
        idx = config.fixed_aoa
    channel = ChannelState(alpha=config.alpha, aoa_index=idx, power=power,
                           noise_var=1.0)
    if config.fading == "mismatched":
        g = rng.standard_normal(2)
        scale = math.sqrt(config.sigma_alpha_sq / 2.0)
        alpha_hat = config.alpha + scale * complex(g[0], g[1])
    else:
        alpha_hat = config.alpha
    return channel, alpha_hat


def _build_codebook(config: ExperimentConfig, mode: str) -> HierCodebook:
    if mode == "ideal":
        return build_ideal(config.grid)
    return build_practical(config.grid, config.geometry, config.oversample)


def calibrate_epsilon(config: ExperimentConfig, spec: PolicySpec, policy_idx: int,
                      snr_idx: int, power: float, cb: HierCodebook,
                      ctx: HiepmContext, tol: float = 1.0) -> float:
    """Tune the VL threshold so the mean stopping time hits spec.calibrate_tau.

    Runs ``calibration_trials`` stop-free sessions once, records the
    max-posterior trajectories, and searches epsilon on them (the stopping
    rule only truncates a trajectory, so no re-simulation is needed).  When
    even the widest/narrowest threshold cannot reach the target (stopping
    saturates), the nearest bracket end is returned.
    """
    target = spec.calibrate_tau
    horizon = config.tau_max
    trajs = []
    stop = StoppingRule("vl", epsilon=0.5)  # placeholder; horizon mode ignores it
    for trial in range(config.calibration_trials):
        rng = derive_stream(config.master_seed, _CAL_KEY + policy_idx, snr_idx, trial)
        channel, alpha_hat = _draw_trial_setup(config, rng, power)
        trace = run_hiepm_session(channel, cb, stop, spec.resolution,
                                  spec.measurement, rng, alpha_hat=alpha_hat,
                                  tau_max=horizon, ctx=ctx, record_maxpi=True,
                                  horizon=True)
        trajs.append(trace.maxpi)

    def mean_tau(eps: float) -> float:
        thr = 1.0 - eps
        total = 0.0
        for m in trajs:
            crossed = m > thr
            if crossed.any():
                total += int(np.argmax(crossed)) + 1
            else:
                total += config.tau_max
        return total / len(trajs)

    lo, hi = 1e-9, 0.99
    f_lo, f_hi = mean_tau(lo), mean_tau(hi)
    if f_lo <= target + tol:       # saturated: even patient stopping is too fast
        return lo
    if f_hi >= target - tol:       # degenerate: even eager stopping is too slow
        return hi
    for _ in range(80):
        mid = math.sqrt(lo * hi)   # bisect in log space
        f_mid = mean_tau(mid)
        if abs(f_mid - target) <= tol:
            return mid
        if f_mid > target:
            lo = mid               # need a larger epsilon to stop sooner
        else:
            hi = mid
    return math.sqrt(lo * hi)


def _run_point(config: ExperimentConfig, spec: PolicySpec, policy_idx: int,
               snr_idx: int, cb: HierCodebook) -> MetricRow:
    power = 10.0 ** (config.snr_db[snr_idx] / 10.0)
    ctx = None
    book = None
    scan_design = None
    eff_spec = spec
    if spec.kind == "hiepm":
        ctx = HiepmContext(cb, power, 1.0, spec.measurement, abs(config.alpha))
        if spec.calibrate_tau is not None:
            eps = calibrate_epsilon(config, spec, policy_idx, snr_idx, power,
                                    cb, ctx)
            eff_spec = replace(spec, stopping=StoppingRule("vl", epsilon=eps),
                               calibrate_tau=None)
    elif spec.kind == "random_scan":
        book = RandomScanBook(config.grid, config.grid.resolution, spec.scan_q)
        if spec.codebook_mode == "practical":
            scan_design = build_scan_design(book, config.geometry,
                                            config.oversample)

    policy_key = 0 if config.common_random_numbers else 1 + policy_idx
    errs = np.empty(config.trials, dtype=np.int64)
    taus = np.empty(config.trials, dtype=np.float64)
    rates = np.empty(config.trials, dtype=np.float64)

    def work(lo: int, hi: int):
        for trial in range(lo, hi):
            rng = derive_stream(config.master_seed, policy_key, snr_idx, trial)
            channel, alpha_hat = _draw_trial_setup(config, rng, power)
            trace = run_session(eff_spec, channel, cb, rng, book=book,
                                alpha_hat=alpha_hat, tau_max=config.tau_max,
                                ctx=ctx, scan_design=scan_design)
            errs[trial] = trial_error(trace, channel, cb)
            taus[trial] = trace.tau
            rates[trial] = transmission_rate(trace, channel, cb, config.frame_t)

    if config.threads <= 1:
        work(0, config.trials)
    else:
        chunk = -(-config.trials // config.threads)
        spans = [(i, min(i + chunk, config.trials))
                 for i in range(0, config.trials, chunk)]
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            list(pool.map(lambda s: work(*s), spans))

    n_err = int(errs.sum())
    ci_lo, ci_hi = wilson_ci(n_err, config.trials)
    return MetricRow(
        policy=spec.label,
        snr_db=config.snr_db[snr_idx],
        trials=config.trials,
        err=n_err / config.trials,
        err_ci_lo=ci_lo,
        err_ci_hi=ci_hi,
        mean_tau=float(taus.mean()),
        mean_rate=float(rates.mean()) / math.log(2.0),
    )


def run_sweep(config: ExperimentConfig) -> list[MetricRow]:
    """All (policy, SNR) points of the experiment, in configuration order."""
    config.validate()
    cb_cache: dict[str, HierCodebook] = {}
    rows = []
    for policy_idx, spec in enumerate(config.policies):
        mode = spec.codebook_mode
        if mode not in cb_cache:
            cb_cache[mode] = _build_codebook(config, mode)
        for snr_idx in range(len(config.snr_db)):
            rows.append(_run_point(config, spec, policy_idx, snr_idx,
                                   cb_cache[mode]))
    return rows


def monotone_trend_flags(rows: list[MetricRow]) -> list[tuple[str, float, float]]:
    """Non-monotone (policy, snr_lo, snr_hi) pairs whose CIs do not overlap.

    Error probability should fall with SNR; CI-overlapping wiggles are
    expected at finite trial counts and are not flagged.
    """
    flags = []
    by_policy: dict[str, list[MetricRow]] = {}
    for row in rows:
        by_policy.setdefault(row.policy, []).append(row)
    for policy, prows in by_policy.items():
        prows = sorted(prows, key=lambda r: r.snr_db)
        for a, b in zip(prows, prows[1:]):
            if b.err > a.err and b.err_ci_lo > a.err_ci_hi:
                flags.append((policy, a.snr_db, b.snr_db))
    return flags


@dataclass
class EjsAuditReport:
    total_steps: int
    max_identity_residual: float
    ejs_ge_js_violations: int
    lemma3: bounds_mod.AuditResult


def ejs_audit_run(grid: AngleGrid, snr_db: float, stopping: StoppingRule,
                  master_seed: int = 0, min_steps: int = 10_000,
                  tau_max: int = 10_000, pi_tilde_n: float = 28,
                  pi_tilde_eps: float = 0.01) -> EjsAuditReport:
    """Audit ideal-beam 1-bit sessions against the exact drift identity.

    Per recorded step, enumerates both observation outcomes and checks
    E[U(t+1) | pi] - U(t) = EJS(pi) exactly, that EJS >= JS, and the two
    divergence floor inequalities of the recorded-session audit.
    """
    cb = build_ideal(grid)
    power = 10.0 ** (snr_db / 10.0)
    profile = bounds_mod.level_profile(cb, power, 1.0)
    traces = []
    total = 0
    session = 0
    while total < min_steps:
        rng = derive_stream(master_seed, 77, session)
        idx = int(rng.integers(grid.resolution))
        channel = ChannelState(alpha=1.0, aoa_index=idx, power=power, noise_var=1.0)
        trace = run_hiepm_session(channel, cb, stopping, ResolutionRule("fr"),
                                  "onebit", rng, tau_max=tau_max, snapshots=True)
        traces.append(trace)
        total += trace.tau
        session += 1

    max_resid = 0.0
    ejs_js_bad = 0
    M = grid.resolution
    for trace in traces:
        for t, (level, k) in enumerate(trace.queries):
            pi = trace.posteriors[t]
            p = float(profile.p[level - 1])
            lo = (k - 1) * (M >> level)
            support = (lo, lo + (M >> level))
            cond = onebit_conditionals(M, support, p)
            ejs_val = ejs(pi, cond)
            js_val = js(pi, cond)
            if ejs_val + 1e-12 < js_val:
                ejs_js_bad += 1
            pz1 = float(pi @ cond[:, 1])
            u_now = avg_loglik(pi)
            exp_next = 0.0
            for z, pz in ((1, pz1), (0, 1.0 - pz1)):
                if pz <= 0.0:
                    continue
                exp_next += pz * avg_loglik(update_onebit(pi, z, support, p))
            resid = abs(exp_next - u_now - ejs_val)
            max_resid = max(max_resid, resid)
    lemma3 = bounds_mod.lemma3_audit(traces, profile, pi_tilde_n, pi_tilde_eps)
    return EjsAuditReport(total, max_resid, ejs_js_bad, lemma3)
