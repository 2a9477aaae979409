"""Alignment policies: the hiePM controller, bisection, and random scan.

Sessions are driven by per-trial RNG streams; a hiePM session pre-draws its
noise block and hands the hot loop to the active kernel backend (compiled or
pure numpy), unless posterior snapshots are requested, in which case the
readable step-by-step path below runs with the identical draw order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .array_channel import AngleGrid, ChannelState, optimal_threshold
from .codebook import (HierCodebook, RandomScanBook, ScanBeamDesign,
                       build_scan_design, node_id, sample_random_beam,
                       scan_power_gain)
from .posterior import init_uniform, update_onebit

__all__ = [
    "StoppingRule",
    "ResolutionRule",
    "PolicySpec",
    "SessionTrace",
    "HiepmContext",
    "hiepm_select",
    "check_stop",
    "final_beam",
    "onebit_node_profile",
    "run_hiepm_session",
    "bisection_baseline",
    "random_scan_baseline",
    "run_session",
]


@dataclass(frozen=True)
class StoppingRule:
    """fixed-length(n) or variable-length(epsilon) stopping."""

    kind: str
    n: int | None = None
    epsilon: float | None = None

    def __post_init__(self):
        if self.kind not in ("fl", "vl"):
            raise ValueError(f"stopping kind must be 'fl' or 'vl', got {self.kind!r}")
        if self.kind == "fl":
            if self.n is None or self.n < 1:
                raise ValueError("fixed-length stopping needs n >= 1")
        else:
            if self.epsilon is None or not 0.0 < self.epsilon < 1.0:
                raise ValueError("variable-length stopping needs epsilon in (0, 1)")


@dataclass(frozen=True)
class ResolutionRule:
    """fixed-resolution (leaf level) or variable-resolution (confidence 1-epsilon)."""

    kind: str
    epsilon: float | None = None

    def __post_init__(self):
        if self.kind not in ("fr", "vr"):
            raise ValueError(f"resolution kind must be 'fr' or 'vr', got {self.kind!r}")
        if self.kind == "vr" and (self.epsilon is None or not 0.0 < self.epsilon < 1.0):
            raise ValueError("variable resolution needs epsilon in (0, 1)")


@dataclass(frozen=True)
class PolicySpec:
    """One policy configuration of a sweep."""

    kind: str                                # hiepm | bisection | random_scan
    stopping: StoppingRule | None = None
    resolution: ResolutionRule = ResolutionRule("fr")
    measurement: str = "full"                # full | onebit
    codebook_mode: str = "practical"         # ideal | practical
    scan_q: int = 16
    scan_tau: int = 28
    reps_per_level: int = 2
    calibrate_tau: float | None = None       # VL only: tune epsilon to E[tau]
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("hiepm", "bisection", "random_scan"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.measurement not in ("full", "onebit"):
            raise ValueError(f"unknown measurement model {self.measurement!r}")
        if self.codebook_mode not in ("ideal", "practical"):
            raise ValueError(f"unknown codebook mode {self.codebook_mode!r}")
        if self.kind == "hiepm" and self.stopping is None:
            raise ValueError("hiepm needs a stopping rule")
        if self.calibrate_tau is not None and (
                self.stopping is None or self.stopping.kind != "vl"):
            raise ValueError("calibrate_tau applies to variable-length stopping only")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind == "hiepm":
            return (f"hiepm({self.stopping.kind.upper()},"
                    f"{self.resolution.kind.upper()})")
        if self.kind == "random_scan":
            return f"random_scan(q={self.scan_q})"
        return "bisection"


@dataclass
class SessionTrace:
    """Full record of one alignment run."""

    queries: list
    bits: np.ndarray | None
    observations: list | None
    tau: int
    final_level: int
    final_k: int
    phi_hat: float
    posterior: np.ndarray | None
    posteriors: list | None = None
    capped: bool = False
    maxpi: np.ndarray | None = None

    def final_support(self, cb: HierCodebook) -> tuple[int, int]:
        return cb.support(self.final_level, self.final_k)


def _descend_path(pi: np.ndarray, levels: int):
    """Greedy larger-child walk; returns (exit node, exit mass, parent node, parent mass)."""
    cs = np.cumsum(pi)
    M = pi.shape[0]
    cur_l, cur_k, cur_mass, par_mass = 0, 1, 1.0, 1.0
    while cur_l < levels and cur_mass > 0.5:
        m = M >> (cur_l + 1)
        left_k = 2 * cur_k - 1
        a, b = (left_k - 1) * m, left_k * m
        m_left = cs[b - 1] - (cs[a - 1] if a else 0.0)
        m_right = cs[b + m - 1] - cs[b - 1]
        par_mass = cur_mass
        if m_left >= m_right:
            cur_k, cur_mass = left_k, m_left
        else:
            cur_k, cur_mass = left_k + 1, m_right
        cur_l += 1
    return (cur_l, cur_k), cur_mass, (cur_l - 1, (cur_k + 1) // 2), par_mass


def hiepm_select(pi: np.ndarray, cb: HierCodebook) -> tuple[int, int]:
    """Posterior-matching codeword choice (level, k).

    Walks toward the larger child while the current cell's mass exceeds 1/2,
    then picks whichever of the exit cell and its parent has mass closer to
    1/2 (ties to the deeper cell; a root exit returns the level-1 argmax
    child, the root itself not being a codeword).
    """
    (l, k), m_exit, (pl, pk), m_par = _descend_path(pi, cb.levels)
    if l == 1 or abs(m_exit - 0.5) <= abs(m_par - 0.5):
        return l, k
    return pl, pk


def check_stop(t: int, pi: np.ndarray, rule: StoppingRule) -> bool:
    """FL: stop once t reaches n; VL: stop once max_i pi_i exceeds 1 - epsilon."""
    if rule.kind == "fl":
        return t >= rule.n
    return float(pi.max()) > 1.0 - rule.epsilon


def final_beam(pi: np.ndarray, cb: HierCodebook, rule: ResolutionRule) -> tuple[int, int]:
    """Final beam choice: leaf argmax (FR) or deepest 1-epsilon-confident cell (VR).

    VR falls back to the level-1 argmax when no cell at any level reaches
    mass 1 - epsilon.
    """
    M = pi.shape[0]
    if rule.kind == "fr":
        return cb.levels, int(np.argmax(pi)) + 1
    target = 1.0 - rule.epsilon
    for level in range(cb.levels, 0, -1):
        cells = pi.reshape(1 << level, M >> level).sum(axis=1)
        k = int(np.argmax(cells)) + 1
        if cells[k - 1] >= target:
            return level, k
    cells = pi.reshape(2, M >> 1).sum(axis=1)
    return 1, int(np.argmax(cells)) + 1


def onebit_node_profile(cb: HierCodebook, power: float, noise_var: float,
                        alpha_mag: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Minimax 1-bit thresholds and crossovers for every codebook node.

    Ideal codebooks share one threshold per level; practical ones get
    per-codeword values from their stored worst-case gains.
    """
    v = np.empty(cb.num_nodes)
    p = np.empty(cb.num_nodes)
    if cb.mode == "ideal":
        for level in range(1, cb.levels + 1):
            in_gain, out_gain = cb.level_gains(level)
            res = optimal_threshold(in_gain, out_gain, power, noise_var, alpha_mag)
            ids = [node_id(level, k) for k in range(1, (1 << level) + 1)]
            v[ids] = res.v
            p[ids] = res.p
    else:
        for nid in range(cb.num_nodes):
            res = optimal_threshold(cb.in_gain[nid], cb.out_gain[nid],
                                    power, noise_var, alpha_mag)
            v[nid] = res.v
            p[nid] = res.p
    return v, p


@dataclass
class HiepmContext:
    """Per-(codebook, channel-parameters) precomputation shared across trials."""

    cb: HierCodebook
    power: float
    noise_var: float
    measurement: str
    alpha_mag: float = 1.0
    v_node: np.ndarray | None = field(default=None, repr=False)
    p_node: np.ndarray | None = field(default=None, repr=False)
    resp_re: np.ndarray | None = field(default=None, repr=False)
    resp_im: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.measurement == "onebit":
            if self.v_node is None:
                self.v_node, self.p_node = onebit_node_profile(
                    self.cb, self.power, self.noise_var, self.alpha_mag)
        else:
            scaled = math.sqrt(self.power) * self.cb.response
            self.resp_re = np.ascontiguousarray(scaled.real)
            self.resp_im = np.ascontiguousarray(scaled.imag)

    @property
    def noise_scale(self) -> float:
        return math.sqrt(self.noise_var / 2.0)


def _phi_hat(cb: HierCodebook, level: int, k: int) -> float:
    lo, hi = cb.support(level, k)
    grid = cb.grid
    return grid.theta_lo + 0.5 * (lo + hi) * grid.delta * grid.width


def _trace_from_kernel(cb, nodes, bits, tau, pi, resolution, capped):
    queries = []
    for n in nodes[:tau]:
        level = (int(n) + 2).bit_length() - 1
        queries.append((level, int(n) - ((1 << level) - 2) + 1))
    level, k = final_beam(pi, cb, resolution)
    return SessionTrace(
        queries=queries,
        bits=np.asarray(bits[:tau], dtype=np.int8) if bits is not None else None,
        observations=None,
        tau=tau,
        final_level=level,
        final_k=k,
        phi_hat=_phi_hat(cb, level, k),
        posterior=pi,
        capped=capped,
    )


def run_hiepm_session(channel: ChannelState, cb: HierCodebook, stopping: StoppingRule,
                      resolution: ResolutionRule, measurement: str,
                      rng: np.random.Generator, *, alpha_hat: complex | None = None,
                      tau_max: int = 10_000, ctx: HiepmContext | None = None,
                      snapshots: bool = False, record_maxpi: bool = False,
                      horizon: bool = False) -> SessionTrace:
    """One hiePM alignment session (Algorithm loop: select, measure, update, stop).

    ``alpha_hat`` defaults to the true fading coefficient (known-channel
    posterior updates).  With ``record_maxpi`` the per-step max-posterior
    trajectory is attached; with ``horizon`` the stopping rule is ignored and
    the session runs to tau_max (or until the posterior saturates at 1.0,
    which is absorbing) -- the epsilon calibration replays these trajectories
    instead of re-simulating.  With ``snapshots`` every intermediate
    posterior is kept and the pure-python step path is used.
    """
    if ctx is None:
        ctx = HiepmContext(cb, channel.power, channel.noise_var, measurement,
                           abs(channel.alpha))
    if alpha_hat is None:
        alpha_hat = channel.alpha
    M = cb.grid.resolution
    if horizon:
        max_steps, vl_eps, fixed_n = tau_max, 0.0, 0
    else:
        max_steps = stopping.n if stopping.kind == "fl" else tau_max
        vl_eps = 0.0 if stopping.kind == "fl" else stopping.epsilon
        fixed_n = stopping.n if stopping.kind == "fl" else 0

    normals = rng.standard_normal(2 * max_steps)
    if snapshots:
        return _run_hiepm_python(channel, cb, ctx, alpha_hat, normals,
                                 fixed_n, vl_eps, max_steps, resolution)

    idx = channel.aoa_index
    out_nodes = np.empty(max_steps, dtype=np.int64)
    out_maxpi = np.empty(max_steps)
    scratch = np.empty(M)
    pi = init_uniform(M)
    kern = _kernels.get_backend()
    if measurement == "onebit":
        nu_true = channel.power ** 0.5 * abs(channel.alpha) * np.abs(cb.response[:, idx])
        nu_true = np.ascontiguousarray(nu_true)
        out_bits = np.empty(max_steps, dtype=np.int8)
        tau = kern.run_onebit_session(
            pi, cb.levels, ctx.p_node, ctx.v_node, nu_true, ctx.noise_scale,
            normals, fixed_n, vl_eps, max_steps, out_nodes, out_bits, out_maxpi,
            scratch)
        bits = out_bits
    else:
        true_col = channel.alpha * (ctx.resp_re[:, idx] + 1j * ctx.resp_im[:, idx])
        loglik = np.full(M, -math.log(M))
        tau = kern.run_full_session(
            loglik, pi, cb.levels, ctx.resp_re, ctx.resp_im,
            alpha_hat.real, alpha_hat.imag,
            np.ascontiguousarray(true_col.real), np.ascontiguousarray(true_col.imag),
            channel.noise_var, ctx.noise_scale, normals,
            fixed_n, vl_eps, max_steps, out_nodes, out_maxpi, scratch)
        bits = None
    capped = not horizon and stopping.kind == "vl" and tau >= tau_max \
        and float(pi.max()) <= 1.0 - stopping.epsilon
    trace = _trace_from_kernel(cb, out_nodes, bits, tau, pi, resolution, capped)
    if record_maxpi:
        trace.maxpi = out_maxpi[:tau].copy()
    return trace


def _run_hiepm_python(channel, cb, ctx, alpha_hat, normals, fixed_n, vl_eps,
                      max_steps, resolution):
    """Step-by-step session with posterior snapshots (audit path)."""
    M = cb.grid.resolution
    idx = channel.aoa_index
    pi = init_uniform(M)
    posteriors = [pi.copy()]
    queries, bits, obs = [], [], []
    sqrt_p = math.sqrt(channel.power)
    t = 0
    while t < max_steps:
        level, k = hiepm_select(pi, cb)
        nid = node_id(level, k)
        mean_true = channel.alpha * sqrt_p * cb.response[nid, idx]
        y = complex(mean_true) + ctx.noise_scale * (
            normals[2 * t] + 1j * normals[2 * t + 1])
        if ctx.measurement == "onebit":
            z = int(abs(y) ** 2 > ctx.v_node[nid])
            pi = update_onebit(pi, z, cb.support(level, k), ctx.p_node[nid])
            bits.append(z)
        else:
            mean = alpha_hat * sqrt_p * cb.response[nid]
            with np.errstate(divide="ignore"):
                ll = np.log(pi) - np.abs(y - mean) ** 2 / channel.noise_var
            ll -= ll.max()
            pi = np.exp(ll)
            pi /= pi.sum()
        queries.append((level, k))
        obs.append(y)
        posteriors.append(pi.copy())
        t += 1
        if fixed_n > 0:
            if t >= fixed_n:
                break
        elif vl_eps > 0.0 and float(pi.max()) > 1.0 - vl_eps:
            break
    capped = fixed_n == 0 and vl_eps > 0.0 and t >= max_steps \
        and float(pi.max()) <= 1.0 - vl_eps
    level, k = final_beam(pi, cb, resolution)
    return SessionTrace(
        queries=queries,
        bits=np.asarray(bits, dtype=np.int8) if bits else None,
        observations=obs,
        tau=t,
        final_level=level,
        final_k=k,
        phi_hat=_phi_hat(cb, level, k),
        posterior=pi,
        posteriors=posteriors,
        capped=capped,
    )


def bisection_baseline(channel: ChannelState, cb: HierCodebook,
                       reps_per_level: int, rng: np.random.Generator) -> SessionTrace:
    """Noisy bisection: repeat-probe both children, descend into the stronger.

    Decision statistic is the summed unquantized power |y|^2 over the
    repetitions; tau = 2 * S * reps_per_level exactly.
    """
    if reps_per_level < 1:
        raise ValueError("reps_per_level must be >= 1")
    sqrt_p = math.sqrt(channel.power)
    scale = math.sqrt(channel.noise_var / 2.0)
    idx = channel.aoa_index
    queries = []
    k = 1
    for level in range(1, cb.levels + 1):
        stats = []
        for cand in (2 * k - 1, 2 * k):
            nid = node_id(level, cand)
            mean = channel.alpha * sqrt_p * cb.response[nid, idx]
            g = rng.standard_normal(2 * reps_per_level)
            y = mean + scale * (g[0::2] + 1j * g[1::2])
            stats.append(float(np.sum(np.abs(y) ** 2)))
            queries.extend([(level, cand)] * reps_per_level)
        k = 2 * k - 1 if stats[0] >= stats[1] else 2 * k
    return SessionTrace(
        queries=queries,
        bits=None,
        observations=None,
        tau=2 * cb.levels * reps_per_level,
        final_level=cb.levels,
        final_k=k,
        phi_hat=_phi_hat(cb, cb.levels, k),
        posterior=None,
    )


def random_scan_baseline(channel: ChannelState, book: RandomScanBook,
                         cb: HierCodebook, tau: int, measurement: str,
                         rng: np.random.Generator, *,
                         alpha_hat: complex | None = None,
                         design: ScanBeamDesign | None = None) -> SessionTrace:
    """Non-adaptive scan: tau multi-lobe beams drawn uniformly.

    Beams are ideal (flat, zero-leakage) without a design and practical LS
    patterns with one.  The posterior is updated per measurement (full
    Gaussian or 1-bit) and the final beam is the leaf-level argmax (fixed
    resolution).  Practical-mode 1-bit thresholds are solved per sampled
    beam from its realized gain extremes, which is the slow path.
    """
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if alpha_hat is None:
        alpha_hat = channel.alpha
    M = book.grid.resolution
    sqrt_p = math.sqrt(channel.power)
    scale = math.sqrt(channel.noise_var / 2.0)
    idx = channel.aoa_index
    shared_thr = None
    if measurement == "onebit" and design is None:
        shared_thr = optimal_threshold(scan_power_gain(book), 0.0, channel.power,
                                       channel.noise_var, abs(channel.alpha))
    ll = np.full(M, -math.log(M))
    queries = []
    bits = []
    for _ in range(tau):
        beam = sample_random_beam(book, rng, design)
        g = rng.standard_normal(2)
        mean_true = channel.alpha * sqrt_p * beam.response[idx]
        y = complex(mean_true) + scale * (g[0] + 1j * g[1])
        if measurement == "onebit":
            thr = shared_thr if shared_thr is not None else optimal_threshold(
                beam.in_gain, beam.out_gain, channel.power, channel.noise_var,
                abs(channel.alpha))
            z = int(abs(y) ** 2 > thr.v)
            like = np.where(beam.grid_mask,
                            1.0 - thr.p if z else thr.p,
                            thr.p if z else 1.0 - thr.p)
            with np.errstate(divide="ignore"):
                ll += np.log(like)
            bits.append(z)
        else:
            mean = alpha_hat * sqrt_p * beam.response
            ll -= np.abs(y - mean) ** 2 / channel.noise_var
            ll -= ll.max()
        queries.append(beam.directions)
    ll -= ll.max()
    pi = np.exp(ll)
    pi /= pi.sum()
    k = int(np.argmax(pi)) + 1
    return SessionTrace(
        queries=queries,
        bits=np.asarray(bits, dtype=np.int8) if bits else None,
        observations=None,
        tau=tau,
        final_level=cb.levels,
        final_k=k,
        phi_hat=_phi_hat(cb, cb.levels, k),
        posterior=pi,
    )


def run_session(spec: PolicySpec, channel: ChannelState, cb: HierCodebook,
                rng: np.random.Generator, *, book: RandomScanBook | None = None,
                alpha_hat: complex | None = None, tau_max: int = 10_000,
                ctx: HiepmContext | None = None,
                scan_design: ScanBeamDesign | None = None) -> SessionTrace:
    """Dispatch one session of the given policy and return its trace."""
    if spec.kind == "hiepm":
        return run_hiepm_session(channel, cb, spec.stopping, spec.resolution,
                                 spec.measurement, rng, alpha_hat=alpha_hat,
                                 tau_max=tau_max, ctx=ctx)
    if spec.kind == "bisection":
        return bisection_baseline(channel, cb, spec.reps_per_level, rng)
    if book is None:
        book = RandomScanBook(cb.grid, cb.grid.resolution, spec.scan_q)
    if scan_design is None and spec.codebook_mode == "practical" \
            and cb.geometry is not None:
        scan_design = build_scan_design(book, cb.geometry)
    return random_scan_baseline(channel, book, cb, spec.scan_tau,
                                spec.measurement, rng, alpha_hat=alpha_hat,
                                design=scan_design)
