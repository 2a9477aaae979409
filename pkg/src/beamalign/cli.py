"""Command-line front end: config parsing, orchestration, CSV/JSON emission.

Subcommands: sweep (full experiment), simulate (single-session traces),
bounds (theory curves), codebook (gain profiles), audit (divergence checks).
Config files are sectioned key = value text; angles are given in degrees
and converted to radians internally.  Exit codes: 0 success, 2 validation
failure, 1 runtime failure.  With --out, stdout stays silent and
diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import asdict

import numpy as np

from .array_channel import AngleGrid, ArrayGeometry, ChannelState
from .codebook import build_ideal, build_practical, node_lk
from .policies import PolicySpec, ResolutionRule, StoppingRule, run_session
from .sim import (ExperimentConfig, MetricRow, derive_stream, ejs_audit_run,
                  run_sweep, trial_error)
from . import bounds as bounds_mod

__all__ = ["main", "entry", "parse_config_file", "emit", "load_results"]

SWEEP_FIELDS = ["policy", "snr_db", "trials", "err", "err_ci_lo", "err_ci_hi",
                "mean_tau", "mean_rate"]


class ConfigError(ValueError):
    """Config-file validation failure; message carries file:line anchors."""


# ---------------------------------------------------------------------------
# config file parsing

def _parse_scalar(raw: str):
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def _read_sections(path: str) -> dict[str, dict[str, tuple[object, int]]]:
    """Sectioned key = value text -> {section: {key: (value, line_no)}}."""
    sections: dict[str, dict[str, tuple[object, int]]] = {}
    current = None
    try:
        lines = open(path, encoding="utf-8").read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if text.startswith("[") and text.endswith("]"):
            current = text[1:-1].strip()
            if not current:
                raise ConfigError(f"{path}:{lineno}: empty section name")
            if current in sections:
                raise ConfigError(f"{path}:{lineno}: duplicate section [{current}]")
            sections[current] = {}
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        if current is None:
            raise ConfigError(f"{path}:{lineno}: key outside any [section]")
        key, raw = (part.strip() for part in text.split("=", 1))
        if key in sections[current]:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        if "," in raw:
            value = [_parse_scalar(v.strip()) for v in raw.split(",") if v.strip()]
        else:
            value = _parse_scalar(raw)
        sections[current][key] = (value, lineno)
    return sections


class _Section:
    """Typed access to one section with unknown-key rejection."""

    def __init__(self, path: str, name: str, data: dict):
        self.path = path
        self.name = name
        self.data = dict(data)

    def _fail(self, key, lineno, message):
        where = f"{self.path}:{lineno}" if lineno else self.path
        raise ConfigError(f"{where}: [{self.name}] {key}: {message}")

    def take(self, key, kind, default=..., choices=None, lo=None, hi=None):
        if key not in self.data:
            if default is ...:
                raise ConfigError(
                    f"{self.path}: [{self.name}] missing required key {key!r}")
            return default
        value, lineno = self.data.pop(key)
        if kind is float and isinstance(value, (int, bool)):
            value = float(value)
        if kind is list:
            if not isinstance(value, list):
                value = [value]
            value = [float(v) for v in value]
        elif not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
            self._fail(key, lineno, f"expected {kind.__name__}, got {value!r}")
        if choices and value not in choices:
            self._fail(key, lineno, f"must be one of {sorted(choices)}, got {value!r}")
        if lo is not None and value < lo:
            self._fail(key, lineno, f"must be >= {lo}, got {value}")
        if hi is not None and value > hi:
            self._fail(key, lineno, f"must be <= {hi}, got {value}")
        return value

    def finish(self):
        if self.data:
            key = next(iter(self.data))
            _, lineno = self.data[key]
            raise ConfigError(
                f"{self.path}:{lineno}: unknown key {key!r} in [{self.name}]")


def _parse_policy(path: str, name: str, data: dict) -> PolicySpec:
    sec = _Section(path, name, data)
    kind = sec.take("kind", str, choices={"hiepm", "bisection", "random_scan"})
    measurement = sec.take("measurement", str, default="full",
                           choices={"full", "onebit"})
    codebook = sec.take("codebook", str, default="practical",
                        choices={"ideal", "practical"})
    resolution_kind = sec.take("resolution", str, default="fr",
                               choices={"fr", "vr"})
    res_eps = sec.take("resolution_epsilon", float, default=0.1, lo=1e-12, hi=1.0)
    resolution = ResolutionRule(resolution_kind,
                                res_eps if resolution_kind == "vr" else None)
    label = name.split(":", 1)[1] if ":" in name else ""
    try:
        if kind == "hiepm":
            stop_kind = sec.take("stopping", str, choices={"fl", "vl"})
            if stop_kind == "fl":
                stopping = StoppingRule("fl", n=sec.take("n", int, lo=1))
            else:
                stopping = StoppingRule("vl", epsilon=sec.take(
                    "epsilon", float, default=0.01, lo=1e-12, hi=1.0))
            calibrate = sec.take("calibrate_tau", float, default=None, lo=1.0)
            spec = PolicySpec(kind, stopping=stopping, resolution=resolution,
                              measurement=measurement, codebook_mode=codebook,
                              calibrate_tau=calibrate, name=label)
        elif kind == "bisection":
            spec = PolicySpec(kind, resolution=ResolutionRule("fr"),
                              codebook_mode=codebook,
                              reps_per_level=sec.take("reps_per_level", int,
                                                      default=2, lo=1),
                              name=label)
        else:
            spec = PolicySpec(kind, resolution=ResolutionRule("fr"),
                              measurement=measurement, codebook_mode=codebook,
                              scan_q=sec.take("scan_q", int, lo=1),
                              scan_tau=sec.take("scan_tau", int, default=28, lo=1),
                              name=label)
    except ValueError as exc:
        raise ConfigError(f"{path}: [{name}]: {exc}") from exc
    sec.finish()
    return spec


def parse_config_file(path: str) -> ExperimentConfig:
    """Parse and validate a config file into an ExperimentConfig."""
    sections = _read_sections(path)

    known = {"array", "grid", "channel", "sim", "bounds", "codebook", "audit"}
    for name in sections:
        if name not in known and not name.startswith("policy:"):
            raise ConfigError(f"{path}: unknown section [{name}]")

    sec = _Section(path, "array", sections.get("array", {}))
    geometry = ArrayGeometry(sec.take("antennas", int, default=64, lo=1),
                             sec.take("spacing", float, default=0.5, lo=1e-6))
    sec.finish()

    sec = _Section(path, "grid", sections.get("grid", {}))
    lo_deg = sec.take("theta_lo_deg", float, default=-60.0)
    hi_deg = sec.take("theta_hi_deg", float, default=60.0)
    resolution = sec.take("resolution", int, default=128, lo=2)
    if resolution & (resolution - 1):
        raise ConfigError(f"{path}: [grid] resolution {resolution} "
                          "is not a power of two")
    if not lo_deg < hi_deg:
        raise ConfigError(f"{path}: [grid] needs theta_lo_deg < theta_hi_deg")
    grid = AngleGrid(math.radians(lo_deg), math.radians(hi_deg), resolution)
    sec.finish()

    sec = _Section(path, "channel", sections.get("channel", {}))
    snr_db = sec.take("snr_db", list)
    fading = sec.take("fading", str, default="known",
                      choices={"known", "mismatched"})
    sigma_alpha_sq = sec.take("sigma_alpha_sq", float, default=0.05, lo=0.0)
    sec.finish()

    sec = _Section(path, "sim", sections.get("sim", {}))
    trials = sec.take("trials", int, default=2000, lo=1)
    seed = sec.take("seed", int, default=0, lo=0)
    threads = sec.take("threads", int, default=1, lo=1)
    tau_max = sec.take("tau_max", int, default=10_000, lo=1)
    frame_t = sec.take("frame_t", float, default=2800.0, lo=1.0)
    cal_trials = sec.take("calibration_trials", int, default=200, lo=10)
    crn = sec.take("common_random_numbers", bool, default=False)
    fixed_aoa = sec.take("fixed_aoa", int, default=None, lo=0)
    oversample = sec.take("oversample", int, default=4, lo=1)
    sec.finish()

    policies = [_parse_policy(path, name, data)
                for name, data in sections.items() if name.startswith("policy:")]
    if not policies:
        raise ConfigError(f"{path}: no [policy:NAME] sections found")

    config = ExperimentConfig(
        geometry=geometry, grid=grid, policies=policies, snr_db=list(snr_db),
        trials=trials, master_seed=seed, fading=fading,
        sigma_alpha_sq=sigma_alpha_sq, frame_t=frame_t, tau_max=tau_max,
        threads=threads, calibration_trials=cal_trials,
        common_random_numbers=crn, fixed_aoa=fixed_aoa, oversample=oversample)
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config


def _aux_section(path, sections, name, keys):
    """Typed values of an auxiliary section ([bounds], [codebook], [audit])."""
    sec = _Section(path, name, sections.get(name, {}))
    out = {}
    for key, (kind, default, extra) in keys.items():
        out[key] = sec.take(key, kind, default=default, **extra)
    sec.finish()
    return out


# ---------------------------------------------------------------------------
# emission

def config_hash(config: ExperimentConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _rows_to_csv(rows: list[MetricRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_FIELDS)
    for row in rows:
        d = asdict(row)
        writer.writerow([d[f] for f in SWEEP_FIELDS])
    return buf.getvalue()


def emit(rows: list[MetricRow], fmt: str, path: str | None,
         config: ExperimentConfig | None = None) -> str:
    """Serialize sweep rows; write to path when given, else return the text."""
    if fmt == "csv":
        text = _rows_to_csv(rows)
    else:
        payload = {"rows": [asdict(r) for r in rows]}
        if config is not None:
            payload["config"] = config.to_dict()
            payload["config_hash"] = config_hash(config)
            payload["seed"] = config.master_seed
        text = json.dumps(payload, indent=2) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def load_results(path: str) -> tuple[ExperimentConfig | None, list[MetricRow]]:
    """Re-ingest an emitted JSON results file."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    rows = [MetricRow(**r) for r in payload["rows"]]
    config = ExperimentConfig.from_dict(payload["config"]) \
        if "config" in payload else None
    return config, rows


def _write_text(text: str, path: str | None):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands

def _cmd_sweep(args, config, sections):
    rows = run_sweep(config)
    text = emit(rows, args.format, args.out, config)
    if not args.out:
        sys.stdout.write(text)
    return 0


def _cmd_simulate(args, config, sections):
    """One session per SNR point for the first policy; trace summaries as JSON."""
    spec = config.policies[0]
    mode = spec.codebook_mode
    cb = build_ideal(config.grid) if mode == "ideal" else \
        build_practical(config.grid, config.geometry, config.oversample)
    out = []
    for snr_idx, snr in enumerate(config.snr_db):
        power = 10.0 ** (snr / 10.0)
        rng = derive_stream(config.master_seed, 1, snr_idx, 0)
        if config.fixed_aoa is None:
            idx = int(rng.integers(config.grid.resolution))
        else:
            idx = config.fixed_aoa
        channel = ChannelState(alpha=config.alpha, aoa_index=idx,
                               power=power, noise_var=1.0)
        trace = run_session(spec, channel, cb, rng, tau_max=config.tau_max)
        out.append({
            "policy": spec.label,
            "snr_db": snr,
            "true_aoa_index": idx,
            "tau": trace.tau,
            "queries": [list(q) if isinstance(q, tuple) else list(map(int, q))
                        for q in trace.queries],
            "final_beam": [trace.final_level, trace.final_k],
            "phi_hat_deg": math.degrees(trace.phi_hat),
            "error": trial_error(trace, channel, cb),
        })
    _write_text(json.dumps({"sessions": out}, indent=2) + "\n", args.out)
    return 0


def _cmd_bounds(args, config, sections):
    opts = _aux_section(args.config, sections, "bounds", {
        "n": (float, 28.0, {"lo": 1.0}),
        "epsilon": (float, 0.01, {"lo": 1e-12, "hi": 1.0}),
    })
    cb = build_ideal(config.grid)
    delta = 1.0 / config.grid.resolution
    table = bounds_mod.bounds_table(cb, config.snr_db, opts["n"], delta,
                                    opts["epsilon"], abs(config.alpha))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    S = config.grid.levels
    writer.writerow(["snr_db"] + [f"p{l}" for l in range(1, S + 1)]
                    + ["rate_nats", "exponent_nats", "tau_bound", "err_bound",
                       "random_coding_bound"])
    for row in table:
        writer.writerow([row["snr_db"], *row["p_levels"], row["rate"],
                         row["exponent"], row["tau_bound"], row["err_bound"],
                         row["random_coding_bound"]])
    _write_text(buf.getvalue(), args.out)
    return 0


def _cmd_codebook(args, config, sections):
    opts = _aux_section(args.config, sections, "codebook", {
        "mode": (str, "practical", {"choices": {"ideal", "practical"}}),
    })
    cb = build_ideal(config.grid) if opts["mode"] == "ideal" else \
        build_practical(config.grid, config.geometry, config.oversample)
    angles_deg = np.degrees(config.grid.angles())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["level", "k", "theta_deg", "gain"])
    for nid in range(cb.num_nodes):
        level, k = node_lk(nid)
        for theta, gain in zip(angles_deg, np.abs(cb.response[nid])):
            writer.writerow([level, k, theta, gain])
    _write_text(buf.getvalue(), args.out)
    return 0


def _cmd_audit(args, config, sections):
    opts = _aux_section(args.config, sections, "audit", {
        "snr_db": (float, 0.0, {}),
        "stopping": (str, "vl", {"choices": {"fl", "vl"}}),
        "epsilon": (float, 0.01, {"lo": 1e-12, "hi": 1.0}),
        "n": (int, 28, {"lo": 1}),
        "min_steps": (int, 10_000, {"lo": 1}),
    })
    stopping = StoppingRule("fl", n=opts["n"]) if opts["stopping"] == "fl" \
        else StoppingRule("vl", epsilon=opts["epsilon"])
    report = ejs_audit_run(config.grid, opts["snr_db"], stopping,
                           master_seed=config.master_seed,
                           min_steps=opts["min_steps"], tau_max=config.tau_max,
                           pi_tilde_n=opts["n"], pi_tilde_eps=opts["epsilon"])
    payload = {
        "total_steps": report.total_steps,
        "max_identity_residual": report.max_identity_residual,
        "ejs_ge_js_violations": report.ejs_ge_js_violations,
        "lemma_violations": report.lemma3.violations,
        "lemma_worst_slack": report.lemma3.worst_slack,
        "pi_tilde": report.lemma3.pi_tilde,
    }
    _write_text(json.dumps(payload, indent=2) + "\n", args.out)
    return 0


_COMMANDS = {
    "sweep": _cmd_sweep,
    "simulate": _cmd_simulate,
    "bounds": _cmd_bounds,
    "codebook": _cmd_codebook,
    "audit": _cmd_audit,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="beamalign",
        description="mmWave initial-access beam alignment simulator")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="config file path")
    parser.add_argument("--out", default=None, help="output file path")
    parser.add_argument("--format", default="csv", choices=["csv", "json"])
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker thread override")
    args = parser.parse_args(argv)

    try:
        sections = _read_sections(args.config)
        config = parse_config_file(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        config.master_seed = args.seed
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return 2
        config.threads = args.threads

    try:
        return _COMMANDS[args.command](args, config, sections)
    except Exception as exc:  # runtime failure contract: exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
