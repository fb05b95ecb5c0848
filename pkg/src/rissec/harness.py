"""Baselines, Monte-Carlo runner and command line interface."""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .himodel import model_channel
from .mm import bcd_mm
from .rate import BeamState, wmsr
from .scenario import (
    AlgoParams,
    CcpParams,
    ChannelSet,
    Geometry,
    PathLossExponents,
    SystemConfig,
    dbm_to_watt,
    generate_channels,
    noise_power_w,
    watt_to_dbm,
)
from .socp import bcd_socp
from .trace import RunTrace, TraceRow

ALGORITHMS = ("bcd-mm", "bcd-socp", "non-robust", "bcd-mm-rand", "bcd-mm-no-ris", "bcd-mm-2bit")

CSV_HEADER = (
    "seed,trial,algorithm,sweep_key,sweep_value,N,M,K,p_dbm,kappa_t,kappa_r,"
    "iterations,final_wmsr_nats,wall_ms"
)
TRACE_HEADER = "iteration,bound_objective_nats,true_wmsr_nats,zeta,wall_ms"

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class ConfigError(ValueError):
    """Bad flag, config file or sweep specification."""


# ---------------------------------------------------------------- sweeps

def _as_int(v: float, name: str) -> int:
    if float(v) != int(v):
        raise ConfigError(f"{name} must be an integer, got {v}")
    return int(v)


def apply_sweep(config: SystemConfig, key: Optional[str], value: Optional[float]) -> SystemConfig:
    """Config with one named parameter set; ``key=None`` is the identity."""
    if key is None:
        return config
    try:
        if key == "p_dbm":
            return config.with_(p_max=dbm_to_watt(value))
        if key in ("n_tx", "m_ris", "k_users"):
            return config.with_(**{key: _as_int(value, key)})
        if key == "kappa":
            return config.with_(kappa_t=float(value), kappa_r=float(value))
        if key in ("kappa_t", "kappa_r", "rician_k"):
            return config.with_(**{key: float(value)})
    except ValueError as exc:
        raise ConfigError(f"invalid value {value} for sweep key {key}: {exc}") from exc
    raise ConfigError(f"unknown sweep key {key!r}; choose from {', '.join(SWEEP_KEYS)}")


SWEEP_KEYS = ("p_dbm", "n_tx", "m_ris", "k_users", "kappa", "kappa_t", "kappa_r", "rician_k")


@dataclass(frozen=True)
class ExperimentSpec:
    algorithm: str
    sweep_key: Optional[str] = None
    sweep_values: Tuple = (None,)
    trials: int = 1
    seed_base: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not 0 <= self.seed_base < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        if self.sweep_key is None:
            object.__setattr__(self, "sweep_values", (None,))
        else:
            if not self.sweep_values:
                raise ConfigError("sweep needs at least one value")
            vals = tuple(float(v) for v in self.sweep_values)
            for v in vals:
                apply_sweep(SystemConfig(), self.sweep_key, v)
            object.__setattr__(self, "sweep_values", vals)


# ------------------------------------------------------------- baselines

def _init_rng(seed: int) -> np.random.Generator:
    # Separate Philox stream from the channel draw of the same seed.
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)).jumped())


def initialize_state(config: SystemConfig, channels: ChannelSet, seed: int) -> BeamState:
    """Random phases on the torus; matched-filter precoder with equal power split."""
    rng = _init_rng(seed)
    phi = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, channels.m_ris))
    cols = []
    for k in range(channels.k_users):
        h = model_channel(phi, channels, k, config.phase_noise).stacked[:, 0]
        nh = np.linalg.norm(h)
        cols.append(h / nh if nh > 0 else np.full(channels.n_tx, 1.0 / np.sqrt(channels.n_tx), complex))
    w = np.stack(cols, axis=1) * np.sqrt(config.p_max / channels.k_users)
    return BeamState(w, phi)


def quantize_phases(phi: np.ndarray, bits: int) -> np.ndarray:
    """Snap each phase to the nearest point of a 2^bits grid on [0, 2 pi).

    Ties go to the smaller grid angle.
    """
    if isinstance(bits, bool) or bits not in (1, 2, 3, 4):
        raise ValueError(f"bits must be 1, 2, 3 or 4, got {bits}")
    levels = 2**bits
    step = 2.0 * np.pi / levels
    theta = np.mod(np.angle(np.asarray(phi, complex)), 2.0 * np.pi)
    pos = theta / step
    idx = np.floor(pos)
    idx = np.where(pos - idx > 0.5, idx + 1, idx).astype(int) % levels
    out = np.exp(1j * idx * step)
    # Exact values on the axes avoid 1e-16 residue in the real or imaginary part.
    return np.round(out.real, 15) + 1j * np.round(out.imag, 15)


def _merge(first: RunTrace, second: RunTrace) -> RunTrace:
    off_it, off_ms = first.iterations, first.total_ms
    out = RunTrace(rows=list(first.rows), flags=first.flags + second.flags, blocks=first.blocks + second.blocks)
    for r in second.rows:
        out.rows.append(TraceRow(r.iteration + off_it, r.bound_objective, r.true_wmsr, r.zeta, r.wall_ms + off_ms))
    out.iterations = len(out.rows)
    out.status = first.status
    out.total_ms = off_ms + second.total_ms
    return out


def _refit_precoder(config: SystemConfig, channels: ChannelSet, state: BeamState) -> Tuple[BeamState, RunTrace]:
    ap = config.algo
    algo = replace(ap, zeta=ap.zeta_max, n_max=ap.refit_iterations)
    return bcd_mm(config.with_(algo=algo), channels, state, optimize_phi=False)


def run_baseline(spec: ExperimentSpec, config: SystemConfig, channels: ChannelSet, seed: int):
    """Run one trial of ``spec.algorithm``; the returned state lives in ``config``'s model."""
    alg = spec.algorithm
    if alg == "bcd-mm-no-ris":
        config, channels = config.with_(m_ris=0), channels.without_ris()
    if alg == "non-robust":
        design = config.with_(kappa_t=0.0, kappa_r=0.0, phase_noise=False)
        return bcd_mm(design, channels, initialize_state(design, channels, seed))

    init = initialize_state(config, channels, seed)
    if alg == "bcd-socp":
        return bcd_socp(config, channels, init)
    if alg == "bcd-mm-rand":
        return bcd_mm(config, channels, init, optimize_phi=False)
    state, trace = bcd_mm(config, channels, init)
    if alg != "bcd-mm-2bit":
        return state, trace
    quant = state.with_phi(quantize_phases(state.phi, 2))
    if not config.algo.refit_2bit or channels.m_ris == 0:
        return quant, trace
    refit, rtrace = _refit_precoder(config, channels, quant)
    trace = _merge(trace, rtrace)
    # The refit ascends a smoothed surrogate; keep the quantized point if it is better.
    if wmsr(quant, channels, config) > wmsr(refit, channels, config):
        trace.flag("2-bit refit did not improve; kept quantized precoder")
        return quant, trace
    return refit, trace


# ------------------------------------------------------------ experiments

@dataclass
class TrialResult:
    seed: int
    trial: int
    sweep_index: int
    sweep_value: Optional[float]
    config: SystemConfig
    iterations: int
    wmsr: float
    wall_ms: float
    trace: Optional[RunTrace] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class SweepSummary:
    sweep_value: Optional[float]
    mean: float
    stderr: float
    n_ok: int
    n_failed: int


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    trials: List[TrialResult] = field(default_factory=list)

    def summary(self) -> List[SweepSummary]:
        out = []
        for i, v in enumerate(self.spec.sweep_values):
            vals = np.array([t.wmsr for t in self.trials if t.sweep_index == i and t.ok])
            n_fail = sum(1 for t in self.trials if t.sweep_index == i and not t.ok)
            mean = float(vals.mean()) if vals.size else float("nan")
            se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else float("nan")
            out.append(SweepSummary(v, mean, se, int(vals.size), n_fail))
        return out

    def means(self) -> np.ndarray:
        return np.array([s.mean for s in self.summary()])


def _run_trial(args) -> TrialResult:
    spec, config, idx, value, trial, keep_trace = args
    seed = (spec.seed_base + trial) % 2**64
    cfg = apply_sweep(config, spec.sweep_key, value)
    try:
        channels = generate_channels(cfg, seed)
        state, trace = run_baseline(spec, cfg, channels, seed)
        eval_cfg = cfg.with_(m_ris=0) if spec.algorithm == "bcd-mm-no-ris" else cfg
        eval_ch = channels.without_ris() if spec.algorithm == "bcd-mm-no-ris" else channels
        value_w = wmsr(state, eval_ch, eval_cfg)
        if not math.isfinite(value_w):
            raise FloatingPointError("non-finite final WMSR")
        return TrialResult(seed, trial, idx, value, cfg, trace.iterations, value_w, trace.total_ms,
                           trace if keep_trace else None)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return TrialResult(seed, trial, idx, value, cfg, 0, float("nan"), float("nan"), None,
                           f"{type(exc).__name__}: {exc}")


def run_experiment(spec: ExperimentSpec, config: SystemConfig, threads: int = 1,
                   keep_traces: bool = False) -> ExperimentResult:
    """Every (sweep value, trial) pair with fresh channels; trial t uses seed seed_base + t.

    Rows come back ordered by (sweep index, trial) whatever the pool does.
    """
    jobs = [(spec, config, i, v, t, keep_traces)
            for i, v in enumerate(spec.sweep_values) for t in range(spec.trials)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_trial, jobs))
    else:
        results = [_run_trial(j) for j in jobs]
    results.sort(key=lambda r: (r.sweep_index, r.trial))
    return ExperimentResult(spec, results)


# ------------------------------------------------------------------- output

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def results_csv(result: ExperimentResult, timing: bool = True) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for t in result.trials:
        c = t.config
        w.writerow([
            t.seed, t.trial, result.spec.algorithm, result.spec.sweep_key or "", _fmt(t.sweep_value),
            c.n_tx, 0 if result.spec.algorithm == "bcd-mm-no-ris" else c.m_ris, c.k_users,
            _fmt(watt_to_dbm(c.p_max)), _fmt(c.kappa_t), _fmt(c.kappa_r),
            t.iterations, _fmt(t.wmsr), _fmt(t.wall_ms if timing else 0.0),
        ])
    return buf.getvalue()


def trace_csv(trace: RunTrace, timing: bool = True) -> str:
    lines = [TRACE_HEADER]
    for r in trace.rows:
        lines.append(",".join([str(r.iteration), _fmt(r.bound_objective), _fmt(r.true_wmsr), _fmt(r.zeta),
                               _fmt(r.wall_ms if timing else 0.0)]))
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------- config

_SCALARS = {
    "scenario": {
        "n_tx": int, "m_ris": int, "k_users": int, "p_dbm": float, "p_max_w": float,
        "noise_psd_dbm_hz": float, "bandwidth_hz": float, "weights": "floats", "rician_k": float,
        "bs": "point", "ris": "point", "user_center": "point", "user_side": float, "eve": "point",
        "user_positions": "floats",
        "alpha_bu": float, "alpha_be": float, "alpha_br": float, "alpha_ru": float, "alpha_re": float,
    },
    "hi": {"kappa_t": float, "kappa_r": float, "phase_noise": bool},
    "algo": {"zeta": float, "iota": float, "zeta_max": float, "eps": float, "n_max": int,
             "squarem": bool, "refresh_aux": bool, "refit_2bit": bool, "refit_iterations": int},
    "ccp": {"lambda_init": float, "gamma": float, "lambda_max": float, "eps1": float, "eps2": float,
            "t_max": int},
    "sweep": {"key": str, "values": "floats", "trials": int, "seed": int, "algorithm": str},
}

_BOOLS = {"true": True, "yes": True, "on": True, "1": True, "false": False, "no": False, "off": False, "0": False}


def _parse_value(kind, raw: str, where: str):
    raw = raw.strip()
    try:
        if kind is bool:
            return _BOOLS[raw.lower()]
        if kind is int:
            return int(raw, 0)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        vals = tuple(float(p) for p in raw.split(",") if p.strip())
        if kind == "point" and len(vals) != 3:
            raise ValueError("expected x, y, z")
        return vals
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} ({exc})") from exc


@dataclass
class LoadedConfig:
    system: SystemConfig
    sweep: Dict[str, object]


def parse_config_text(text: str, source: str = "<config>") -> LoadedConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    vals: Dict[str, Dict[str, object]] = {s: {} for s in _SCALARS}
    for sec in cp.sections():
        if sec not in _SCALARS:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in _SCALARS[sec]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{sec}]")
            vals[sec][key] = _parse_value(_SCALARS[sec][key], raw, f"{source} [{sec}] {key}")
    return LoadedConfig(_build_system(vals, source), vals["sweep"])


def _build_system(vals, source) -> SystemConfig:
    sc, hi = dict(vals["scenario"]), vals["hi"]
    if "p_dbm" in sc and "p_max_w" in sc:
        raise ConfigError(f"{source}: give p_dbm or p_max_w, not both")
    kw = {}
    for k in ("n_tx", "m_ris", "k_users", "rician_k"):
        if k in sc:
            kw[k] = sc[k]
    if "p_dbm" in sc:
        kw["p_max"] = dbm_to_watt(sc["p_dbm"])
    if "p_max_w" in sc:
        kw["p_max"] = sc["p_max_w"]
    if "weights" in sc:
        kw["weights"] = sc["weights"]
    noise = noise_power_w(sc.get("noise_psd_dbm_hz", -174.0), sc.get("bandwidth_hz", 10e6))
    kw["noise_user"] = kw["noise_eve"] = noise
    geo = {k: sc[k] for k in ("bs", "ris", "user_center", "user_side", "eve", "user_positions") if k in sc}
    kw["geometry"] = Geometry(**geo)
    kw["pathloss"] = PathLossExponents(**{k[6:]: sc[k] for k in sc if k.startswith("alpha_")})
    kw.update(hi)
    try:
        kw["algo"] = AlgoParams(**vals["algo"])
        kw["ccp"] = CcpParams(**vals["ccp"])
        cfg = SystemConfig(**kw)
        if cfg.geometry.user_positions is not None and len(cfg.geometry.user_positions) != 3 * cfg.k_users:
            raise ValueError("user_positions needs 3 coordinates per user")
        return cfg
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path: str) -> LoadedConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    return parse_config_text(text, source=path)


# ---------------------------------------------------------------------- CLI

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rissec", description="Monte-Carlo WMSR experiments for RIS-assisted secure downlinks.")
    p.add_argument("--config", metavar="PATH", help="sectioned key = value config file")
    p.add_argument("--algorithm", choices=ALGORITHMS, help="default: bcd-mm")
    p.add_argument("--trials", type=int, metavar="N", help="Monte-Carlo trials per sweep value")
    p.add_argument("--seed", type=int, metavar="U64", help="seed of trial 0; trial t uses seed + t")
    p.add_argument("--sweep", metavar="KEY=V1,V2,...", help=f"keys: {', '.join(SWEEP_KEYS)}")
    p.add_argument("--out", metavar="PATH", help="result CSV (default: stdout)")
    p.add_argument("--trace-dir", metavar="PATH", help="write one trace CSV per trial here")
    p.add_argument("--threads", type=int, default=1, metavar="N", help="worker processes")
    p.add_argument("--no-timing", action="store_true", help="write 0 for wall_ms so reruns are byte-identical")
    return p


def _parse_sweep(text: str):
    key, sep, vals = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"--sweep expects key=v1,v2,... got {text!r}")
    try:
        values = tuple(float(v) for v in vals.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"--sweep values must be numbers: {exc}") from exc
    return key.strip(), values


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    except ConfigError as exc:
        print(f"rissec: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        loaded = load_config(args.config) if args.config else LoadedConfig(SystemConfig(), {})
        sw = loaded.sweep
        key, values = sw.get("key"), sw.get("values", ())
        if args.sweep:
            key, values = _parse_sweep(args.sweep)
        if key is not None and not values:
            raise ConfigError("sweep key given without values")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        spec = ExperimentSpec(
            algorithm=args.algorithm or sw.get("algorithm", "bcd-mm"),
            sweep_key=key, sweep_values=tuple(values) if key else (None,),
            trials=args.trials if args.trials is not None else sw.get("trials", 1),
            seed_base=args.seed if args.seed is not None else sw.get("seed", 0),
        )
    except ConfigError as exc:
        print(f"rissec: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    timing = not args.no_timing
    try:
        result = run_experiment(spec, loaded.system, threads=args.threads, keep_traces=bool(args.trace_dir))
        text = results_csv(result, timing)
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        if args.trace_dir:
            os.makedirs(args.trace_dir, exist_ok=True)
            for t in result.trials:
                if t.trace is None:
                    continue
                name = f"trace_{spec.algorithm}_s{t.sweep_index}_t{t.trial}.csv"
                with open(os.path.join(args.trace_dir, name), "w", encoding="utf-8", newline="") as fh:
                    fh.write(trace_csv(t.trace, timing))
    except (OSError, RuntimeError) as exc:
        print(f"rissec: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for t in result.trials:
        if not t.ok:
            print(f"rissec: trial {t.trial} (sweep index {t.sweep_index}) failed: {t.error}", file=sys.stderr)
    for s in result.summary():
        label = "" if spec.sweep_key is None else f"{spec.sweep_key}={s.sweep_value:g} "
        print(f"{label}mean={s.mean:.6g} stderr={s.stderr:.3g} ok={s.n_ok} failed={s.n_failed}", file=sys.stderr)
    failed = sum(s.n_failed for s in result.summary())
    return EXIT_RUNTIME if failed == len(result.trials) else EXIT_OK


def main() -> None:
    sys.exit(cli_main())
