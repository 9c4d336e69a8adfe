"""Seeded Monte-Carlo experiments: BER and channel NMSE per turbo iteration.

Every trial draws its randomness from named substreams keyed by
``(seed, trial)``, so all equalizer modes at the same trial see the same
channel, bits, interleaver and noise, and results do not depend on the order
in which trials are executed.

E_b/N_0 is converted to the complex noise variance with unit symbol energy:
``noise_var = 1 / (R * Q * 10**(EbN0 / 10))``.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .baseline import MmseConfig, jced_single_frame, run_mmse_turbo
from .channel import ChannelTrack, HyperParams, import_cir_trace, noise_var_from_ebn0, sample_track
from .fec import build_code
from .modem import CodedLink, ConfigError, FrameConfig, assemble_frame, make_permutation, map_symbols, pilot_sequence, qpsk_gray
from .turbo import EqualizerOutput, TurboConfig, run_dcs_jced

log = logging.getLogger(__name__)

MODES = ("dcs-jced", "jced", "mmse")
CSV_HEADER = ("snr_db", "mode", "turbo_iter", "ber", "nmse_db", "bit_errors", "bits_total", "frames", "wall_time_s")
NMSE_FLOOR_DB = -100.0
STREAMS = {"channel": 0, "noise": 1, "bits": 2, "interleaver": 3, "init": 4}


@dataclass(frozen=True)
class ExperimentConfig:
    snr_list: tuple = (25.0,)
    trials: int = 1
    n_frames: int = 10
    mode: str = "dcs-jced"
    frame: FrameConfig = field(default_factory=FrameConfig)
    turbo: TurboConfig = field(default_factory=TurboConfig)
    hyper: HyperParams = field(default_factory=HyperParams)
    mmse: MmseConfig = field(default_factory=MmseConfig)
    jced_inner: int = 100
    seed: int = 0
    code_seed: int = 0
    channel_trace: str | None = None
    out: str | None = None
    record_time: bool = True
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "snr_list", tuple(float(s) for s in self.snr_list))
        if not self.snr_list:
            raise ConfigError("snr_list must not be empty")
        if self.trials < 1 or self.n_frames < 1:
            raise ConfigError("trials and n_frames must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def replace(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def turbo_for(self, mode: str) -> TurboConfig:
        if mode == "jced":
            return replace(self.turbo, t_fp=1, t_bp=0, t_inner=self.jced_inner, em=False)
        return self.turbo


@dataclass(frozen=True)
class ResultRow:
    snr_db: float
    mode: str
    turbo_iter: int
    ber: float
    nmse_db: float
    bit_errors: int
    bits_total: int
    frames: int
    wall_time_s: float


@dataclass
class TrialResult:
    """Per-turbo-iteration bit errors and per-frame NMSE ratios of one trial."""

    trial: int
    bit_errors: list[int]
    bits_total: int
    nmse_ratios: list[np.ndarray]
    wall_time_s: float


def trial_streams(seed: int, trial: int) -> dict[str, np.random.Generator]:
    return {name: np.random.default_rng([seed, trial, sid]) for name, sid in STREAMS.items()}


@lru_cache(maxsize=8)
def _code(n_info: int, n_code: int, seed: int):
    return build_code(n_info, n_code, seed=seed)


@lru_cache(maxsize=4)
def _trace(path: str) -> ChannelTrack:
    return import_cir_trace(path)


@dataclass
class TrialData:
    link: CodedLink
    info_bits: np.ndarray
    cir: np.ndarray
    symbols: np.ndarray
    noise: np.ndarray
    init_rng: np.random.Generator


def make_trial(cfg: ExperimentConfig, trial: int) -> TrialData:
    """Channel, bits, interleaver and unit noise for one trial (SNR independent)."""
    fc = cfg.frame
    rngs = trial_streams(cfg.seed, trial)
    code = _code(fc.n_info_bits, fc.n_code_bits, cfg.code_seed)
    link = CodedLink(fc, code, make_permutation(fc.n_code_bits, rngs["interleaver"]), qpsk_gray())
    k = cfg.n_frames
    if cfg.channel_trace:
        track = _trace(str(cfg.channel_trace))
        if track.n_taps != fc.channel_len:
            raise ConfigError(f"trace has {track.n_taps} taps, frame config expects {fc.channel_len}")
        idx = (trial * k + np.arange(k)) % track.n_frames
        cir = track.cir[idx]
    else:
        cir = sample_track(cfg.hyper, fc.channel_len, k, rngs["channel"]).cir
    info = rngs["bits"].integers(0, 2, size=(k, fc.n_info_bits)).astype(np.int8)
    pilot = pilot_sequence(fc.n_pilot)
    symbols = np.stack([assemble_frame(pilot, map_symbols(link.mapper_bits(b), link.alphabet), fc).symbols for b in info])
    g = rngs["noise"]
    noise = (g.standard_normal(symbols.shape) + 1j * g.standard_normal(symbols.shape)) / np.sqrt(2.0)
    return TrialData(link, info, cir, symbols, noise, rngs["init"])


def received_frames(data: TrialData, noise_var: float) -> np.ndarray:
    m = data.symbols.shape[1]
    z = np.stack([np.convolve(x, h)[:m] for x, h in zip(data.symbols, data.cir)])
    return z + np.sqrt(noise_var) * data.noise


def equalize(cfg: ExperimentConfig, mode: str, y: np.ndarray, data: TrialData, noise_var: float) -> EqualizerOutput:
    if mode == "dcs-jced":
        return run_dcs_jced(y, data.link, cfg.turbo_for(mode), cfg.hyper, noise_var, data.init_rng)
    if mode == "jced":
        return jced_single_frame(y, data.link, cfg.turbo_for(mode), cfg.hyper, noise_var, data.init_rng)
    if mode == "mmse":
        return run_mmse_turbo(y, data.link, cfg.mmse, noise_var)
    raise ConfigError(f"unknown mode {mode!r}")


def nmse_ratios(h_true: np.ndarray, h_hat: np.ndarray) -> np.ndarray:
    """Per-frame ``||h_hat - h||^2 / ||h||^2``; frames with an all-zero channel are dropped."""
    energy = np.sum(np.abs(h_true) ** 2, axis=-1)
    err = np.sum(np.abs(h_hat - h_true) ** 2, axis=-1)
    keep = energy > 0
    return err[keep] / energy[keep]


def nmse_db(ratios) -> float:
    ratios = np.concatenate([np.atleast_1d(r) for r in ratios]) if len(ratios) else np.zeros(0)
    if ratios.size == 0:
        return float("nan")
    mean = ratios.mean()
    return NMSE_FLOOR_DB if mean <= 10 ** (NMSE_FLOOR_DB / 10) else float(10 * np.log10(mean))


def compute_metrics(info_bits: np.ndarray, cir: np.ndarray, output: EqualizerOutput):
    """``(bit_errors per turbo iteration, bits_total, NMSE ratios per iteration)``."""
    errs = [int(np.sum(it.info_bits != info_bits)) for it in output.history]
    ratios = [nmse_ratios(cir, it.h_hat) for it in output.history]
    return errs, int(info_bits.size), ratios


def run_trial(cfg: ExperimentConfig, mode: str, snr_db: float, trial: int) -> TrialResult:
    t0 = time.perf_counter()
    data = make_trial(cfg, trial)
    nv = noise_var_from_ebn0(snr_db, float(cfg.frame.code_rate), cfg.frame.bits_per_symbol)
    out = equalize(cfg, mode, received_frames(data, nv), data, nv)
    errs, total, ratios = compute_metrics(data.info_bits, data.cir, out)
    return TrialResult(trial, errs, total, ratios, time.perf_counter() - t0)


def _run_trial_args(args):
    return run_trial(*args)


def run_trials(cfg: ExperimentConfig, mode: str, snr_db: float) -> list[TrialResult]:
    jobs = [(cfg, mode, snr_db, t) for t in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            res = list(pool.map(_run_trial_args, jobs))
    else:
        res = [run_trial(*j) for j in jobs]
    return sorted(res, key=lambda r: r.trial)


def aggregate(results: list[TrialResult], snr_db: float, mode: str, n_frames: int, record_time=True) -> list[ResultRow]:
    rows = []
    n_iter = len(results[0].bit_errors)
    wall = sum(r.wall_time_s for r in results) if record_time else 0.0
    for t in range(n_iter):
        errs = sum(r.bit_errors[t] for r in results)
        total = sum(r.bits_total for r in results)
        rows.append(
            ResultRow(
                snr_db=snr_db,
                mode=mode,
                turbo_iter=t + 1,
                ber=errs / total,
                nmse_db=nmse_db([r.nmse_ratios[t] for r in results]),
                bit_errors=errs,
                bits_total=total,
                frames=len(results) * n_frames,
                wall_time_s=wall,
            )
        )
    return rows


def run_experiment(cfg: ExperimentConfig, modes=None) -> list[ResultRow]:
    """All SNR points of ``cfg`` for ``cfg.mode`` (or each of ``modes``)."""
    modes = (cfg.mode,) if modes is None else tuple(modes)
    for m in modes:
        if m not in MODES:
            raise ConfigError(f"unknown mode {m!r}")
    rows = []
    for snr in cfg.snr_list:
        for mode in modes:
            res = run_trials(cfg, mode, snr)
            rows.extend(aggregate(res, snr, mode, cfg.n_frames, cfg.record_time))
            log.info("snr=%g mode=%s ber=%s", snr, mode, [f"{r.ber:.3g}" for r in rows[-len(res[0].bit_errors):]])
    if cfg.out:
        write_csv(rows, cfg.out)
    return rows


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10g}"


def format_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(getattr(r, k)) for k in CSV_HEADER])
    return buf.getvalue()


def write_csv(rows: list[ResultRow], path) -> None:
    Path(path).write_text(format_csv(rows), encoding="utf-8", newline="\n")


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# -- configuration files ---------------------------------------------------

def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment; keys are case-insensitive
    and ``-`` is treated as ``_``."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key.lower().replace("-", "_")] = value
    return out


def load_config_file(path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), str(path))


def _bool(s: str) -> bool:
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _domain(s: str) -> str:
    v = s.strip().lower()
    return {"freq": "frequency", "frequency": "frequency", "time": "time"}.get(v) or _bad("domain", s)


def _bad(key, value):
    raise ConfigError(f"invalid value for {key}: {value!r}")


def _floats(s: str) -> tuple:
    try:
        return tuple(float(v) for v in str(s).split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"invalid SNR list {s!r}") from None


# key -> (section, field, converter)
_KEYS = {
    "snr": ("exp", "snr_list", _floats),
    "trials": ("exp", "trials", int),
    "frames": ("exp", "n_frames", int),
    "mode": ("exp", "mode", str),
    "seed": ("exp", "seed", int),
    "code_seed": ("exp", "code_seed", int),
    "channel_trace": ("exp", "channel_trace", str),
    "out": ("exp", "out", str),
    "jced_inner": ("exp", "jced_inner", int),
    "record_time": ("exp", "record_time", _bool),
    "workers": ("exp", "workers", int),
    "pilot_len": ("frame", "n_pilot", int),
    "n_data": ("frame", "n_data", int),
    "n_guard": ("frame", "n_guard", int),
    "n_info_bits": ("frame", "n_info_bits", int),
    "channel_len": ("frame", "channel_len", int),
    "tfp": ("turbo", "t_fp", int),
    "tbp": ("turbo", "t_bp", int),
    "turbo_iters": ("turbo", "t_turbo", int),
    "inner_iters": ("turbo", "t_inner", int),
    "breakout_tol": ("turbo", "breakout_tol", float),
    "domain": ("turbo", "domain", _domain),
    "schedule": ("turbo", "schedule", str),
    "damping": ("turbo", "damping", float),
    "em": ("turbo", "em", _bool),
    "p01": ("hyper", "p01", float),
    "lam": ("hyper", "lam", float),
    "zeta": ("hyper", "zeta", complex),
    "varrho": ("hyper", "varrho", float),
    "rho": ("hyper", "rho", float),
    "n1": ("mmse", "n1", int),
    "n2": ("mmse", "n2", int),
}


def config_from_mapping(values: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from string (or typed) values.

    ``turbo_iters`` also sets the MMSE receiver's iteration count. Unknown keys
    raise :class:`ConfigError`.
    """
    base = base or ExperimentConfig()
    parts = {"exp": {}, "frame": {}, "turbo": {}, "hyper": {}, "mmse": {}}
    for key, raw in values.items():
        if raw is None:
            continue
        k = key.lower().replace("-", "_")
        if k not in _KEYS:
            raise ConfigError(f"unknown configuration key {key!r}")
        section, name, conv = _KEYS[k]
        try:
            parts[section][name] = conv(raw) if isinstance(raw, str) or conv in (int, float) else raw
        except ValueError as err:
            raise ConfigError(f"invalid value for {key}: {raw!r} ({err})") from None
    if "t_turbo" in parts["turbo"]:
        parts["mmse"]["t_turbo"] = parts["turbo"]["t_turbo"]
    frame = replace(base.frame, **parts["frame"]) if parts["frame"] else base.frame
    return replace(
        base,
        frame=frame,
        turbo=replace(base.turbo, **parts["turbo"]),
        hyper=replace(base.hyper, **parts["hyper"]),
        mmse=replace(base.mmse, **parts["mmse"]),
        **parts["exp"],
    )
