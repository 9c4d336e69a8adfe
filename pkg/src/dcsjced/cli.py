"""Command-line entry point.

    dcsjced run            one equalizer mode over the SNR list
    dcsjced sweep          several modes on paired trials over the SNR list
    dcsjced export-channel write a synthetic channel track as a trace file

Settings come from built-in defaults, then ``--config FILE`` (flat
``key = value`` lines), then explicit flags.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .bench import MODES, ExperimentConfig, config_from_mapping, format_csv, load_config_file, run_experiment
from .channel import export_cir_trace, sample_track
from .modem import ConfigError

# flag dest -> configuration key
_FLAG_KEYS = {
    "snr": "snr",
    "mode": "mode",
    "frames": "frames",
    "pilot_len": "pilot_len",
    "tfp": "tfp",
    "tbp": "tbp",
    "turbo_iters": "turbo_iters",
    "inner_iters": "inner_iters",
    "domain": "domain",
    "seed": "seed",
    "trials": "trials",
    "out": "out",
    "channel_trace": "channel_trace",
    "workers": "workers",
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="key=value configuration file")
    p.add_argument("--snr", metavar="A,B,C", help="comma-separated Eb/N0 values in dB")
    p.add_argument("--frames", type=int, metavar="K", help="frames per group")
    p.add_argument("--pilot-len", type=int, help="M-sequence pilot length (2^m - 1)")
    p.add_argument("--tfp", type=int, help="forward sweeps per turbo iteration")
    p.add_argument("--tbp", type=int, help="backward sweeps per turbo iteration")
    p.add_argument("--turbo-iters", type=int, help="turbo iterations")
    p.add_argument("--inner-iters", type=int, help="inner iterations per frame visit")
    p.add_argument("--domain", choices=("time", "freq", "frequency"), help="within-frame domain")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--out", metavar="PATH", help="CSV output (default: stdout)")
    p.add_argument("--channel-trace", metavar="PATH", help="replay channels from a trace file")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--no-timing", action="store_true", help="write wall_time_s as 0 (byte-reproducible CSV)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcsjced", description="Joint channel estimation and turbo equalization experiments.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one equalizer mode")
    _add_common(run)
    run.add_argument("--mode", choices=MODES)

    sweep = sub.add_parser("sweep", help="compare equalizer modes on paired trials")
    _add_common(sweep)
    sweep.add_argument("--modes", default=",".join(MODES), help=f"comma-separated subset of {','.join(MODES)}")

    exp = sub.add_parser("export-channel", help="write a synthetic channel track")
    exp.add_argument("--config", metavar="PATH")
    exp.add_argument("--frames", type=int, default=100, metavar="K")
    exp.add_argument("--channel-len", type=int)
    exp.add_argument("--seed", type=int)
    exp.add_argument("--out", metavar="PATH", required=True)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values = load_config_file(args.config) if args.config else {}
    for dest, key in _FLAG_KEYS.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[key] = v if isinstance(v, str) else str(v)
    cfg = config_from_mapping(values)
    if getattr(args, "no_timing", False):
        cfg = cfg.replace(record_time=False)
    return cfg


def _emit(rows, cfg: ExperimentConfig) -> None:
    if not cfg.out:
        sys.stdout.write(format_csv(rows))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "export-channel":
            values = load_config_file(args.config) if args.config else {}
            if args.channel_len is not None:
                values["channel_len"] = str(args.channel_len)
            if args.seed is not None:
                values["seed"] = str(args.seed)
            cfg = config_from_mapping(values)
            if args.frames < 1:
                raise ConfigError("--frames must be >= 1")
            track = sample_track(cfg.hyper, cfg.frame.channel_len, args.frames, np.random.default_rng([cfg.seed]))
            export_cir_trace(track, args.out)
            return 0

        cfg = resolve_config(args)
        if args.command == "run":
            rows = run_experiment(cfg)
        else:
            modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
            rows = run_experiment(cfg, modes=modes)
        _emit(rows, cfg)
        return 0
    except (ConfigError, ValueError, OSError) as err:
        print(f"dcsjced: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
