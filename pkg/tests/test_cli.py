import subprocess
import sys

import numpy as np
import pytest

from dcsjced.bench import CSV_HEADER, read_csv
from dcsjced.channel import import_cir_trace
from dcsjced.cli import build_parser, main, resolve_config

FAST = ["--trials", "1", "--frames", "1", "--inner-iters", "3", "--turbo-iters", "1", "--tfp", "1", "--tbp", "0", "--no-timing"]


class TestParser:
    def test_flags_override_file(self, tmp_path):
        conf = tmp_path / "c.cfg"
        conf.write_text("snr = 10, 12\ntrials = 7\nseed = 3\ndomain = freq\n")
        args = build_parser().parse_args(["run", "--config", str(conf), "--trials", "2", "--pilot-len", "31"])
        cfg = resolve_config(args)
        assert cfg.snr_list == (10.0, 12.0) and cfg.trials == 2 and cfg.seed == 3
        assert cfg.turbo.domain == "frequency" and cfg.frame.n_pilot == 31

    def test_all_spec_flags_parse(self):
        args = build_parser().parse_args(
            ["run", "--snr", "20,24", "--mode", "mmse", "--frames", "5", "--pilot-len", "63", "--tfp", "2", "--tbp", "1",
             "--turbo-iters", "2", "--inner-iters", "9", "--domain", "time", "--seed", "4", "--trials", "3",
             "--out", "x.csv", "--channel-trace", "t.txt"]
        )
        cfg = resolve_config(args)
        assert (cfg.mode, cfg.n_frames, cfg.turbo.t_inner, cfg.out, cfg.channel_trace) == ("mmse", 5, 9, "x.csv", "t.txt")

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestCommands:
    def test_run_writes_csv(self, tmp_path):
        out = tmp_path / "r.csv"
        assert main(["run", "--snr", "30", "--mode", "mmse", "--out", str(out), *FAST]) == 0
        rows = read_csv(out)
        assert len(rows) == 1 and list(rows[0]) == list(CSV_HEADER) and rows[0]["mode"] == "mmse"

    def test_sweep_pairs_modes(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(["sweep", "--snr", "30", "--modes", "jced,mmse", "--out", str(out), *FAST]) == 0
        assert [r["mode"] for r in read_csv(out)] == ["jced", "mmse"]

    def test_stdout_is_deterministic(self, capsys):
        main(["run", "--snr", "28", "--seed", "9", *FAST])
        a = capsys.readouterr().out
        main(["run", "--snr", "28", "--seed", "9", *FAST])
        assert capsys.readouterr().out == a and a.startswith(",".join(CSV_HEADER))

    def test_export_channel_round_trip(self, tmp_path):
        path = tmp_path / "trace.txt"
        assert main(["export-channel", "--frames", "4", "--seed", "2", "--out", str(path)]) == 0
        track = import_cir_trace(path)
        assert track.cir.shape == (4, 25)
        out = tmp_path / "r.csv"
        assert main(["run", "--snr", "30", "--channel-trace", str(path), "--out", str(out), *FAST]) == 0

    def test_config_error_exit_code(self, tmp_path, capsys):
        conf = tmp_path / "bad.cfg"
        conf.write_text("frobnicate = 1\n")
        assert main(["run", "--config", str(conf)]) == 2
        assert "unknown configuration key" in capsys.readouterr().err

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "dcsjced", "--help"], capture_output=True, text=True)
        assert res.returncode == 0 and "export-channel" in res.stdout
