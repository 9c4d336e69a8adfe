"""
Driving the simulator from the command line
===========================================

The ``dcsjced`` entry point exposes ``run``, ``sweep`` and
``export-channel``. Here a channel trace is exported, then replayed by a small
sweep whose CSV is parsed back. The same commands work from a shell.
"""

import csv
import io
import subprocess
import sys
import tempfile
from pathlib import Path

tmp = Path(tempfile.mkdtemp())
trace = tmp / "channel.txt"
cli = [sys.executable, "-m", "dcsjced"]

subprocess.run(cli + ["export-channel", "--frames", "40", "--seed", "3", "--out", str(trace)], check=True)
print("exported", trace.name, trace.stat().st_size, "bytes")

out = subprocess.run(
    cli
    + ["sweep", "--snr", "24,28", "--trials", "2", "--frames", "5", "--turbo-iters", "2",
       "--modes", "dcs-jced,mmse", "--channel-trace", str(trace), "--no-timing"],
    check=True, capture_output=True, text=True,
).stdout

for row in csv.DictReader(io.StringIO(out)):
    print(f"{row['snr_db']:>5} dB {row['mode']:9s} iter {row['turbo_iter']}  BER {float(row['ber']):.4f}  NMSE {float(row['nmse_db']):6.1f} dB")
