"""Sparse time-varying channel model and the frame-level transmission.

Each tap ``i`` of the channel impulse response in frame ``k`` is
``h_i[k] = s_i[k] * theta_i[k]``: the support ``s`` is a stationary two-state
Markov chain and the amplitude ``theta`` a Gauss-Markov process.

Complex Gaussians ``CN(m, v)`` put ``v / 2`` on each of the real and imaginary
parts.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class HyperParams:
    """Channel prior ``q = [p01, lambda, zeta, varrho, rho]``.

    ``p01`` is the probability an active tap switches off between frames,
    ``lam`` the stationary activity probability, ``zeta`` the amplitude mean,
    ``varrho`` the innovation weight (0 = frozen, 1 = i.i.d.) and ``rho`` the
    driving-noise variance.
    """

    p01: float = 0.01
    lam: float = 0.2
    zeta: complex = 0j
    varrho: float = 0.005
    rho: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "zeta", complex(self.zeta))
        if not (0.0 <= self.p01 <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise ValueError(f"p01={self.p01}, lam={self.lam} must lie in [0, 1]")
        if not 0.0 <= self.varrho <= 1.0:
            raise ValueError(f"varrho={self.varrho} must lie in [0, 1]")
        if not self.rho > 0.0:
            raise ValueError(f"rho={self.rho} must be positive")
        if self.lam < 1.0 and self.p10 > 1.0 + 1e-12:
            raise ValueError(f"p10={self.p10} exceeds 1 for lam={self.lam}, p01={self.p01}")

    @property
    def sigma_sq(self) -> float:
        """Stationary amplitude variance."""
        return self.varrho * self.rho / (2.0 - self.varrho)

    @property
    def p10(self) -> float:
        """Probability an inactive tap switches on (steady-state balance)."""
        if self.lam >= 1.0:
            return 1.0
        return self.lam * self.p01 / (1.0 - self.lam)

    @property
    def p11(self) -> float:
        return 1.0 - self.p01

    @property
    def p00(self) -> float:
        return 1.0 - self.p10

    @property
    def transition_var(self) -> float:
        return self.varrho**2 * self.rho

    def replace(self, **changes) -> "HyperParams":
        return replace(self, **changes)


@dataclass
class ChannelState:
    support: np.ndarray
    amplitude: np.ndarray
    cir: np.ndarray


@dataclass
class ChannelTrack:
    """K frames of an L-tap channel, stored frame-major as ``(K, L)`` arrays."""

    cir: np.ndarray
    support: np.ndarray | None = None
    amplitude: np.ndarray | None = None
    hyper: HyperParams | None = None

    def __post_init__(self):
        self.cir = np.atleast_2d(np.asarray(self.cir, dtype=complex))

    @property
    def n_frames(self) -> int:
        return self.cir.shape[0]

    @property
    def n_taps(self) -> int:
        return self.cir.shape[1]

    @property
    def frames(self) -> list[ChannelState]:
        s = self.support if self.support is not None else (self.cir != 0).astype(np.int8)
        a = self.amplitude if self.amplitude is not None else self.cir
        return [ChannelState(s[k], a[k], self.cir[k]) for k in range(self.n_frames)]


def complex_normal(rng: np.random.Generator, var, size=None) -> np.ndarray:
    scale = np.sqrt(np.asarray(var, dtype=float) / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def sample_support_chain(hyper: HyperParams, n_taps: int, n_frames: int, rng) -> np.ndarray:
    """Binary ``(L, K)`` support matrix; rows are independent stationary chains."""
    s = np.empty((n_taps, n_frames), dtype=np.int8)
    s[:, 0] = rng.random(n_taps) < hyper.lam
    for k in range(1, n_frames):
        u = rng.random(n_taps)
        prev = s[:, k - 1]
        s[:, k] = np.where(prev == 1, u >= hyper.p01, u < hyper.p10)
    return s


def sample_amplitude_process(hyper: HyperParams, n_taps: int, n_frames: int, rng) -> np.ndarray:
    """Complex ``(L, K)`` amplitudes drawn from the stationary Gauss-Markov process."""
    theta = np.empty((n_taps, n_frames), dtype=complex)
    theta[:, 0] = hyper.zeta + complex_normal(rng, hyper.sigma_sq, n_taps)
    a = 1.0 - hyper.varrho
    for k in range(1, n_frames):
        w = complex_normal(rng, hyper.rho, n_taps)
        theta[:, k] = a * (theta[:, k - 1] - hyper.zeta) + hyper.varrho * w + hyper.zeta
    return theta


def compose_channel(support: np.ndarray, amplitude: np.ndarray, hyper: HyperParams | None = None) -> ChannelTrack:
    support = np.asarray(support)
    amplitude = np.asarray(amplitude, dtype=complex)
    if support.shape != amplitude.shape:
        raise ValueError(f"support {support.shape} and amplitude {amplitude.shape} differ")
    return ChannelTrack(
        cir=(support * amplitude).T.copy(),
        support=support.T.astype(np.int8),
        amplitude=amplitude.T.copy(),
        hyper=hyper,
    )


def sample_track(hyper: HyperParams, n_taps: int, n_frames: int, rng) -> ChannelTrack:
    s = sample_support_chain(hyper, n_taps, n_frames, rng)
    theta = sample_amplitude_process(hyper, n_taps, n_frames, rng)
    return compose_channel(s, theta, hyper)


def convolve_frame(x: np.ndarray, cir: np.ndarray) -> np.ndarray:
    """Noise-free received samples ``z_n = sum_l h_l x_{n-l}`` truncated to ``len(x)``."""
    x = np.asarray(x)
    cir = np.asarray(cir)
    if cir.size > x.size:
        raise ValueError(f"channel length {cir.size} exceeds frame length {x.size}")
    return np.convolve(x, cir)[: x.size]


def apply_channel(frame, cir: np.ndarray, noise_var: float, rng) -> np.ndarray:
    x = getattr(frame, "symbols", frame)
    z = convolve_frame(x, cir)
    if noise_var > 0:
        z = z + complex_normal(rng, noise_var, z.size)
    return z


def noise_var_from_ebn0(ebn0_db: float, code_rate: float, bits_per_symbol: int, symbol_energy: float = 1.0) -> float:
    """AWGN variance for a target E_b/N_0 at unit (or given) transmit symbol energy."""
    return symbol_energy / (float(code_rate) * bits_per_symbol * 10.0 ** (ebn0_db / 10.0))


def export_cir_trace(track: ChannelTrack, path) -> None:
    lines = [f"# cir trace: {track.n_frames} frames x {track.n_taps} taps (re im pairs)"]
    for h in track.cir:
        pairs = np.column_stack([h.real, h.imag]).ravel()
        lines.append(" ".join(repr(float(v)) for v in pairs))
    Path(path).write_text("\n".join(lines) + "\n")


def import_cir_trace(path) -> ChannelTrack:
    rows = []
    n_taps = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        try:
            vals = np.array([float(v) for v in s.split()])
        except ValueError as err:
            raise ValueError(f"{path}:{lineno}: {err}") from None
        if vals.size % 2:
            raise ValueError(f"{path}:{lineno}: odd number of values ({vals.size})")
        if n_taps is None:
            n_taps = vals.size // 2
        elif vals.size // 2 != n_taps:
            raise ValueError(f"{path}:{lineno}: {vals.size // 2} taps, expected {n_taps}")
        rows.append(vals[0::2] + 1j * vals[1::2])
    if not rows:
        raise ValueError(f"{path}: no channel frames found")
    return ChannelTrack(cir=np.array(rows))
