"""Reference receivers.

* Pilot-aided LMMSE channel estimate followed by a sliding-window MMSE turbo
  equalizer with time-varying coefficients (soft interference cancellation).
* Single-frame JCED: the message-passing equalizer run frame by frame with no
  cross-frame messages, warm-started from the previous frame's channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .channel import HyperParams
from .fec import decode_spa
from .modem import CodedLink, ConfigError, SymbolAlphabet, pilot_sequence
from .msgcore.messages import VAR_FLOOR
from .msgcore.symbols import apriori_symbol_probs, extrinsic_llr
from .turbo import EqualizerOutput, TurboConfig, TurboIterate, run_dcs_jced


@dataclass(frozen=True)
class MmseConfig:
    n1: int = 15
    n2: int = 20
    t_turbo: int = 3
    decoder_iters: int = 50

    def __post_init__(self):
        if self.n1 < 0 or self.n2 < 0 or self.t_turbo < 1:
            raise ConfigError("n1, n2 must be >= 0 and t_turbo >= 1")

    @property
    def window(self) -> int:
        return self.n1 + self.n2 + 1


def pilot_matrix(pilot: np.ndarray, n_taps: int) -> np.ndarray:
    """``(Np, L)`` convolution matrix of the pilot with zero history before it."""
    pilot = np.asarray(pilot, complex)
    first_row = np.zeros(n_taps, complex)
    first_row[0] = pilot[0]
    return toeplitz(pilot, first_row)


def lmmse_channel_estimate(y_pilot: np.ndarray, pilot: np.ndarray, n_taps: int, noise_var: float):
    """Ridge-regularized estimate ``(P^H P + noise_var I)^-1 P^H y`` over the pilot span.

    The first ``Np`` received samples depend only on pilot symbols and the
    zero guard that precedes the frame. Returns ``(h_hat, error_covariance)``
    for a unit-variance tap prior.
    """
    pilot = np.asarray(pilot)
    if pilot.size < n_taps:
        raise ConfigError(f"pilot length {pilot.size} shorter than channel length {n_taps}")
    p = pilot_matrix(pilot, n_taps)
    gram = p.conj().T @ p + noise_var * np.eye(n_taps)
    h_hat = np.linalg.solve(gram, p.conj().T @ np.asarray(y_pilot)[: pilot.size])
    cov = noise_var * np.linalg.inv(gram)
    return h_hat, cov


def _window_matrix(h: np.ndarray, n1: int, n2: int) -> np.ndarray:
    """``(N, N + L - 1)`` map from symbols ``x[n-N2-L+1 .. n+N1]`` to ``y[n-N2 .. n+N1]``."""
    n_taps = h.size
    n = n1 + n2 + 1
    cols = n + n_taps - 1
    mat = np.zeros((n, cols), complex)
    for r in range(n):
        mat[r, r : r + n_taps] = h[::-1]
    return mat


def mmse_symbol_extrinsics(
    y: np.ndarray,
    h: np.ndarray,
    x_mean: np.ndarray,
    x_var: np.ndarray,
    targets: np.ndarray,
    cfg: MmseConfig,
    noise_var: float,
):
    """Extrinsic Gaussian ``(r_hat, r_var)`` for the symbols at ``targets``.

    ``x_mean``/``x_var`` hold the prior mean and variance of every frame
    symbol (known symbols at variance 0). For each target the window filter is
    ``f = (noise_var I + H V H^H)^-1 s`` with the target's own variance set to
    one and its mean to zero, so the output carries no prior information about
    the target itself.
    """
    y = np.asarray(y, complex)
    h = np.asarray(h, complex)
    m, n_taps = y.size, h.size
    n1, n2 = cfg.n1, cfg.n2
    n_win = cfg.window
    hw = _window_matrix(h, n1, n2)
    targets = np.asarray(targets)

    rows = targets[:, None] - n2 + np.arange(n_win)[None, :]  # sample indices
    syms = targets[:, None] - n2 - n_taps + 1 + np.arange(n_win + n_taps - 1)[None, :]
    row_ok = (rows >= 0) & (rows < m)
    sym_ok = (syms >= 0) & (syms < m)
    ys = np.where(row_ok, y[np.clip(rows, 0, m - 1)], 0.0)
    mu = np.where(sym_ok, x_mean[np.clip(syms, 0, m - 1)], 0.0)
    var = np.where(sym_ok, x_var[np.clip(syms, 0, m - 1)], 0.0)
    centre = n2 + n_taps - 1
    mu[:, centre] = 0.0
    var[:, centre] = 1.0

    hb = hw[None, :, :] * row_ok[:, :, None]  # samples outside the frame carry nothing
    cov = (hb * var[:, None, :]) @ hb.conj().transpose(0, 2, 1) + noise_var * np.eye(n_win)[None]
    s = hb[:, :, centre]
    f = np.linalg.solve(cov, s[..., None])[..., 0]
    gain = np.einsum("ti,ti->t", f.conj(), s).real
    resid = ys - (hb @ mu[..., None])[..., 0]
    est = np.einsum("ti,ti->t", f.conj(), resid)
    gain = np.clip(gain, VAR_FLOOR, 1.0 - VAR_FLOOR)
    return est / gain, (1.0 - gain) / gain


def _prior_moments(prior_llr, alphabet: SymbolAlphabet):
    p = apriori_symbol_probs(prior_llr, alphabet)
    mean = p @ alphabet.points
    var = np.einsum("na,na->n", p, np.abs(alphabet.points[None, :] - mean[:, None]) ** 2)
    return mean, var


def mmse_turbo_equalize(
    y: np.ndarray,
    h_hat: np.ndarray,
    prior_llr: np.ndarray,
    link: CodedLink,
    cfg: MmseConfig,
    noise_var: float,
    pilot: np.ndarray | None = None,
) -> np.ndarray:
    """Equalizer extrinsic LLRs (mapper order) of the data symbols of one frame."""
    fc = link.cfg
    pilot = pilot_sequence(fc.n_pilot) if pilot is None else np.asarray(pilot)
    m = fc.frame_len
    x_mean = np.zeros(m, complex)
    x_var = np.zeros(m)
    x_mean[fc.pilot_slice] = pilot
    d_mean, d_var = _prior_moments(prior_llr, link.alphabet)
    x_mean[fc.data_slice] = d_mean
    x_var[fc.data_slice] = d_var
    targets = np.arange(fc.n_pilot, fc.n_pilot + fc.n_data)
    r_hat, r_var = mmse_symbol_extrinsics(y, h_hat, x_mean, x_var, targets, cfg, noise_var)
    return extrinsic_llr(r_hat, r_var, prior_llr, link.alphabet)


def run_mmse_turbo(
    y: np.ndarray,
    link: CodedLink,
    cfg: MmseConfig,
    noise_var: float,
    pilot: np.ndarray | None = None,
) -> EqualizerOutput:
    """LMMSE channel estimate plus MMSE turbo equalization, frame by frame."""
    y = np.atleast_2d(np.asarray(y, complex))
    fc = link.cfg
    pilot = pilot_sequence(fc.n_pilot) if pilot is None else np.asarray(pilot)
    k_frames = y.shape[0]
    h_hat = np.empty((k_frames, fc.channel_len), complex)
    h_var = np.empty((k_frames, fc.channel_len))
    for k in range(k_frames):
        h_hat[k], cov = lmmse_channel_estimate(y[k], pilot, fc.channel_len, noise_var)
        h_var[k] = np.maximum(np.diag(cov).real, VAR_FLOOR)

    prior = np.zeros((k_frames, fc.n_code_bits))
    info = np.zeros((k_frames, fc.n_info_bits), np.int8)
    history = []
    for _ in range(cfg.t_turbo):
        eq = np.empty_like(prior)
        dec = np.empty_like(prior)
        for k in range(k_frames):
            eq[k] = mmse_turbo_equalize(y[k], h_hat[k], prior[k], link, cfg, noise_var, pilot)
            ext, hard, _ = decode_spa(link.code, link.to_decoder(eq[k]), max_iters=cfg.decoder_iters)
            dec[k] = link.from_decoder(ext)
            info[k] = link.info_from_codeword(hard)
        prior = dec
        history.append(TurboIterate(info.copy(), h_hat.copy(), h_var.copy(), eq, dec, 0, 0, None))
    return EqualizerOutput(info.copy(), history[-1].equalizer_llr, h_hat, h_var, history)


def jced_single_frame(
    y: np.ndarray,
    link: CodedLink,
    cfg: TurboConfig,
    hyper: HyperParams,
    noise_var: float,
    rng: np.random.Generator,
    pilot: np.ndarray | None = None,
) -> EqualizerOutput:
    """Per-frame equalization without cross-frame messages.

    Frame ``k + 1`` starts its channel extrinsic at frame ``k``'s posterior
    mean and variance; frame 0 starts from a random draw.
    """
    y = np.atleast_2d(np.asarray(y, complex))
    outs = []
    q_init = q_var = None
    for k in range(y.shape[0]):
        out = run_dcs_jced(y[k : k + 1], link, cfg, hyper, noise_var, rng, pilot, q_init, q_var)
        q_init, q_var = out.channel_estimates[0], np.maximum(out.channel_vars[0], VAR_FLOOR)
        outs.append(out)

    history = []
    for t in range(len(outs[0].history)):
        its = [o.history[t] for o in outs]
        history.append(
            TurboIterate(
                info_bits=np.concatenate([i.info_bits for i in its]),
                h_hat=np.concatenate([i.h_hat for i in its]),
                h_var=np.concatenate([i.h_var for i in its]),
                equalizer_llr=np.concatenate([i.equalizer_llr for i in its]),
                decoder_llr=np.concatenate([i.decoder_llr for i in its]),
                inner_iterations=sum(i.inner_iterations for i in its),
                diverged_frames=sum(i.diverged_frames for i in its),
                hyper=hyper,
            )
        )
    last = history[-1]
    return EqualizerOutput(
        info_bits=last.info_bits,
        extrinsic_llrs=last.equalizer_llr,
        channel_estimates=last.h_hat,
        channel_vars=np.concatenate([o.channel_vars for o in outs]),
        history=history,
        hyper=hyper,
    )
