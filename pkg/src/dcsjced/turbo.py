"""Turbo loop over a group of K frames: message-passing equalization with
cross-frame channel tracking, EM hyperparameter tuning and LDPC decoding.

Each turbo iteration runs up to ``t_fp`` forward and ``t_bp`` backward sweeps
(alternating F, B), one EM step, then hands the equalizer's extrinsic LLRs to
the decoder and feeds the decoder's extrinsic LLRs back as symbol priors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import HyperParams, complex_normal
from .emtune import collect_moments, em_update
from .fec import decode_spa
from .modem import CodedLink, ConfigError, pilot_sequence
from .msgcore import (
    BiGampState,
    FrameMessages,
    across_backward,
    across_forward,
    apriori_symbol_probs,
    channel_posterior,
    extrinsic_llr,
    init_state,
    into_stage,
    out_stage,
    within_stage,
)
from .msgcore.bigamp import KNOWN_EPS, VAR_CEIL
from .msgcore.messages import VAR_FLOOR

__all__ = [
    "TurboConfig",
    "TurboIterate",
    "EqualizerOutput",
    "run_dcs_jced",
    "track_channel",
    "ChannelTrackOutput",
    "extrinsic_llr",
    "apriori_symbol_probs",
]


@dataclass(frozen=True)
class TurboConfig:
    t_turbo: int = 3
    t_fp: int = 2
    t_bp: int = 2
    t_inner: int = 25
    breakout_tol: float = 1e-4
    domain: str = "time"
    schedule: str = "serial"
    damping: float = 0.6
    em: bool = True
    decoder_iters: int = 50

    def __post_init__(self):
        if min(self.t_turbo, self.t_fp, self.t_inner, self.decoder_iters) < 1 or self.t_bp < 0:
            raise ConfigError("iteration counts must be >= 1 (t_bp >= 0)")
        if not self.breakout_tol > 0:
            raise ConfigError("breakout_tol must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ConfigError(f"damping {self.damping} outside (0, 1]")
        if self.domain not in ("time", "frequency"):
            raise ConfigError(f"unknown domain {self.domain!r}")
        if self.schedule not in ("serial", "parallel"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")


@dataclass
class TurboIterate:
    """Snapshot after one turbo iteration (``(K, ...)`` arrays)."""

    info_bits: np.ndarray
    h_hat: np.ndarray
    h_var: np.ndarray
    equalizer_llr: np.ndarray
    decoder_llr: np.ndarray
    inner_iterations: int
    diverged_frames: int
    hyper: HyperParams


@dataclass
class EqualizerOutput:
    info_bits: np.ndarray
    extrinsic_llrs: np.ndarray
    channel_estimates: np.ndarray
    channel_vars: np.ndarray
    history: list[TurboIterate] = field(default_factory=list)
    hyper: HyperParams | None = None

    @property
    def n_frames(self) -> int:
        return self.info_bits.shape[0]


class _FrameGroup:
    """Per-run engine: BiGAMP states of all frames plus the chain messages."""

    def __init__(self, y, link: CodedLink, cfg: TurboConfig, hyper, noise_var, rng, pilot, q_init, q_var_init):
        fc = link.cfg
        self.y = y
        self.link = link
        self.cfg = cfg
        self.hyper = hyper
        self.noise_var = noise_var
        k_frames, m = y.shape
        n_taps = fc.channel_len
        idx = np.arange(m)
        self.data_mask = (idx >= fc.n_pilot) & (idx < fc.n_pilot + fc.n_data)
        known = ~self.data_mask
        known_vals = np.zeros(m, complex)
        known_vals[: fc.n_pilot] = pilot
        self.y_freq = np.fft.fft(y, axis=1) / np.sqrt(m) if cfg.domain == "frequency" else None
        self.msgs = FrameMessages.initial(k_frames, n_taps, hyper)
        self.states: list[BiGampState] = []
        for k in range(k_frames):
            q0 = complex_normal(rng, 1.0, n_taps) if q_init is None else np.asarray(q_init)
            qv = hyper.rho if q_var_init is None else q_var_init
            self.states.append(init_state(m, n_taps, known, known_vals[known], q0, qv, cfg.domain, KNOWN_EPS))
        self.log_prior = [None] * k_frames
        self.inner_iterations = 0
        self.diverged = np.zeros(k_frames, bool)

    @property
    def n_frames(self):
        return self.y.shape[0]

    def local_prior(self, k):
        m = self.msgs
        return into_stage(m.lam_fwd[k], m.lam_bwd[k], m.eta_fwd[k], m.kappa_fwd[k], m.eta_bwd[k], m.kappa_bwd[k])

    def process_frame(self, k):
        """into -> within -> out for frame ``k``."""
        prior = self.local_prior(k)
        m = self.msgs
        m.pi_in[k], m.xi_in[k], m.psi_in[k] = prior
        res = within_stage(
            self.states[k],
            prior,
            self.y[k],
            self.noise_var,
            self.data_mask,
            self.link.alphabet,
            log_prior=self.log_prior[k],
            t_inner=self.cfg.t_inner,
            breakout_tol=self.cfg.breakout_tol,
            damping=self.cfg.damping,
            y_freq=None if self.y_freq is None else self.y_freq[k],
        )
        self.states[k] = res.state
        self.inner_iterations += res.iterations
        self.diverged[k] |= res.diverged
        st = res.state
        m.pi_out[k], m.xi_out[k], m.psi_out[k] = out_stage(*prior, st.q_hat, st.q_var)

    def reset_boundary(self):
        h = self.hyper
        self.msgs.lam_fwd[0] = h.lam
        self.msgs.eta_fwd[0] = h.zeta
        self.msgs.kappa_fwd[0] = h.sigma_sq

    def push_forward(self, k):
        m = self.msgs
        m.lam_fwd[k + 1], m.eta_fwd[k + 1], m.kappa_fwd[k + 1] = across_forward(
            m.lam_fwd[k], m.pi_out[k], m.eta_fwd[k], m.kappa_fwd[k], m.xi_out[k], m.psi_out[k], self.hyper
        )

    def push_backward(self, k):
        m = self.msgs
        m.lam_bwd[k - 1], m.eta_bwd[k - 1], m.kappa_bwd[k - 1] = across_backward(
            m.lam_bwd[k], m.pi_out[k], m.eta_bwd[k], m.kappa_bwd[k], m.xi_out[k], m.psi_out[k], self.hyper
        )

    def forward_sweep(self):
        self.reset_boundary()
        n = self.n_frames
        if self.cfg.schedule == "serial":
            for k in range(n):
                self.process_frame(k)
                if k < n - 1:
                    self.push_forward(k)
        else:
            for k in range(n):
                self.process_frame(k)
            for k in range(n - 1):
                self.push_forward(k)

    def backward_sweep(self):
        n = self.n_frames
        if self.cfg.schedule == "serial":
            for k in range(n - 1, -1, -1):
                self.process_frame(k)
                if k > 0:
                    self.push_backward(k)
        else:
            for k in range(n):
                self.process_frame(k)
            for k in range(n - 1, 0, -1):
                self.push_backward(k)

    def channel_estimates(self):
        h = np.empty(self.msgs.pi_in.shape, complex)
        v = np.empty(self.msgs.pi_in.shape)
        for k, st in enumerate(self.states):
            _, h[k], v[k] = channel_posterior(*self.local_prior(k), st.q_hat, st.q_var)
        return h, v


def run_dcs_jced(
    y: np.ndarray,
    link: CodedLink,
    cfg: TurboConfig,
    hyper: HyperParams,
    noise_var: float,
    rng: np.random.Generator,
    pilot: np.ndarray | None = None,
    q_init: np.ndarray | None = None,
    q_var_init=None,
) -> EqualizerOutput:
    """Equalize and decode the ``(K, M)`` received frames ``y``.

    ``rng`` seeds the random channel initialization (unless ``q_init`` is
    given). Returns hard information bits per frame, the last equalizer
    extrinsic LLRs (mapper order), channel estimates and per-iteration history.
    """
    y = np.atleast_2d(np.asarray(y, complex))
    fc = link.cfg
    if y.shape[1] != fc.frame_len:
        raise ConfigError(f"frames have {y.shape[1]} samples, expected {fc.frame_len}")
    pilot = pilot_sequence(fc.n_pilot) if pilot is None else np.asarray(pilot)
    group = _FrameGroup(y, link, cfg, hyper, noise_var, rng, pilot, q_init, q_var_init)
    k_frames = y.shape[0]
    alphabet = link.alphabet
    prior_llr = np.zeros((k_frames, fc.n_code_bits))
    eq_llr = np.zeros_like(prior_llr)
    info = np.zeros((k_frames, fc.n_info_bits), np.int8)
    history = []

    for it in range(cfg.t_turbo):
        if it > 0:
            group.log_prior = [apriori_symbol_probs(prior_llr[k], alphabet, log=True) for k in range(k_frames)]
        inner_before = group.inner_iterations
        fwd_done = bwd_done = False
        for sweep in range(max(cfg.t_fp, cfg.t_bp)):
            if sweep < cfg.t_fp:
                group.forward_sweep()
                fwd_done = True
            if sweep < cfg.t_bp:
                group.backward_sweep()
                bwd_done = True

        if cfg.em and fwd_done and bwd_done:
            group.hyper = em_update(collect_moments(group.msgs, group.hyper), group.hyper)

        dec_llr = np.zeros_like(prior_llr)
        for k, st in enumerate(group.states):
            dm = group.data_mask
            eq_llr[k] = extrinsic_llr(st.r_hat[dm], st.r_var[dm], prior_llr[k], alphabet)
            ext, hard, _ = decode_spa(link.code, link.to_decoder(eq_llr[k]), max_iters=cfg.decoder_iters)
            dec_llr[k] = link.from_decoder(ext)
            info[k] = link.info_from_codeword(hard)
        prior_llr = dec_llr

        h_hat, h_var = group.channel_estimates()
        history.append(
            TurboIterate(
                info_bits=info.copy(),
                h_hat=h_hat,
                h_var=h_var,
                equalizer_llr=eq_llr.copy(),
                decoder_llr=dec_llr.copy(),
                inner_iterations=group.inner_iterations - inner_before,
                diverged_frames=int(group.diverged.sum()),
                hyper=group.hyper,
            )
        )

    last = history[-1]
    return EqualizerOutput(
        info_bits=last.info_bits,
        extrinsic_llrs=last.equalizer_llr,
        channel_estimates=last.h_hat,
        channel_vars=np.clip(last.h_var, VAR_FLOOR, VAR_CEIL),
        history=history,
        hyper=group.hyper,
    )


@dataclass
class ChannelTrackOutput:
    h_hat: np.ndarray
    h_var: np.ndarray
    hyper: HyperParams
    hyper_history: list[HyperParams]


def track_channel(
    q_hat: np.ndarray,
    q_var,
    hyper: HyperParams,
    n_iter: int = 5,
    em: bool = True,
) -> ChannelTrackOutput:
    """Smooth per-frame tap observations ``CN(q_hat[k], q_var)`` across frames.

    This is the cross-frame part of the equalizer on its own: with every
    symbol known the within stage reduces to such observations. Each
    iteration runs one forward and one backward pass, then (optionally) one
    EM step. ``hyper_history`` starts with the initial hyperparameters.
    """
    q_hat = np.atleast_2d(np.asarray(q_hat, complex))
    k_frames, n_taps = q_hat.shape
    q_var = np.broadcast_to(np.asarray(q_var, float), q_hat.shape)
    if n_iter < 1:
        raise ConfigError("n_iter must be >= 1")
    msgs = FrameMessages.initial(k_frames, n_taps, hyper)
    history = [hyper]

    def visit(k):
        prior = into_stage(msgs.lam_fwd[k], msgs.lam_bwd[k], msgs.eta_fwd[k], msgs.kappa_fwd[k], msgs.eta_bwd[k], msgs.kappa_bwd[k])
        msgs.pi_in[k], msgs.xi_in[k], msgs.psi_in[k] = prior
        msgs.pi_out[k], msgs.xi_out[k], msgs.psi_out[k] = out_stage(*prior, q_hat[k], q_var[k])

    for _ in range(n_iter):
        msgs.lam_fwd[0], msgs.eta_fwd[0], msgs.kappa_fwd[0] = hyper.lam, hyper.zeta, hyper.sigma_sq
        for k in range(k_frames):
            visit(k)
            if k < k_frames - 1:
                msgs.lam_fwd[k + 1], msgs.eta_fwd[k + 1], msgs.kappa_fwd[k + 1] = across_forward(
                    msgs.lam_fwd[k], msgs.pi_out[k], msgs.eta_fwd[k], msgs.kappa_fwd[k], msgs.xi_out[k], msgs.psi_out[k], hyper
                )
        for k in range(k_frames - 1, -1, -1):
            visit(k)
            if k > 0:
                msgs.lam_bwd[k - 1], msgs.eta_bwd[k - 1], msgs.kappa_bwd[k - 1] = across_backward(
                    msgs.lam_bwd[k], msgs.pi_out[k], msgs.eta_bwd[k], msgs.kappa_bwd[k], msgs.xi_out[k], msgs.psi_out[k], hyper
                )
        if em:
            hyper = em_update(collect_moments(msgs, hyper), hyper)
        history.append(hyper)

    h = np.empty(q_hat.shape, complex)
    v = np.empty(q_hat.shape)
    for k in range(k_frames):
        prior = into_stage(msgs.lam_fwd[k], msgs.lam_bwd[k], msgs.eta_fwd[k], msgs.kappa_fwd[k], msgs.eta_bwd[k], msgs.kappa_bwd[k])
        _, h[k], v[k] = channel_posterior(*prior, q_hat[k], q_var[k])
    return ChannelTrackOutput(h, v, hyper, history)
