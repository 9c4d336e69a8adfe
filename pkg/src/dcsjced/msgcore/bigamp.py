"""Within-frame bilinear inference of channel taps and symbols.

The received frame is ``y = conv(h, x)[:M] + w``. The inner loop is BiGAMP
arranged so that it consumes and produces *extrinsic* Gaussian messages for
both factors: ``CN(q_hat, q_var)`` for the taps and ``CN(r_hat, r_var)`` for
the symbols. Time-domain updates evaluate the selection-matrix sums as
convolutions/correlations; the frequency-domain variant runs the same
iteration on the unitary DFT of the frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from ..modem import SymbolAlphabet
from .messages import VAR_FLOOR, channel_posterior
from .symbols import symbol_posterior

VAR_CEIL = 1e8
KNOWN_EPS = 1e-10
DIVERGED_PVAR = 1e30


@dataclass
class BiGampState:
    h_hat: np.ndarray
    h_var: np.ndarray
    x_hat: np.ndarray
    x_var: np.ndarray
    q_hat: np.ndarray
    q_var: np.ndarray
    r_hat: np.ndarray
    r_var: np.ndarray
    s_hat: np.ndarray
    s_var: np.ndarray
    p_hat: np.ndarray | None = None
    p_var: np.ndarray | None = None
    p_var_bar: np.ndarray | None = None
    z_hat: np.ndarray | None = None
    z_var: np.ndarray | None = None
    domain: str = "time"
    iterations: int = 0
    diverged: bool = False
    started: bool = field(default=False, repr=False)

    def copy(self) -> "BiGampState":
        vals = {}
        for f in fields(self):
            v = getattr(self, f.name)
            vals[f.name] = v.copy() if isinstance(v, np.ndarray) else v
        return BiGampState(**vals)


def init_state(
    frame_len: int,
    n_taps: int,
    known_mask: np.ndarray,
    known_values: np.ndarray,
    q_init: np.ndarray,
    q_var_init,
    domain: str = "time",
    eps: float = KNOWN_EPS,
) -> BiGampState:
    """Initial extrinsics: known symbols (pilot, guard) at variance ``eps``,
    unknown symbols at ``CN(0, 1)``, taps at ``CN(q_init, q_var_init)``."""
    if domain not in ("time", "frequency"):
        raise ValueError(f"unknown domain {domain!r}")
    r_hat = np.zeros(frame_len, complex)
    r_var = np.ones(frame_len)
    r_hat[known_mask] = known_values
    r_var[known_mask] = eps
    n_z = frame_len
    return BiGampState(
        h_hat=np.zeros(n_taps, complex),
        h_var=np.ones(n_taps),
        x_hat=r_hat.copy(),
        x_var=r_var.copy(),
        q_hat=np.asarray(q_init, complex).copy(),
        q_var=np.broadcast_to(np.asarray(q_var_init, float), (n_taps,)).copy(),
        r_hat=r_hat,
        r_var=r_var,
        s_hat=np.zeros(n_z, complex),
        s_var=np.zeros(n_z),
        domain=domain,
    )


def _lagged_corr(a, b, n_lags):
    """``c[i] = sum_m a[m] * conj(b[m - i])`` for ``i = 0..n_lags-1``."""
    full = np.correlate(a, b, mode="full")
    start = b.size - 1
    return full[start : start + n_lags]


def _tap_corr(a, g, n_out):
    """``c[j] = sum_i a[j + i] * conj(g[i])`` for ``j = 0..n_out-1`` (terms past the end dropped)."""
    full = np.correlate(a, g, mode="full")
    start = g.size - 1
    return full[start : start + n_out]


def z_conditional(h_hat, h_var, x_hat, x_var, s_hat):
    """Prediction ``(p_hat, p_var, p_var_bar, z_bar)`` of the noise-free samples."""
    m = x_hat.size
    z_bar = np.convolve(x_hat, h_hat)[:m]
    p_var_bar = np.convolve(x_var, np.abs(h_hat) ** 2)[:m] + np.convolve(np.abs(x_hat) ** 2, h_var)[:m]
    p_var = p_var_bar + np.convolve(x_var, h_var)[:m]
    p_hat = z_bar - s_hat * p_var_bar
    return p_hat, np.maximum(p_var, VAR_FLOOR), p_var_bar, z_bar


def z_posterior(p_hat, p_var, y, noise_var):
    with np.errstate(divide="ignore", invalid="ignore"):
        z_var = 1.0 / (1.0 / p_var + 1.0 / noise_var)
        y_term = np.where(np.isinf(noise_var), 0.0, y / noise_var)
        p_term = np.where(np.isinf(p_var), 0.0, p_hat / p_var)
    return z_var * (y_term + p_term), z_var


def s_update(z_hat, p_hat, p_var, z_var):
    s_hat = (z_hat - p_hat) / p_var
    s_var = (1.0 - z_var / p_var) / p_var
    return s_hat, np.maximum(s_var, 0.0)


def _safe_inv(den):
    return 1.0 / np.clip(den, 1.0 / VAR_CEIL, 1.0 / VAR_FLOOR)


def extrinsic_update(h_hat, h_var, x_hat, x_var, s_hat, s_var):
    """Extrinsic Gaussians ``(q_hat, q_var, r_hat, r_var)`` for taps and symbols."""
    n_taps, m = h_hat.size, x_hat.size
    q_var = _safe_inv(_lagged_corr(s_var, np.abs(x_hat) ** 2, n_taps).real)
    q_hat = h_hat * (1.0 - q_var * _lagged_corr(s_var, x_var, n_taps).real) + q_var * _lagged_corr(s_hat, x_hat, n_taps)
    r_var = _safe_inv(_tap_corr(s_var, np.abs(h_hat) ** 2, m).real)
    r_hat = x_hat * (1.0 - r_var * _tap_corr(s_var, h_var, m).real) + r_var * _tap_corr(s_hat, h_hat, m)
    return q_hat, q_var, r_hat, r_var


def z_conditional_fd(h_hat, h_var, x_hat, x_var, s_hat):
    """Frequency-domain prediction on ``fft(z) / sqrt(M)``."""
    m = x_hat.size
    a = np.fft.fft(h_hat, m)
    b = np.fft.fft(x_hat)
    sx, sh = x_var.sum(), h_var.sum()
    z_bar = a * b / np.sqrt(m)
    p_var_bar = (sx * np.abs(a) ** 2 + sh * np.abs(b) ** 2) / m
    p_var = p_var_bar + sx * sh / m
    p_hat = z_bar - s_hat * p_var_bar
    return p_hat, np.maximum(p_var, VAR_FLOOR), p_var_bar, z_bar


def extrinsic_update_fd(h_hat, h_var, x_hat, x_var, s_hat, s_var):
    n_taps, m = h_hat.size, x_hat.size
    a = np.fft.fft(h_hat, m)
    b = np.fft.fft(x_hat)
    ss = s_var.sum()
    r_var = _safe_inv(np.sum(s_var * np.abs(a) ** 2) / m)
    r_hat = x_hat * (1.0 - r_var * ss * h_var.sum() / m) + r_var * np.sqrt(m) * np.fft.ifft(s_hat * np.conj(a))
    q_var = _safe_inv(np.sum(s_var * np.abs(b) ** 2) / m)
    q_hat = h_hat * (1.0 - q_var * ss * x_var.sum() / m) + q_var * np.sqrt(m) * np.fft.ifft(s_hat * np.conj(b))[:n_taps]
    return q_hat, np.full(n_taps, q_var), r_hat, np.full(m, r_var)


@dataclass
class WithinResult:
    state: BiGampState
    iterations: int
    residual: float
    diverged: bool


def within_stage(
    state: BiGampState,
    local_prior,
    y: np.ndarray,
    noise_var: float,
    data_mask: np.ndarray,
    alphabet: SymbolAlphabet,
    log_prior=None,
    t_inner: int = 25,
    breakout_tol: float = 1e-4,
    damping: float = 1.0,
    y_freq: np.ndarray | None = None,
) -> WithinResult:
    """Run up to ``t_inner`` BiGAMP iterations on one frame.

    ``local_prior`` is ``(pi_in, xi_in, psi_in)``; ``log_prior`` the symbol
    log-pmf for the data positions. Iteration stops early once the relative
    change of ``z_hat`` drops below ``breakout_tol``. On numerical divergence
    the state of the last finite iteration is returned with ``diverged`` set.
    """
    pi_in, xi_in, psi_in = local_prior
    st = state.copy()
    freq = st.domain == "frequency"
    if freq:
        obs = y_freq if y_freq is not None else np.fft.fft(y) / np.sqrt(y.size)
        cond, extr = z_conditional_fd, extrinsic_update_fd
    else:
        obs = y
        cond, extr = z_conditional, extrinsic_update

    residual = np.inf
    iters = 0
    diverged = False
    for t in range(t_inner):
        prev = st.copy()
        z_prev = st.z_hat

        _, h_hat, h_var = channel_posterior(pi_in, xi_in, psi_in, st.q_hat, st.q_var)
        x_hat = st.r_hat.copy()
        x_var = st.r_var.copy()
        x_hat[data_mask], x_var[data_mask], _ = symbol_posterior(
            st.r_hat[data_mask], st.r_var[data_mask], log_prior, alphabet
        )
        if damping < 1.0 and st.started:
            h_hat = damping * h_hat + (1.0 - damping) * st.h_hat
            x_hat = damping * x_hat + (1.0 - damping) * st.x_hat
        st.h_hat, st.h_var, st.x_hat, st.x_var = h_hat, h_var, x_hat, x_var

        p_hat, p_var, p_var_bar, _ = cond(h_hat, h_var, x_hat, x_var, st.s_hat)
        if damping < 1.0 and st.p_hat is not None:
            p_hat = damping * p_hat + (1.0 - damping) * st.p_hat
            p_var = damping * p_var + (1.0 - damping) * st.p_var
        z_hat, z_var = z_posterior(p_hat, p_var, obs, noise_var)
        s_hat, s_var = s_update(z_hat, p_hat, p_var, z_var)
        q_hat, q_var, r_hat, r_var = extr(h_hat, h_var, x_hat, x_var, s_hat, s_var)

        finite = (
            np.all(np.isfinite(z_hat))
            and np.all(np.isfinite(q_hat))
            and np.all(np.isfinite(r_hat[data_mask]))
            and np.max(p_var) < DIVERGED_PVAR
        )
        if not finite:
            st = prev
            diverged = True
            break

        st.p_hat, st.p_var, st.p_var_bar = p_hat, p_var, p_var_bar
        st.z_hat, st.z_var, st.s_hat, st.s_var = z_hat, z_var, s_hat, s_var
        st.q_hat, st.q_var = q_hat, np.clip(q_var, VAR_FLOOR, VAR_CEIL)
        st.r_hat[data_mask] = r_hat[data_mask]
        st.r_var[data_mask] = np.clip(r_var[data_mask], VAR_FLOOR, VAR_CEIL)
        st.started = True
        iters = t + 1

        if z_prev is not None:
            ref = np.linalg.norm(z_prev)
            residual = np.linalg.norm(z_hat - z_prev) / ref if ref > 0 else np.inf
            if residual < breakout_tol:
                break

    st.iterations = state.iterations + iters
    st.diverged = diverged
    return WithinResult(st, iters, float(residual), diverged)


def posterior_channel_estimate(state: BiGampState, local_prior):
    """Tap posterior mean/variance from the current extrinsic and local prior."""
    _, h_hat, h_var = channel_posterior(*local_prior, state.q_hat, state.q_var)
    return h_hat, h_var


__all__ = [
    "BiGampState",
    "WithinResult",
    "init_state",
    "z_conditional",
    "z_posterior",
    "s_update",
    "extrinsic_update",
    "z_conditional_fd",
    "extrinsic_update_fd",
    "within_stage",
    "posterior_channel_estimate",
]
