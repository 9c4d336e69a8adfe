"""EM re-estimation of the channel hyperparameters ``[p01, lam, zeta, varrho, rho]``.

The E-step smooths each tap's two chains independently, treating the
tap-factor messages ``(pi_out, xi_out, psi_out)`` of every frame as local
likelihoods: a two-state forward-backward pass for the support and a
Rauch-Tung-Striebel pass for the Gauss-Markov amplitude.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .channel import HyperParams
from .msgcore.messages import VAR_FLOOR, FrameMessages, gaussian_product

log = logging.getLogger(__name__)

PROB_RANGE = (1e-4, 1.0 - 1e-4)
VARRHO_RANGE = (1e-4, 1.0)
RHO_FLOOR = 1e-8


@dataclass
class SmoothedMoments:
    """Posterior moments, tap-major: ``(L, K)`` marginals and ``(L, K-1)`` pair terms.

    ``s_pair[i, k] = E[s_i[k] s_i[k+1]]`` and
    ``theta_cross[i, k] = E[theta_i[k+1] conj(theta_i[k])]``.
    """

    s_marginal: np.ndarray
    s_pair: np.ndarray
    theta_mean: np.ndarray
    theta_var: np.ndarray
    theta_cross: np.ndarray

    @property
    def n_taps(self) -> int:
        return self.s_marginal.shape[0]

    @property
    def n_frames(self) -> int:
        return self.s_marginal.shape[1]


def smooth_support(pi_out: np.ndarray, hyper: HyperParams):
    """Two-state forward-backward on each row of ``pi_out`` ``(L, K)``.

    Returns ``(marginal (L, K), pair (L, K-1))`` with ``pair = P(s[k]=1, s[k+1]=1)``.
    """
    pi_out = np.clip(np.asarray(pi_out, float), 0.0, 1.0)
    n_taps, n_frames = pi_out.shape
    trans = np.array([[hyper.p00, hyper.p10], [hyper.p01, hyper.p11]])  # trans[a, b] = P(b | a)
    like = np.stack([1.0 - pi_out, pi_out], axis=-1)  # (L, K, 2)

    alpha = np.empty((n_taps, n_frames, 2))
    a0 = np.array([1.0 - hyper.lam, hyper.lam]) * like[:, 0]
    alpha[:, 0] = a0 / a0.sum(axis=1, keepdims=True)
    for k in range(1, n_frames):
        a = (alpha[:, k - 1] @ trans) * like[:, k]
        alpha[:, k] = a / a.sum(axis=1, keepdims=True)

    beta = np.ones((n_taps, n_frames, 2))
    for k in range(n_frames - 2, -1, -1):
        b = (like[:, k + 1] * beta[:, k + 1]) @ trans.T
        beta[:, k] = b / b.sum(axis=1, keepdims=True)

    post = alpha * beta
    post /= post.sum(axis=2, keepdims=True)
    marginal = post[..., 1]

    if n_frames > 1:
        # joint over (s[k], s[k+1]) up to normalization
        joint = alpha[:, :-1, :, None] * trans[None, None] * (like[:, 1:] * beta[:, 1:])[:, :, None, :]
        joint /= joint.sum(axis=(2, 3), keepdims=True)
        pair = joint[..., 1, 1]
    else:
        pair = np.zeros((n_taps, 0))
    return marginal, pair


def smooth_amplitude(xi_out: np.ndarray, psi_out: np.ndarray, hyper: HyperParams):
    """Kalman filter plus RTS smoother on each row of ``(L, K)`` Gaussian likelihoods.

    Returns ``(mean (L, K), var (L, K), cross (L, K-1))`` where
    ``cross[:, k] = E[theta[k+1] conj(theta[k])]``.
    """
    xi_out = np.asarray(xi_out, complex)
    psi_out = np.asarray(psi_out, float)
    n_taps, n_frames = xi_out.shape
    a = 1.0 - hyper.varrho
    d = hyper.varrho * hyper.zeta
    q = hyper.transition_var

    m_f = np.empty((n_taps, n_frames), complex)
    v_f = np.empty((n_taps, n_frames))
    m_p = np.empty((n_taps, n_frames), complex)
    v_p = np.empty((n_taps, n_frames))
    m_p[:, 0] = hyper.zeta
    v_p[:, 0] = hyper.sigma_sq
    for k in range(n_frames):
        if k > 0:
            m_p[:, k] = a * m_f[:, k - 1] + d
            v_p[:, k] = a * a * v_f[:, k - 1] + q
        v_p[:, k] = np.maximum(v_p[:, k], VAR_FLOOR)
        m_f[:, k], v_f[:, k] = gaussian_product(m_p[:, k], v_p[:, k], xi_out[:, k], psi_out[:, k])

    m_s = m_f.copy()
    v_s = v_f.copy()
    cross = np.empty((n_taps, max(n_frames - 1, 0)), complex)
    for k in range(n_frames - 2, -1, -1):
        gain = v_f[:, k] * a / v_p[:, k + 1]
        m_s[:, k] = m_f[:, k] + gain * (m_s[:, k + 1] - m_p[:, k + 1])
        v_s[:, k] = v_f[:, k] + gain**2 * (v_s[:, k + 1] - v_p[:, k + 1])
        cross[:, k] = gain * v_s[:, k + 1] + m_s[:, k + 1] * np.conj(m_s[:, k])
    return m_s, np.maximum(v_s, 0.0), cross


def collect_moments(
    msgs: FrameMessages,
    hyper: HyperParams,
    forward_done: bool = True,
    backward_done: bool = True,
) -> SmoothedMoments:
    """Smoothed support and amplitude moments from the ``(K, L)`` tap-factor messages."""
    n_frames = msgs.pi_out.shape[0]
    if not forward_done or (n_frames > 1 and not backward_done):
        raise RuntimeError("moments need a completed forward and backward propagation")
    marginal, pair = smooth_support(msgs.pi_out.T, hyper)
    mean, var, cross = smooth_amplitude(msgs.xi_out.T, msgs.psi_out.T, hyper)
    return SmoothedMoments(marginal, pair, mean, var, cross)


def em_update(moments: SmoothedMoments, hyper: HyperParams) -> HyperParams:
    """One M-step; ``zeta``, ``varrho`` and ``rho`` are updated in that order."""
    s = moments.s_marginal
    n_taps, n_frames = s.shape
    lam = float(np.clip(s[:, 0].mean(), *PROB_RANGE))
    if n_frames < 2:
        return hyper.replace(lam=lam)

    prev_on = s[:, :-1].sum()
    p01 = hyper.p01 if prev_on <= 0 else (prev_on - moments.s_pair.sum()) / prev_on
    p01 = float(np.clip(p01, *PROB_RANGE))
    # the steady-state switch-on probability must stay a probability
    p01 = min(p01, (1.0 - lam) / lam * PROB_RANGE[1])

    mu, v, cross = moments.theta_mean, moments.theta_var, moments.theta_cross
    second = v + np.abs(mu) ** 2
    n = n_taps * (n_frames - 1)
    varrho, rho = hyper.varrho, hyper.rho
    sigma_sq = max(hyper.sigma_sq, VAR_FLOOR)

    zeta = (np.sum(mu[:, 1:] - (1.0 - varrho) * mu[:, :-1]) / (varrho * rho) + mu[:, 0].sum() / sigma_sq) / (
        n / rho + n_taps / sigma_sq
    )

    b = (2.0 / rho) * np.sum(cross.real - (np.conj(mu[:, 1:] - mu[:, :-1]) * zeta).real - second[:, :-1])
    c = (2.0 / rho) * np.sum(second[:, 1:] + second[:, :-1] - 2.0 * cross.real)
    disc = b * b + 8.0 * n * c
    if disc < 0 or not np.isfinite(disc):
        log.warning("negative discriminant in the varrho update; keeping %g", varrho)
    else:
        varrho = float(np.clip((b + np.sqrt(disc)) / (4.0 * n), *VARRHO_RANGE))

    a = 1.0 - varrho
    d = varrho * zeta
    # E|theta[k] - a theta[k-1] - d|^2
    resid = (
        second[:, 1:]
        + a * a * second[:, :-1]
        + abs(d) ** 2
        - 2.0 * a * cross.real
        - 2.0 * (np.conj(d) * mu[:, 1:]).real
        + 2.0 * a * (np.conj(d) * mu[:, :-1]).real
    )
    rho = float(max(resid.sum() / (n * varrho**2), RHO_FLOOR))
    return HyperParams(p01=p01, lam=lam, zeta=complex(zeta), varrho=varrho, rho=rho)
