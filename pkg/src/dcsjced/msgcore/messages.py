"""Cross-frame messages on the support and amplitude chains.

Per tap, the factor ``f(h, s, theta) = delta(h - s theta)`` ties the per-frame
bilinear inference to two chains running across frames: a Bernoulli chain on
the support ``s`` and a Gauss-Markov chain on the amplitude ``theta``. All
functions here are elementwise over taps and broadcast over leading axes.

Variances use ``np.inf`` to mean "uninformative".
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from scipy.special import expit, logsumexp

from ..channel import HyperParams

VAR_FLOOR = 1e-12
MIXTURE_EPS = 1e-7


def log_cn_zero(mean, var):
    """``log CN(0; mean, var)`` for circular complex Gaussians."""
    return -np.log(np.pi * var) - np.abs(mean) ** 2 / var


def gaussian_product(m1, v1, m2, v2):
    """Mean and variance of ``CN(m1, v1) * CN(m2, v2)`` (normalized)."""
    m1, v1, m2, v2 = np.broadcast_arrays(
        np.asarray(m1, dtype=complex), np.asarray(v1, float), np.asarray(m2, dtype=complex), np.asarray(v2, float)
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        prec = 1.0 / v1 + 1.0 / v2
        var = 1.0 / prec
        w1 = np.where(np.isinf(v1), 0.0, 1.0 / v1)
        w2 = np.where(np.isinf(v2), 0.0, 1.0 / v2)
        mean = var * (w1 * m1 + w2 * m2)
    # both inputs flat: keep the product flat, centre arbitrary
    flat = prec == 0
    if np.any(flat):
        mean = np.where(flat, 0.0, mean)
    return mean, var


@dataclass
class FrameMessages:
    """Message parameters for one frame (arrays of length L) or a stack (K, L).

    ``lam_fwd``/``eta_fwd``/``kappa_fwd`` arrive from the previous frame,
    ``lam_bwd``/``eta_bwd``/``kappa_bwd`` from the next one. ``pi_in``,
    ``xi_in``, ``psi_in`` form the local Bernoulli-Gaussian prior of the taps
    and ``pi_out``, ``xi_out``, ``psi_out`` are the messages from the tap
    factor back to the support and amplitude variables.
    """

    lam_fwd: np.ndarray
    lam_bwd: np.ndarray
    eta_fwd: np.ndarray
    kappa_fwd: np.ndarray
    eta_bwd: np.ndarray
    kappa_bwd: np.ndarray
    pi_in: np.ndarray
    xi_in: np.ndarray
    psi_in: np.ndarray
    pi_out: np.ndarray
    xi_out: np.ndarray
    psi_out: np.ndarray

    @classmethod
    def initial(cls, n_frames: int, n_taps: int, hyper: HyperParams) -> "FrameMessages":
        """Stationary forward prior everywhere, flat backward and likelihood messages."""
        shape = (n_frames, n_taps)
        full = lambda v, dt=float: np.full(shape, v, dtype=dt)  # noqa: E731
        return cls(
            lam_fwd=full(hyper.lam),
            lam_bwd=full(0.5),
            eta_fwd=full(hyper.zeta, complex),
            kappa_fwd=full(hyper.sigma_sq),
            eta_bwd=full(0, complex),
            kappa_bwd=full(np.inf),
            pi_in=full(hyper.lam),
            xi_in=full(hyper.zeta, complex),
            psi_in=full(hyper.sigma_sq),
            pi_out=full(0.5),
            xi_out=full(0, complex),
            psi_out=full(np.inf),
        )

    def copy(self) -> "FrameMessages":
        return FrameMessages(**{f.name: getattr(self, f.name).copy() for f in fields(self)})


def into_stage(lam_fwd, lam_bwd, eta_fwd, kappa_fwd, eta_bwd, kappa_bwd):
    """Local prior ``(pi_in, xi_in, psi_in)`` from the messages of both neighbours."""
    lam_fwd = np.asarray(lam_fwd, float)
    lam_bwd = np.asarray(lam_bwd, float)
    on = lam_fwd * lam_bwd
    off = (1.0 - lam_fwd) * (1.0 - lam_bwd)
    with np.errstate(invalid="ignore"):
        pi_in = np.where(on + off > 0, on / (on + off), 0.5)
    xi_in, psi_in = gaussian_product(eta_fwd, kappa_fwd, eta_bwd, kappa_bwd)
    return pi_in, xi_in, np.maximum(psi_in, VAR_FLOOR)


@dataclass
class PosteriorChannel:
    pi: np.ndarray
    gamma: np.ndarray
    nu: np.ndarray


def channel_posterior(pi_in, xi_in, psi_in, q_hat, q_var):
    """Posterior of each tap from its Bernoulli-Gaussian local prior and the
    extrinsic Gaussian ``CN(q_hat, q_var)``.

    Returns ``(PosteriorChannel, h_hat, h_var)``.
    """
    pi_in = np.asarray(pi_in, float)
    nu = 1.0 / (1.0 / q_var + 1.0 / psi_in)
    gamma = nu * (q_hat / q_var + xi_in / psi_in)
    with np.errstate(divide="ignore"):
        log_off = np.log1p(-pi_in) + log_cn_zero(q_hat, q_var)
        log_on = np.log(pi_in) + log_cn_zero(xi_in - q_hat, psi_in + q_var)
    diff = log_on - log_off
    pi = expit(np.where(np.isnan(diff), 0.0, diff))
    h_hat = pi * gamma
    h_var = pi * nu + pi * (1.0 - pi) * np.abs(gamma) ** 2
    return PosteriorChannel(pi, gamma, nu), h_hat, np.maximum(h_var, VAR_FLOOR)


def out_stage(pi_in, xi_in, psi_in, q_hat, q_var, eps: float = MIXTURE_EPS):
    """Messages from the tap factor to its support and amplitude variables.

    The support message is exact. The amplitude message is a constant plus a
    Gaussian; it is collapsed to one Gaussian with the second-order Taylor
    construction that writes the constant as a Gaussian of width ``1/eps``.
    """
    q_hat = np.asarray(q_hat, complex)
    q_var = np.asarray(q_var, float)
    pi_in = np.asarray(pi_in, float)

    log_on = log_cn_zero(q_hat - xi_in, q_var + psi_in)
    log_off = log_cn_zero(q_hat, q_var)
    pi_out = expit(log_on - log_off)

    eps2 = eps * eps
    omega = eps2 * pi_in / (1.0 - pi_in + eps2 * pi_in)
    a = eps2 * (1.0 - omega)
    abar = omega
    b = (eps2 / q_var) * np.abs((1.0 - 1.0 / eps) * q_hat) ** 2
    sig_r = -(2.0 * eps2 / q_var) * (1.0 - 1.0 / eps) * q_hat.real
    sig_i = -(2.0 * eps2 / q_var) * (1.0 - 1.0 / eps) * q_hat.imag

    with np.errstate(divide="ignore"):
        la = np.log(a)
        lab = np.log(abar)
    mid = np.maximum(eps2 + 1.0 - 0.5 * q_var * sig_r**2, 1e-300)
    # numerator and denominator of the variance, both scaled by exp(-b)
    log_num = logsumexp(np.stack([2 * la - 2 * b, la + lab - b, 2 * lab]), axis=0)
    log_den = logsumexp(np.stack([np.log(eps2) + 2 * la - 2 * b, la + lab - b + np.log(mid), 2 * lab]), axis=0)
    psi_out = np.exp(log_num - log_den) * q_var
    # a e^{-b} / (a e^{-b} + abar)
    with np.errstate(invalid="ignore"):
        w = expit(la - b - lab)
    w = np.where(np.isnan(w), 1.0, w)
    xi_out = (q_hat.real + 0.5 * psi_out * w * sig_r) + 1j * (q_hat.imag + 0.5 * psi_out * w * sig_i)
    return pi_out, xi_out, np.maximum(psi_out, VAR_FLOOR)


def across_forward(lam_fwd, pi_out, eta_fwd, kappa_fwd, xi_out, psi_out, hyper: HyperParams):
    """Messages into frame k+1 from frame k: ``(lam_fwd, eta_fwd, kappa_fwd)``."""
    on = pi_out * lam_fwd
    off = (1.0 - pi_out) * (1.0 - lam_fwd)
    lam_next = (hyper.p11 * on + hyper.p10 * off) / (on + off)
    c, cvar = gaussian_product(eta_fwd, kappa_fwd, xi_out, psi_out)
    a = 1.0 - hyper.varrho
    eta_next = a * c + hyper.varrho * hyper.zeta
    kappa_next = a * a * cvar + hyper.transition_var
    return lam_next, eta_next, np.maximum(kappa_next, VAR_FLOOR)


def across_backward(lam_bwd, pi_out, eta_bwd, kappa_bwd, xi_out, psi_out, hyper: HyperParams):
    """Messages into frame k from frame k+1: ``(lam_bwd, eta_bwd, kappa_bwd)``.

    Inputs are the backward messages and tap-factor messages of frame k+1.
    """
    on = pi_out * lam_bwd
    off = (1.0 - pi_out) * (1.0 - lam_bwd)
    to_on = hyper.p11 * on + hyper.p01 * off
    to_off = hyper.p10 * on + hyper.p00 * off
    lam_prev = to_on / (to_on + to_off)

    c, cvar = gaussian_product(eta_bwd, kappa_bwd, xi_out, psi_out)
    a = 1.0 - hyper.varrho
    if a == 0.0:
        shape = np.shape(c)
        return lam_prev, np.zeros(shape, complex), np.full(shape, np.inf)
    eta_prev = (c - hyper.varrho * hyper.zeta) / a
    kappa_prev = (cvar + hyper.transition_var) / (a * a)
    flat = np.isinf(kappa_prev)
    if np.any(flat):
        eta_prev = np.where(flat, 0.0, eta_prev)
    return lam_prev, eta_prev, np.maximum(kappa_prev, VAR_FLOOR)
