"""Independent reference implementations used as test oracles.

Everything here is written the slow, obvious way (dense tensors, explicit
enumeration, numerical quadrature) so it shares no code path with the library.
"""

import itertools
from functools import lru_cache

import numpy as np
from scipy.special import roots_legendre


# -- bilinear core via explicit selection tensors ---------------------------

def selection_tensor(m, n_taps):
    """``Z[m, i, j] = 1`` iff output sample ``m`` sees tap ``i`` times symbol ``j``."""
    z = np.zeros((m, n_taps, m))
    for mm in range(m):
        for i in range(n_taps):
            j = mm - i
            if 0 <= j < m:
                z[mm, i, j] = 1.0
    return z


def z_conditional_dense(h_hat, h_var, x_hat, x_var, s_hat):
    z = selection_tensor(x_hat.size, h_hat.size)
    z2 = z**2
    z_bar = np.einsum("mij,i,j->m", z, h_hat, x_hat)
    p_var_bar = np.einsum("mij,i,j->m", z2, np.abs(h_hat) ** 2, x_var) + np.einsum(
        "mij,i,j->m", z2, h_var, np.abs(x_hat) ** 2
    )
    p_var = p_var_bar + np.einsum("mij,i,j->m", z2, h_var, x_var)
    return z_bar - s_hat * p_var_bar, p_var, p_var_bar, z_bar


def extrinsic_update_dense(h_hat, h_var, x_hat, x_var, s_hat, s_var):
    z = selection_tensor(x_hat.size, h_hat.size)
    z2 = z**2
    zi = np.einsum("mij,j->mi", z, x_hat)  # partial output with tap i removed from the sum
    zj = np.einsum("mij,i->mj", z, h_hat)
    q_var = 1.0 / np.einsum("m,mi->i", s_var, np.abs(zi) ** 2)
    q_hat = h_hat * (1.0 - q_var * np.einsum("m,mij,j->i", s_var, z2, x_var)) + q_var * np.einsum(
        "m,mi->i", s_hat, np.conj(zi)
    )
    r_var = 1.0 / np.einsum("m,mj->j", s_var, np.abs(zj) ** 2)
    r_hat = x_hat * (1.0 - r_var * np.einsum("m,mij,i->j", s_var, z2, h_var)) + r_var * np.einsum(
        "m,mj->j", s_hat, np.conj(zj)
    )
    return q_hat, q_var, r_hat, r_var


# -- quadrature for the amplitude messages ----------------------------------

@lru_cache(maxsize=None)
def _nodes(n):
    return roots_legendre(n)


def _legendre(n, lo, hi):
    x, w = _nodes(n)
    return 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


def _real_gauss(x, mean, var):
    return np.exp(-((x - mean) ** 2) / var) / np.sqrt(np.pi * var)


def across_forward_quad(eta, kappa, xi, psi, varrho, rho, zeta, n=400):
    """Mean/variance of the forward amplitude message by 1-D quadrature per component.

    The message into the next frame is ``int p(theta'|theta) CN(theta; eta, kappa)
    CN(theta; xi, psi) dtheta``; for a circular complex Gaussian the real and
    imaginary parts factor, each with half the variance.
    """
    a = 1.0 - varrho
    d = varrho * zeta
    out_mean = []
    var_parts = []
    for part in (np.real, np.imag):
        span = 12.0 * np.sqrt(min(kappa, psi) / 2.0) + abs(part(eta)) + abs(part(xi))
        x, w = _legendre(n, -span, span)
        dens = _real_gauss(x, part(eta), kappa) * _real_gauss(x, part(xi), psi)
        z = np.sum(w * dens)
        m1 = np.sum(w * dens * x) / z
        m2 = np.sum(w * dens * x * x) / z
        out_mean.append(a * m1 + part(d))
        var_parts.append(a * a * (m2 - m1 * m1))
    mean = out_mean[0] + 1j * out_mean[1]
    # each real component carries half of the complex variance
    var = (var_parts[0] + var_parts[1]) + varrho**2 * rho
    return mean, var


def across_backward_quad(eta_b, kappa_b, xi, psi, varrho, rho, zeta, n=400):
    """Backward amplitude message by nested quadrature.

    ``m(theta) = int CN(theta'; a theta + d, q) CN(theta'; eta_b, kappa_b)
    CN(theta'; xi, psi) dtheta'`` is integrated numerically on a grid of
    ``theta`` and its (Gaussian) shape is summarized by mean and variance.
    """
    a = 1.0 - varrho
    d = varrho * zeta
    q = varrho**2 * rho
    prec = 1.0 / kappa_b + 1.0 / psi
    c_var = 1.0 / prec
    c = c_var * (eta_b / kappa_b + xi / psi)
    means, var_parts = [], []
    for part in (np.real, np.imag):
        centre = (part(c) - part(d)) / a
        width = np.sqrt((c_var + q) / 2.0) / a
        t, wt = _legendre(n, centre - 12 * width, centre + 12 * width)
        inner_span = 12.0 * np.sqrt((c_var + q) / 2.0)
        u, wu = _legendre(n, part(c) - inner_span - abs(a * width * 12), part(c) + inner_span + abs(a * width * 12))
        # m(t) = int N(u; a t + d, q/2) N(u; c, c_var/2) du, per component
        trans = _real_gauss(u[None, :], a * t[:, None] + part(d), q)
        msg = _real_gauss(u, part(c), c_var)
        m_t = trans @ (wu * msg)
        z = np.sum(wt * m_t)
        m1 = np.sum(wt * m_t * t) / z
        m2 = np.sum(wt * m_t * t * t) / z
        means.append(m1)
        var_parts.append(m2 - m1 * m1)
    return means[0] + 1j * means[1], var_parts[0] + var_parts[1]


def mixture_product_moments(pi_in, q_hat, q_var, eta, kappa, n=160):
    """Mean and variance of ``CN(theta; eta, kappa) * [(1 - pi) CN(0; q, v) + pi CN(theta; q, v)]``
    on a 2-D grid over the real and imaginary parts of ``theta``."""
    span = 10.0 * np.sqrt(kappa)
    xr, wr = _legendre(n, eta.real - span, eta.real + span)
    xi, wi = _legendre(n, eta.imag - span, eta.imag + span)
    th = xr[:, None] + 1j * xi[None, :]
    w = wr[:, None] * wi[None, :]
    prior = np.exp(-np.abs(th - eta) ** 2 / kappa) / (np.pi * kappa)
    off = np.exp(-np.abs(q_hat) ** 2 / q_var) / (np.pi * q_var)
    on = np.exp(-np.abs(th - q_hat) ** 2 / q_var) / (np.pi * q_var)
    dens = prior * ((1 - pi_in) * off + pi_in * on)
    z = np.sum(w * dens)
    mean = np.sum(w * dens * th) / z
    var = np.sum(w * dens * np.abs(th - mean) ** 2) / z
    return mean, var


# -- smoothing by enumeration / dense conditioning --------------------------

def support_posterior_enum(pi_out, lam, p01):
    """Marginals and adjacent pair moments of a 2-state chain by enumerating all paths."""
    k = len(pi_out)
    p10 = lam * p01 / (1 - lam)
    trans = {(1, 1): 1 - p01, (1, 0): p01, (0, 1): p10, (0, 0): 1 - p10}
    marg = np.zeros(k)
    pair = np.zeros(k - 1)
    total = 0.0
    for path in itertools.product((0, 1), repeat=k):
        p = lam if path[0] else 1 - lam
        for t in range(1, k):
            p *= trans[(path[t - 1], path[t])]
        for t in range(k):
            p *= pi_out[t] if path[t] else 1 - pi_out[t]
        total += p
        marg += p * np.array(path)
        pair += p * np.array([path[t] * path[t + 1] for t in range(k - 1)])
    return marg / total, pair / total


def amplitude_posterior_dense(xi_out, psi_out, varrho, rho, zeta):
    """Joint Gaussian conditioning for a real-valued Gauss-Markov chain.

    Works on one real component (complex variances are halved); returns the
    posterior mean vector and covariance matrix of that component.
    """
    k = len(xi_out)
    a = 1.0 - varrho
    # stationary variance of one component; the covariance decays as a^|s-t|
    sig2 = varrho * rho / (2 - varrho) / 2.0
    mean = np.full(k, zeta)
    cov = np.zeros((k, k))
    for s in range(k):
        for t in range(k):
            cov[s, t] = sig2 * a ** abs(s - t)
    obs_var = np.diag(np.asarray(psi_out) / 2.0)
    gain = cov @ np.linalg.inv(cov + obs_var)
    post_mean = mean + gain @ (np.asarray(xi_out) - mean)
    post_cov = cov - gain @ cov
    return post_mean, post_cov


# -- detection --------------------------------------------------------------

def genie_matched_filter_decisions(y, h, x_true, data_idx, points):
    """Per-symbol MAP decisions with every other symbol's interference removed.

    With the interference cancelled the observation of symbol ``n`` collapses
    to a matched-filter statistic with white Gaussian noise, for which MAP
    detection with a uniform prior is nearest-point.
    """
    m = y.size
    z = np.convolve(x_true, h)[:m]
    out = np.empty(len(data_idx), complex)
    for t, n in enumerate(data_idx):
        own = np.zeros(m, complex)
        seg = h[: max(0, min(h.size, m - n))]
        own[n : n + seg.size] = seg * x_true[n]
        clean = y - (z - own)  # only the target's contribution plus noise
        stat = np.vdot(seg, clean[n : n + seg.size]) / np.vdot(seg, seg)
        out[t] = points[np.argmin(np.abs(points - stat))]
    return out
