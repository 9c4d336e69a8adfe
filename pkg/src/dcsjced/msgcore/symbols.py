"""Soft symbol <-> bit conversions used by the equalizer and the turbo loop."""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from ..fec import LLR_CLAMP
from ..modem import SymbolAlphabet

VAR_FLOOR = 1e-12


def bit_log_probs(llr: np.ndarray, alphabet: SymbolAlphabet) -> np.ndarray:
    """``log p(c_q = chi_{n,q})`` as an ``(N, 2^Q, Q)`` array from ``(N, Q)`` LLRs."""
    llr = np.asarray(llr, float).reshape(-1, alphabet.bits_per_symbol)
    sign = 1.0 - 2.0 * alphabet.labels  # +1 for bit 0
    # p(c = chi) = 1 / (1 + exp(-(+-L)))
    return -np.logaddexp(0.0, -sign[None, :, :] * llr[:, None, :])


def apriori_symbol_probs(llr: np.ndarray, alphabet: SymbolAlphabet, log: bool = False) -> np.ndarray:
    """Symbol pmf ``(N, 2^Q)`` implied by independent bit LLRs."""
    logp = bit_log_probs(llr, alphabet).sum(axis=2)
    logp = logp - logsumexp(logp, axis=1, keepdims=True)
    return logp if log else np.exp(logp)


def symbol_posterior(r_hat, r_var, log_prior, alphabet: SymbolAlphabet):
    """Posterior mean and variance of symbols given the extrinsic Gaussian
    ``CN(r_hat, r_var)`` and a prior log-pmf ``(N, 2^Q)`` (``None`` = uniform)."""
    r_hat = np.asarray(r_hat, complex)
    r_var = np.asarray(r_var, float)
    dist = np.abs(alphabet.points[None, :] - r_hat[:, None]) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        logits = -dist / r_var[:, None]
    logits = np.where(np.isnan(logits), 0.0, logits)
    if log_prior is not None:
        logits = logits + log_prior
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    x_hat = p @ alphabet.points
    x_var = np.einsum("na,na->n", p, np.abs(alphabet.points[None, :] - x_hat[:, None]) ** 2)
    return x_hat, np.maximum(x_var, VAR_FLOOR), p


def extrinsic_llr(r_hat, r_var, prior_llr, alphabet: SymbolAlphabet, clamp: float = LLR_CLAMP) -> np.ndarray:
    """Extrinsic bit LLRs (flattened, symbol-major) from the Gaussian symbol
    extrinsics and the a priori LLRs of the *other* bits of each symbol."""
    r_hat = np.asarray(r_hat, complex)
    r_var = np.asarray(r_var, float)
    n, q = r_hat.size, alphabet.bits_per_symbol
    dist = np.abs(alphabet.points[None, :] - r_hat[:, None]) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        metric = -dist / r_var[:, None]
    metric = np.where(np.isnan(metric), 0.0, metric)
    if prior_llr is None:
        bitlp = np.zeros((n, alphabet.size, q))
    else:
        bitlp = bit_log_probs(prior_llr, alphabet)
    out = np.empty((n, q))
    for b in range(q):
        # the bit's own prior is excluded
        score = metric + _sum_except(bitlp, b)
        zero = alphabet.labels[:, b] == 0
        out[:, b] = logsumexp(score[:, zero], axis=1) - logsumexp(score[:, ~zero], axis=1)
    out = np.where(np.isnan(out), 0.0, out)
    return np.clip(out, -clamp, clamp).reshape(-1)


def _sum_except(bitlp, b):
    keep = [i for i in range(bitlp.shape[2]) if i != b]
    return bitlp[:, :, keep].sum(axis=2)
