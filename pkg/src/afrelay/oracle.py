"""Exact posteriors for small instances.

The relay signal ``y`` integrates out in closed form, leaving
``z | x ~ CN(C H x, sigma1_sq C C^H + sigma2_sq I)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.special import logsumexp

from .messages import V_MIN

__all__ = [
    "MAX_CANDIDATES",
    "EnumerationTooLarge",
    "ExactPosterior",
    "compound_covariance",
    "exact_discrete_posterior",
    "exact_gaussian_posterior",
]

MAX_CANDIDATES = 10**6
_CHUNK = 1 << 14


class EnumerationTooLarge(ValueError):
    pass


@dataclass
class ExactPosterior:
    per_symbol_marginals: np.ndarray
    posterior_mean: np.ndarray
    posterior_mmse: float


def compound_covariance(C, sigma1_sq, sigma2_sq, floor=V_MIN):
    """Covariance of ``C w + n``; noise variances below ``floor`` are floored."""
    s1 = max(float(sigma1_sq), floor)
    s2 = max(float(sigma2_sq), floor)
    return s1 * (C @ C.conj().T) + s2 * np.eye(C.shape[0])


def _whitener(C, sigma1_sq, sigma2_sq):
    try:
        low = sla.cholesky(compound_covariance(C, sigma1_sq, sigma2_sq), lower=True)
    except np.linalg.LinAlgError as err:
        raise ValueError(f"compound noise covariance is singular: {err}") from err
    return low


def exact_discrete_posterior(z, H, C, sigma1_sq, sigma2_sq, prior):
    """Brute-force marginal posteriors over all ``K**L`` symbol vectors."""
    L = H.shape[1]
    K = len(prior.points)
    total = K**L
    if total > MAX_CANDIDATES:
        raise EnumerationTooLarge(
            f"{K}**{L} = {total} candidates exceeds the enumeration bound {MAX_CANDIDATES}"
        )
    low = _whitener(C, sigma1_sq, sigma2_sq)
    zw = sla.solve_triangular(low, z, lower=True)
    Gw = sla.solve_triangular(low, C @ H, lower=True)
    log_p = np.log(prior.probs)

    idx_all = np.array(list(itertools.product(range(K), repeat=L)), dtype=np.intp).reshape(total, L)
    logpost = np.empty(total)
    for start in range(0, total, _CHUNK):
        idx = idx_all[start:start + _CHUNK]
        X = prior.points[idx]
        resid = zw[:, None] - Gw @ X.T
        logpost[start:start + _CHUNK] = -np.sum(np.abs(resid) ** 2, axis=0) + log_p[idx].sum(axis=1)

    post = np.exp(logpost - logsumexp(logpost))
    marg = np.zeros((L, K))
    for i in range(L):
        marg[i] = np.bincount(idx_all[:, i], weights=post, minlength=K)
    marg /= marg.sum(axis=1, keepdims=True)
    mean = marg @ prior.points
    second = marg @ (np.abs(prior.points) ** 2)
    mmse = float(np.mean(second - np.abs(mean) ** 2))
    return ExactPosterior(marg, mean, mmse)


def exact_gaussian_posterior(z, H, C, sigma1_sq, sigma2_sq, prior_var=1.0):
    """Closed-form posterior of ``x ~ CN(0, prior_var I)``.

    Returns
    -------
    mean : complex ndarray, shape (L,)
    covariance_diag : real ndarray, shape (L,)
    mmse : float
        ``trace(covariance) / L``.
    """
    L = H.shape[1]
    low = _whitener(C, sigma1_sq, sigma2_sq)
    Gw = sla.solve_triangular(low, C @ H, lower=True)
    zw = sla.solve_triangular(low, z, lower=True)
    precision = Gw.conj().T @ Gw + np.eye(L) / prior_var
    cf = sla.cho_factor(precision, lower=True)
    mean = sla.cho_solve(cf, Gw.conj().T @ zw)
    cov = sla.cho_solve(cf, np.eye(L, dtype=complex))
    cov_diag = np.real(np.diag(cov))
    return mean, cov_diag, float(cov_diag.sum() / L)
