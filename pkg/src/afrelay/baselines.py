"""Reference detectors the joint detector is compared against.

* ``lmmse_plus_ls``: least squares on the second hop, LMMSE on the first.
* ``single_lmmse``: one LMMSE over ``z = C H x + (C w + n)`` with the
  compound noise treated as white.
* ``ep_plus_ls``: least squares on the second hop, single-hop EP on the first.
"""

from __future__ import annotations

import enum

import numpy as np
import scipy.linalg as sla

from . import detector
from .detector import DetectorFailure, DetectorOptions, DetectorResult
from .messages import GaussianMessage, SafeguardCounter, clip_variance, ext
from .prior import denoise_any

__all__ = [
    "BaselineKind",
    "BaselineFailure",
    "ls_second_hop",
    "lmmse_plus_ls",
    "single_lmmse",
    "ep_single_hop",
    "ep_plus_ls",
]


class BaselineKind(enum.Enum):
    LMMSE_PLUS_LS = "lmmse_ls"
    SINGLE_LMMSE = "single_lmmse"
    EP_PLUS_LS = "ep_ls"


class BaselineFailure(RuntimeError):
    pass


def _gram_inverse(C):
    # (C^H C)^-1 via Cholesky, refusing numerically rank-deficient C
    gram = C.conj().T @ C
    try:
        low = sla.cholesky(gram, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as err:
        raise BaselineFailure(f"second-hop channel is rank deficient: {err}") from err
    d = np.abs(np.diag(low))
    if d.min() <= 1e-7 * d.max():
        raise BaselineFailure("second-hop channel is numerically rank deficient")
    return sla.cho_solve((low, True), np.eye(gram.shape[0], dtype=gram.dtype))


def ls_second_hop(z, C, sigma2_sq=1.0):
    """Least-squares estimate of the relay signal.

    Returns
    -------
    y_hat : complex ndarray, shape (M,)
    err_cov_diag : real ndarray, shape (M,)
        ``sigma2_sq * diag((C^H C)^-1)``.
    """
    y_hat, G = _ls(z, C)
    return y_hat, sigma2_sq * np.real(np.diag(G))


def _ls(z, C):
    N, M = C.shape
    if N < M:
        raise BaselineFailure("least squares needs N >= M")
    G = _gram_inverse(C)
    return G @ (C.conj().T @ z), G


def lmmse_plus_ls(z, H, C, sigma1_sq, sigma2_sq, whiten=False):
    """LMMSE on the LS relay estimate ``y_hat = H x + (w + e)``.

    The error covariance is ``sigma1_sq I + sigma2_sq (C^H C)^-1``; with
    ``whiten`` it is replaced by its average diagonal times the identity.
    """
    M = H.shape[0]
    y_hat, G = _ls(z, C)
    Sigma = sigma2_sq * G
    if whiten:
        Sigma = np.mean(np.real(np.diag(Sigma))) * np.eye(M)
    Sigma = Sigma + sigma1_sq * np.eye(M)
    R = H @ H.conj().T + Sigma
    return H.conj().T @ sla.solve(R, y_hat, assume_a="her")


def single_lmmse(z, H, C, sigma1_sq, sigma2_sq):
    """LMMSE on the compound channel ``G = C H`` with white equivalent noise.

    The equivalent variance is the average per-antenna power of
    ``C w + n``, i.e. ``sigma1_sq ||C||_F^2 / N + sigma2_sq``.
    """
    N = C.shape[0]
    G = C @ H
    L = G.shape[1]
    s_eq = sigma1_sq * np.linalg.norm(C) ** 2 / N + sigma2_sq
    # push-through form: L x L instead of N x N
    A = G.conj().T @ G + s_eq * np.eye(L)
    return sla.solve(A, G.conj().T @ z, assume_a="her")


def ep_single_hop(y_obs, H, noise_var, prior, options=None):
    """Expectation propagation for ``y_obs = H x + noise``.

    The linear stage is the mixing module of the joint detector with the
    observation standing in for the message on ``t``; the prior stage is the
    same scalar denoiser.

    Parameters
    ----------
    y_obs : complex ndarray, shape (M,)
    H : complex ndarray, shape (M, L)
    noise_var : float or real ndarray, shape (M,)
    prior : Constellation or GaussianPrior
    options : DetectorOptions, optional
    """
    opts = options or DetectorOptions()
    M, L = H.shape
    vmin, vmax, rho = opts.v_min, opts.v_max, opts.damping
    noise = np.maximum(np.broadcast_to(np.asarray(noise_var, dtype=float), (M,)), vmin)
    counter = SafeguardCounter()
    plus0 = GaussianMessage.flat(L, 1.0)
    minus0 = None
    result = DetectorResult(x_hat=np.zeros(L, dtype=complex))

    for k in range(1, opts.K + 1):
        try:
            x_hat, v_x = detector.module_c_back(H, y_obs, noise, plus0.mean, plus0.variance)
        except DetectorFailure as err:
            raise DetectorFailure(str(err), k, result.x_hat) from err
        x_minus = clip_variance(GaussianMessage(x_hat, v_x), vmin, vmax)
        minus0 = detector._damp(minus0, ext(x_minus, plus0, vmin, vmax, counter), rho)

        x_post, v_post = denoise_any(minus0.mean, minus0.variance, prior, counter)
        x_plus = clip_variance(GaussianMessage(x_post, v_post), vmin, vmax)
        plus0 = detector._damp(plus0, ext(x_plus, minus0, vmin, vmax, counter), rho)

        if not np.all(np.isfinite(x_plus.mean)):
            raise DetectorFailure("non-finite estimate", k, result.x_hat)
        previous = result.x_hat
        result.x_hat = x_plus.mean
        result.per_iteration.append((x_plus.mean, float(np.mean(x_plus.variance))))
        result.iterations_run = k
        if opts.stop_tol and k > 1 and np.sum(np.abs(x_plus.mean - previous) ** 2) / L < opts.stop_tol:
            break

    result.safeguard_count = counter.count
    return result


def ep_plus_ls(z, H, C, sigma1_sq, sigma2_sq, prior, options=None, return_result=False):
    """Single-hop EP on the LS relay estimate.

    The LS error is whitened to ``sigma2_sq * mean(diag((C^H C)^-1))`` and
    added to the first-hop noise.
    """
    y_hat, err = ls_second_hop(z, C, sigma2_sq)
    res = ep_single_hop(y_hat, H, sigma1_sq + np.mean(err), prior, options)
    return res if return_result else res.x_hat
