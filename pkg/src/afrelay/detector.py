"""Joint message-passing detector for a dual-hop AF relay link.

The factor graph is the chain

    p(x) -- delta(t - H x) -- CN(y; t, sigma1_sq) -- CN(z; C y, sigma2_sq)
    [D]          [C]               [B]                    [A]

Messages on ``x`` (length L), ``t`` and ``y`` (length M) are diagonal complex
Gaussians.  Register index 0 lives on ``x``, 1 on ``t`` and 2 on ``y``; a
``minus`` message travels from the observation towards the prior (back
passing) and a ``plus`` message the other way (forward passing).

One iteration is

    A -> ext -> B -> ext -> C -> ext -> D -> ext -> C -> ext -> B -> ext

and the output is the posterior mean produced by D.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .messages import V_MAX, V_MIN, GaussianMessage, SafeguardCounter, clip_variance, ext
from .prior import denoise_any

__all__ = [
    "DetectorFailure",
    "DetectorOptions",
    "DetectorState",
    "DetectorResult",
    "init_state",
    "module_a_back",
    "module_b_back",
    "module_c_back",
    "module_c_fwd",
    "module_b_fwd",
    "run",
    "posterior_mse",
]

log = logging.getLogger(__name__)


class DetectorFailure(RuntimeError):
    """A linear solve broke down or the iterate became non-finite."""

    def __init__(self, message, iteration=None, last_estimate=None):
        super().__init__(message if iteration is None else f"iteration {iteration}: {message}")
        self.iteration = iteration
        self.last_estimate = last_estimate


@dataclass
class DetectorOptions:
    """Iteration controls shared by the iterative detectors.

    ``stop_tol`` of 0 or None disables early stopping.  ``damping`` is the
    weight of the new extrinsic message (1 means no damping); means are mixed
    linearly and variances geometrically.
    """

    K: int = 20
    v_min: float = V_MIN
    v_max: float = V_MAX
    damping: float = 1.0
    stop_tol: Optional[float] = 1e-8

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be nonnegative")
        if not 0 < self.v_min < self.v_max:
            raise ValueError("need 0 < v_min < v_max")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


@dataclass
class DetectorState:
    plus0: GaussianMessage
    minus0: GaussianMessage
    plus1: GaussianMessage
    minus1: GaussianMessage
    plus2: GaussianMessage
    minus2: GaussianMessage
    x_minus: Optional[GaussianMessage] = None
    x_plus: Optional[GaussianMessage] = None
    t_minus: Optional[GaussianMessage] = None
    t_plus: Optional[GaussianMessage] = None
    y_minus: Optional[GaussianMessage] = None
    y_plus: Optional[GaussianMessage] = None
    iteration: int = 0

    def registers(self):
        return {
            name: getattr(self, name)
            for name in (
                "plus0", "minus0", "plus1", "minus1", "plus2", "minus2",
                "x_minus", "x_plus", "t_minus", "t_plus", "y_minus", "y_plus",
            )
            if getattr(self, name) is not None
        }


@dataclass
class DetectorResult:
    """Output of an iterative detector.

    ``per_iteration`` holds ``(x_hat, mean posterior variance)`` after every
    forward pass.
    """

    x_hat: np.ndarray
    per_iteration: list = field(default_factory=list)
    safeguard_count: int = 0
    iterations_run: int = 0
    state: Optional[DetectorState] = None

    def mse_trace(self, x_true):
        return np.array([posterior_mse(xh, x_true) for xh, _ in self.per_iteration])


def init_state(L, M):
    """All forward messages start as ``CN(0, 1)``; backward ones are flat."""
    if L <= 0 or M <= 0:
        raise ValueError("dimensions must be positive")
    return DetectorState(
        plus0=GaussianMessage.flat(L, 1.0),
        minus0=GaussianMessage.flat(L, V_MAX),
        plus1=GaussianMessage.flat(M, 1.0),
        minus1=GaussianMessage.flat(M, V_MAX),
        plus2=GaussianMessage.flat(M, 1.0),
        minus2=GaussianMessage.flat(M, V_MAX),
    )


def _chol_inverse(A):
    """Inverse of the lower Cholesky factor of a Hermitian PD matrix.

    ``inv(A) = W^H W`` with the returned ``W``.
    """
    try:
        low = sla.cholesky(A, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as err:
        raise DetectorFailure(f"Hermitian solve failed: {err}") from err
    return sla.solve_triangular(low, np.eye(A.shape[0], dtype=low.dtype), lower=True)


def _gaussian_solve(A, b):
    # mean and marginal variances of the Gaussian with precision A and potential b
    W = _chol_inverse(A)
    mean = W.conj().T @ (W @ b)
    var = np.sum(np.abs(W) ** 2, axis=0)
    return mean, var, W


def module_a_back(z, C, sigma2_sq, m2_plus, v2_plus, gram=None, matched=None):
    """Belief on ``y`` from the second-hop likelihood and the cavity on ``y``.

    ``gram = C^H C`` and ``matched = C^H z`` may be passed precomputed.

    Returns
    -------
    y_hat_minus : complex ndarray, shape (M,)
    v_y_minus : real ndarray, shape (M,)
    """
    if gram is None:
        gram = C.conj().T @ C
    if matched is None:
        matched = C.conj().T @ z
    A = gram / sigma2_sq + np.diag(1.0 / v2_plus)
    b = matched / sigma2_sq + m2_plus / v2_plus
    mean, var, _ = _gaussian_solve(A, b)
    return mean, var


def module_b_back(m1_plus, v1_plus, m2_minus, v2_minus, sigma1_sq):
    """Belief on ``t``: cavity on ``t`` times the ``y`` message widened by the first-hop noise."""
    v_bridge = sigma1_sq + v2_minus
    v_t = 1.0 / (1.0 / v1_plus + 1.0 / v_bridge)
    t_hat = v_t * (m1_plus / v1_plus + m2_minus / v_bridge)
    return t_hat, v_t


def _module_c(H, m1_minus, v1_minus, m0_plus, v0_plus):
    HtW = H.conj().T / v1_minus[None, :]
    A = HtW @ H + np.diag(1.0 / v0_plus)
    b = HtW @ m1_minus + m0_plus / v0_plus
    return _gaussian_solve(A, b)


def module_c_back(H, m1_minus, v1_minus, m0_plus, v0_plus):
    """Belief on ``x`` through the mixing ``t = H x``."""
    mean, var, _ = _module_c(H, m1_minus, v1_minus, m0_plus, v0_plus)
    return mean, var


def module_c_fwd(H, m1_minus, v1_minus, m0_plus, v0_plus):
    """Belief on ``t = H x`` given the same Gaussian on ``x`` as ``module_c_back``.

    Returns the mean ``H x_plus`` and ``diag(H Q H^H)``.
    """
    x_plus, _, W = _module_c(H, m1_minus, v1_minus, m0_plus, v0_plus)
    B = H @ W.conj().T
    return H @ x_plus, np.sum(np.abs(B) ** 2, axis=1)


def module_b_fwd(m1_plus, v1_plus, m2_minus, v2_minus, sigma1_sq):
    """Belief on ``y``: the ``t`` message widened by the first-hop noise times the cavity on ``y``."""
    v_bridge = v1_plus + sigma1_sq
    v_y = 1.0 / (1.0 / v2_minus + 1.0 / v_bridge)
    y_hat = v_y * (m1_plus / v_bridge + m2_minus / v2_minus)
    return y_hat, v_y


def posterior_mse(x_hat, x_true):
    x_hat = np.asarray(x_hat)
    x_true = np.asarray(x_true)
    if x_hat.shape != x_true.shape:
        raise ValueError("length mismatch")
    return float(np.sum(np.abs(x_hat - x_true) ** 2) / x_true.shape[0])


def _damp(old, new, rho):
    if rho == 1.0 or old is None:
        return new
    mean = rho * new.mean + (1.0 - rho) * old.mean
    var = np.exp(rho * np.log(new.variance) + (1.0 - rho) * np.log(old.variance))
    return GaussianMessage(mean, var)


def run(z, H, C, sigma1_sq, sigma2_sq, prior, options=None):
    """Detect ``x`` from ``z = C (H x + w) + n``.

    Parameters
    ----------
    z : complex ndarray, shape (N,)
    H : complex ndarray, shape (M, L)
    C : complex ndarray, shape (N, M)
    sigma1_sq, sigma2_sq : float
        Noise variances of the two hops; values below ``v_min`` are floored.
    prior : Constellation or GaussianPrior
    options : DetectorOptions, optional

    Returns
    -------
    DetectorResult
    """
    opts = options or DetectorOptions()
    M, L = H.shape
    N = C.shape[0]
    if not (0 < L <= M <= N) or C.shape[1] != M or np.shape(z) != (N,):
        raise ValueError(f"inconsistent shapes: z {np.shape(z)}, H {H.shape}, C {C.shape}")
    vmin, vmax, rho = opts.v_min, opts.v_max, opts.damping
    s1 = max(float(sigma1_sq), vmin)
    s2 = max(float(sigma2_sq), vmin)
    gram = C.conj().T @ C
    matched = C.conj().T @ z
    counter = SafeguardCounter()
    st = init_state(L, M)
    result = DetectorResult(x_hat=np.zeros(L, dtype=complex), state=st)

    def extrinsic(joint, cavity, old):
        msg = ext(joint, cavity, vmin, vmax, counter)
        return _damp(old if st.iteration > 0 else None, msg, rho)

    def plus_extrinsic(joint, cavity, old):
        return _damp(old, ext(joint, cavity, vmin, vmax, counter), rho)

    for k in range(1, opts.K + 1):
        try:
            # back passing
            y_hat, v_y = module_a_back(z, C, s2, st.plus2.mean, st.plus2.variance, gram, matched)
            st.y_minus = clip_variance(GaussianMessage(y_hat, v_y), vmin, vmax)
            st.minus2 = extrinsic(st.y_minus, st.plus2, st.minus2)

            t_hat, v_t = module_b_back(st.plus1.mean, st.plus1.variance,
                                       st.minus2.mean, st.minus2.variance, s1)
            st.t_minus = clip_variance(GaussianMessage(t_hat, v_t), vmin, vmax)
            st.minus1 = extrinsic(st.t_minus, st.plus1, st.minus1)

            x_hat, v_x = module_c_back(H, st.minus1.mean, st.minus1.variance,
                                       st.plus0.mean, st.plus0.variance)
            st.x_minus = clip_variance(GaussianMessage(x_hat, v_x), vmin, vmax)
            st.minus0 = extrinsic(st.x_minus, st.plus0, st.minus0)

            # forward passing
            x_post, v_post = denoise_any(st.minus0.mean, st.minus0.variance, prior, counter)
            st.x_plus = clip_variance(GaussianMessage(x_post, v_post), vmin, vmax)
            st.plus0 = plus_extrinsic(st.x_plus, st.minus0, st.plus0)

            t_hat, v_t = module_c_fwd(H, st.minus1.mean, st.minus1.variance,
                                      st.plus0.mean, st.plus0.variance)
            st.t_plus = clip_variance(GaussianMessage(t_hat, v_t), vmin, vmax)
            st.plus1 = plus_extrinsic(st.t_plus, st.minus1, st.plus1)

            y_hat, v_y = module_b_fwd(st.plus1.mean, st.plus1.variance,
                                      st.minus2.mean, st.minus2.variance, s1)
            st.y_plus = clip_variance(GaussianMessage(y_hat, v_y), vmin, vmax)
            st.plus2 = plus_extrinsic(st.y_plus, st.minus2, st.plus2)
        except DetectorFailure as err:
            raise DetectorFailure(str(err), k, result.x_hat) from err

        x_new = st.x_plus.mean
        if not np.all(np.isfinite(x_new)):
            raise DetectorFailure("non-finite estimate", k, result.x_hat)
        st.iteration = k
        previous = result.x_hat
        result.x_hat = x_new
        result.per_iteration.append((x_new, float(np.mean(st.x_plus.variance))))
        result.iterations_run = k
        if opts.stop_tol and k > 1 and np.sum(np.abs(x_new - previous) ** 2) / L < opts.stop_tol:
            log.debug("converged after %d iterations", k)
            break

    result.safeguard_count = counter.count
    return result
