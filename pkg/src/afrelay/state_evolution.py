"""Scalar recursion predicting the joint detector's per-iteration MSE.

All ``gamma`` quantities are precisions (inverse variances) of the messages
of the detector averaged over components; ``q`` quantities are averaged
marginal variances.  The recursion depends on the channels only through the
eigenvalues of ``H^H H`` (``lam``) and ``C^H C`` (``eta``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.integrate import cumulative_trapezoid

from .messages import V_MAX, V_MIN
from .prior import GaussianPrior, denoise

__all__ = [
    "Spectra",
    "SERecord",
    "SETrace",
    "eigen_spectra",
    "marchenko_pastur_quantiles",
    "marchenko_pastur_spectra",
    "scalar_mse",
    "se_run",
]


@dataclass
class Spectra:
    """Eigenvalues of ``H^H H`` (length L) and ``C^H C`` (length M)."""

    lam: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        self.eta = np.asarray(self.eta, dtype=float)
        if self.lam.size == 0 or self.eta.size == 0:
            raise ValueError("spectra must be nonempty")
        if np.any(self.lam < 0) or np.any(self.eta < 0):
            raise ValueError("eigenvalues must be nonnegative")


@dataclass
class SERecord:
    gamma0_minus: float
    gamma0_plus: float
    gamma1_minus: float
    gamma1_plus: float
    gamma2_minus: float
    gamma2_plus: float
    q_y_minus: float
    q_x_minus: float
    q_t_plus: float
    gamma_y_plus: float
    gamma_t_minus: float
    mse: float


@dataclass
class SETrace:
    records: list = field(default_factory=list)
    safeguard_count: int = 0

    @property
    def mse(self):
        return np.array([r.mse for r in self.records])

    def __len__(self):
        return len(self.records)


def eigen_spectra(H, C):
    """Ascending eigenvalues of ``H^H H`` and ``C^H C``, clamped at zero."""
    lam = np.linalg.eigvalsh(H.conj().T @ H)
    eta = np.linalg.eigvalsh(C.conj().T @ C)
    return Spectra(np.maximum(lam, 0.0), np.maximum(eta, 0.0))


def marchenko_pastur_quantiles(ratio, n, grid=20001):
    """Midpoint quantiles of the Marchenko-Pastur law with aspect ``ratio <= 1``.

    The law is that of the eigenvalues of ``X^H X / rows`` for a
    ``rows x (ratio * rows)`` matrix of unit-variance entries; its mean is 1.
    """
    if not 0 < ratio <= 1:
        raise ValueError("ratio must lie in (0, 1]")
    a = (1 - np.sqrt(ratio)) ** 2
    b = (1 + np.sqrt(ratio)) ** 2
    # mu = a + (b - a) sin^2(theta) removes the square-root edges
    theta = np.linspace(0.0, np.pi / 2, grid)
    s2 = np.sin(theta) ** 2
    mu = a + (b - a) * s2
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = (b - a) ** 2 * 2 * s2 * (1 - s2) / (2 * np.pi * ratio * mu)
    if a == 0:
        dens[0] = b / (np.pi * ratio)
    cdf = cumulative_trapezoid(dens, theta, initial=0.0)
    cdf /= cdf[-1]
    levels = (np.arange(n) + 0.5) / n
    return np.interp(levels, cdf, mu)


def marchenko_pastur_spectra(L, M, N):
    """Deterministic spectra for ``H ~ CN(0, 1/L)`` and ``C ~ CN(0, 1/M)`` channels."""
    lam = (M / L) * marchenko_pastur_quantiles(L / M, L)
    eta = (N / M) * marchenko_pastur_quantiles(M / N, M)
    return Spectra(lam, eta)


def scalar_mse(gamma, prior, quad_points=63):
    """MMSE of ``x ~ prior`` seen through ``r = x + w``, ``w ~ CN(0, 1/gamma)``.

    Discrete priors use a tensor Gauss-Hermite rule over the real and
    imaginary noise parts with exact summation over the points.
    """
    gamma = float(gamma)
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if isinstance(prior, GaussianPrior):
        s = prior.variance
        return s / (1.0 + s * gamma)
    t, w = hermgauss(quad_points)
    noise = (t[:, None] + 1j * t[None, :]).ravel() / np.sqrt(gamma)
    weight = (w[:, None] * w[None, :]).ravel() / np.pi
    v = 1.0 / gamma
    total = 0.0
    for p, x in zip(prior.probs, prior.points):
        est, _ = denoise(x + noise, v, prior)
        total += p * np.dot(weight, np.abs(est - x) ** 2)
    return float(min(max(total, 0.0), prior.energy))


def se_run(spectra, sigma1_sq, sigma2_sq, prior, K, quad_points=63,
           pad_relay=True, v_min=V_MIN, v_max=V_MAX):
    """Iterate the state evolution for ``K`` iterations.

    Parameters
    ----------
    spectra : Spectra
    sigma1_sq, sigma2_sq : float
    prior : Constellation or GaussianPrior
    K : int
    pad_relay : bool
        The forward variance on ``t`` is the normalized trace of
        ``H Q H^H`` over the M relay components, i.e. the ``lam`` average is
        taken with ``M - L`` zero eigenvalues appended.  ``False`` averages
        over the L eigenvalues only.

    Returns
    -------
    SETrace
    """
    if not (sigma1_sq > 0 and sigma2_sq > 0):
        raise ValueError("noise variances must be positive")
    lam, eta = spectra.lam, spectra.eta
    M = eta.size
    t_norm = M if pad_relay else lam.size
    g_lo, g_hi = 1.0 / v_max, 1.0 / v_min
    trace = SETrace()

    def safe(g):
        if not g > 0:
            trace.safeguard_count += 1
            return g_lo
        return min(g, g_hi)

    g2p = g1p = g0p = 1.0
    for _ in range(K):
        # back passing
        q_y = np.mean(1.0 / (eta / sigma2_sq + g2p))
        g2m = safe(1.0 / q_y - g2p)
        g_t = g1p + g2m / (1.0 + g2m * sigma1_sq)
        g1m = safe(g_t - g1p)
        q_x = np.mean(1.0 / (lam * g1m + g0p))
        g0m = safe(1.0 / q_x - g0p)
        # forward passing
        mse = scalar_mse(g0m, prior, quad_points)
        g0p = safe(1.0 / max(mse, v_min) - g0m)
        q_t = np.sum(lam / (lam * g1m + g0p)) / t_norm
        g1p = safe(1.0 / q_t - g1m)
        g_y = g2m + g1p / (1.0 + g1p * sigma1_sq)
        g2p = safe(g_y - g2m)
        trace.records.append(SERecord(
            gamma0_minus=g0m, gamma0_plus=g0p, gamma1_minus=g1m, gamma1_plus=g1p,
            gamma2_minus=g2m, gamma2_plus=g2p, q_y_minus=q_y, q_x_minus=q_x,
            q_t_plus=q_t, gamma_y_plus=g_y, gamma_t_minus=g_t, mse=mse,
        ))
    return trace
