"""Random dual-hop amplify-and-forward transmissions.

First hop ``y = H x + w`` with ``w ~ CN(0, sigma1_sq I)``, relay forwards
``y`` unchanged, second hop ``z = C y + n`` with ``n ~ CN(0, sigma2_sq I)``.

Channel entries are i.i.d. ``CN(0, 1/L)`` for ``H`` and ``CN(0, 1/M)`` for
``C``, so with unit-energy symbols each receive antenna sees unit signal
power on both hops and ``SNR_i = 1 / sigma_i^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CONVENTION",
    "Dimensions",
    "SystemInstance",
    "crandn",
    "sample_channels",
    "sample_symbols",
    "propagate",
    "snr_to_sigma_sq",
    "trial_rng",
    "draw_instance",
]

CONVENTION = (
    "H ~ CN(0,1/L) iid, C ~ CN(0,1/M) iid, unit-energy symbols, "
    "no relay gain, SNR_i = 1/sigma_i^2"
)


@dataclass(frozen=True)
class Dimensions:
    """Antenna counts at source (L), relay (M) and destination (N)."""

    L: int
    M: int
    N: int

    def __post_init__(self):
        if not (0 < self.L <= self.M <= self.N):
            raise ValueError(f"need 0 < L <= M <= N, got L={self.L}, M={self.M}, N={self.N}")


@dataclass
class SystemInstance:
    H: np.ndarray
    C: np.ndarray
    sigma1_sq: float
    sigma2_sq: float
    x: np.ndarray
    t: np.ndarray
    y: np.ndarray
    z: np.ndarray

    @property
    def dims(self):
        return Dimensions(self.H.shape[1], self.H.shape[0], self.C.shape[0])


def crandn(rng, shape, variance=1.0):
    """Circularly-symmetric complex Gaussian samples with the given variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_channels(dims, rng):
    H = crandn(rng, (dims.M, dims.L), 1.0 / dims.L)
    C = crandn(rng, (dims.N, dims.M), 1.0 / dims.M)
    return H, C


def sample_symbols(L, prior, rng):
    """Draw ``L`` i.i.d. symbols from a constellation prior."""
    if L <= 0:
        raise ValueError("L must be positive")
    idx = rng.choice(len(prior.points), size=L, p=prior.probs)
    return prior.points[idx]


def propagate(x, H, C, sigma1_sq, sigma2_sq, rng):
    x = np.asarray(x, dtype=complex)
    M, L = H.shape
    N = C.shape[0]
    if x.shape != (L,) or C.shape[1] != M:
        raise ValueError("x, H and C shapes are incompatible")
    t = H @ x
    y = t + crandn(rng, M, sigma1_sq)
    z = C @ y + crandn(rng, N, sigma2_sq)
    return SystemInstance(H, C, float(sigma1_sq), float(sigma2_sq), x, t, y, z)


def snr_to_sigma_sq(snr_db):
    out = 10.0 ** (-np.asarray(snr_db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def trial_rng(master_seed, grid_index, trial_index):
    """Independent generator for one Monte-Carlo trial.

    The stream depends only on the three integers, via numpy's
    ``SeedSequence`` entropy mixing.
    """
    return np.random.default_rng(np.random.SeedSequence([master_seed, grid_index, trial_index]))


def draw_instance(dims, prior, sigma1_sq, sigma2_sq, rng):
    """Channels, symbols and noise for one trial, in a fixed draw order."""
    H, C = sample_channels(dims, rng)
    if hasattr(prior, "points"):
        x = sample_symbols(dims.L, prior, rng)
    else:
        x = crandn(rng, dims.L, prior.variance)
    return propagate(x, H, C, sigma1_sq, sigma2_sq, rng)
