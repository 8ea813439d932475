"""Symbol priors and their scalar posterior-mean denoisers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .messages import V_MIN

__all__ = [
    "Constellation",
    "GaussianPrior",
    "qpsk",
    "denoise",
    "denoise_gaussian",
    "denoise_any",
    "hard_decision",
]


@dataclass(frozen=True)
class Constellation:
    """Discrete i.i.d. symbol prior.

    Attributes
    ----------
    points : complex ndarray, shape (K,)
    probs : real ndarray, shape (K,)
    bit_map : int ndarray, shape (K, bits_per_symbol)
        Bit label of each point.
    """

    points: np.ndarray
    probs: np.ndarray
    bit_map: np.ndarray
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=complex)
        probs = np.asarray(self.probs, dtype=float)
        bit_map = np.asarray(self.bit_map, dtype=np.int8)
        k = points.shape[0]
        if probs.shape != (k,) or bit_map.ndim != 2 or bit_map.shape[0] != k:
            raise ValueError("points, probs and bit_map disagree in size")
        if bit_map.shape[1] != int(np.log2(k)) or 2 ** bit_map.shape[1] != k:
            raise ValueError("bit labels must have length log2(K)")
        if len({tuple(b) for b in bit_map}) != k:
            raise ValueError("bit labels must be distinct")
        if abs(probs.sum() - 1.0) > 1e-12 or np.any(probs < 0):
            raise ValueError("probs must be a probability vector")
        if abs(self.energy_of(points, probs) - 1.0) > 1e-12:
            raise ValueError("constellation must have unit average energy")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "bit_map", bit_map)

    @staticmethod
    def energy_of(points, probs):
        return float(np.sum(probs * np.abs(points) ** 2))

    @property
    def energy(self):
        return self.energy_of(self.points, self.probs)

    @property
    def bits_per_symbol(self):
        return self.bit_map.shape[1]

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class GaussianPrior:
    """Circularly-symmetric complex Gaussian prior ``CN(0, variance)``."""

    variance: float = 1.0
    name: str = field(default="gaussian", compare=False)

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("prior variance must be positive")

    @property
    def energy(self):
        return float(self.variance)


def qpsk():
    """Unit-energy Gray-mapped QPSK.

    Bit 0 is set when the real part is negative, bit 1 when the imaginary
    part is negative.
    """
    s = 1.0 / np.sqrt(2.0)
    points = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) * s
    bit_map = np.array([[0, 0], [1, 0], [1, 1], [0, 1]])
    return Constellation(points, np.full(4, 0.25), bit_map, name="qpsk")


def _weights(m, v, prior):
    # log-domain posterior weights over the points, shape (n, K)
    d2 = np.abs(m[:, None] - prior.points[None, :]) ** 2
    logw = np.log(prior.probs)[None, :] - d2 / v[:, None]
    with np.errstate(invalid="ignore"):
        logw = logw - logsumexp(logw, axis=1, keepdims=True)
    return np.exp(logw)


def denoise(m, v, prior, counter=None):
    """Posterior mean and variance of ``x ~ prior`` observed as ``CN(m, v)``.

    Parameters
    ----------
    m : complex ndarray, shape (n,)
    v : real ndarray or float, positive
    prior : Constellation
    counter : SafeguardCounter, optional
        Incremented for components whose weights are all degenerate; those
        fall back to the nearest point with variance ``V_MIN``.

    Returns
    -------
    mean : complex ndarray, shape (n,)
    var : real ndarray, shape (n,)
    """
    m = np.atleast_1d(np.asarray(m, dtype=complex))
    v = np.broadcast_to(np.asarray(v, dtype=float), m.shape)
    w = _weights(m, v, prior)
    mean = w @ prior.points
    var = w @ (np.abs(prior.points) ** 2) - np.abs(mean) ** 2
    var = np.clip(var, 0.0, prior.energy)

    bad = ~np.all(np.isfinite(w), axis=1)
    if np.any(bad):
        idx, _ = hard_decision(m[bad], prior)
        mean[bad] = prior.points[idx]
        var[bad] = V_MIN
        if counter is not None:
            counter.add(np.count_nonzero(bad))
    return mean, var


def denoise_gaussian(m, v, prior):
    """Conjugate update of a ``CN(0, prior.variance)`` prior by ``CN(m, v)``."""
    m = np.asarray(m, dtype=complex)
    v = np.asarray(v, dtype=float)
    s = prior.variance
    return m * (s / (s + v)), s * v / (s + v)


def denoise_any(m, v, prior, counter=None):
    """Dispatch to the denoiser matching ``prior``."""
    if isinstance(prior, GaussianPrior):
        mean, var = denoise_gaussian(m, v, prior)
        return mean, np.broadcast_to(var, mean.shape).copy()
    return denoise(m, v, prior, counter=counter)


def hard_decision(x_hat, prior):
    """Nearest-point symbol indices and their bits.

    Ties go to the lowest point index.

    Returns
    -------
    idx : int ndarray, shape (n,)
    bits : int8 ndarray, shape (n, bits_per_symbol)
    """
    x_hat = np.atleast_1d(np.asarray(x_hat, dtype=complex))
    d2 = np.abs(x_hat[:, None] - prior.points[None, :]) ** 2
    idx = np.argmin(d2, axis=1)
    return idx, prior.bit_map[idx]
