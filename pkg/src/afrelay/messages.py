"""Componentwise complex-Gaussian messages.

Every belief exchanged by the detectors is a pair ``(mean, variance)`` of
equal-length vectors describing a diagonal complex Gaussian
``N_c(x | mean, Diag(variance))``.  Two operations act on them: ``combine``
(product of densities) and ``ext`` (division, i.e. the extrinsic message).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

V_MIN = 1e-12
V_MAX = 1e12

__all__ = [
    "V_MIN",
    "V_MAX",
    "GaussianMessage",
    "SafeguardCounter",
    "combine",
    "ext",
    "clip_variance",
]


@dataclass(frozen=True)
class GaussianMessage:
    """Diagonal complex Gaussian belief.

    Parameters
    ----------
    mean : complex ndarray, shape (n,)
    variance : real ndarray, shape (n,)
    """

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=complex))
        variance = np.atleast_1d(np.asarray(self.variance, dtype=float))
        if mean.ndim != 1 or mean.shape != variance.shape:
            raise ValueError(
                f"mean and variance must be 1-D of equal length, got {mean.shape} and {variance.shape}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", variance)

    def __len__(self):
        return self.mean.shape[0]

    @classmethod
    def flat(cls, n, variance=1.0):
        """Zero-mean message with constant variance."""
        return cls(np.zeros(n, dtype=complex), np.full(n, float(variance)))


class SafeguardCounter:
    """Tally of components where ``ext`` met a nonpositive precision."""

    def __init__(self):
        self.count = 0

    def add(self, n):
        self.count += int(n)

    def __repr__(self):
        return f"SafeguardCounter(count={self.count})"


def _check_pair(a, b):
    if len(a) != len(b):
        raise ValueError(f"message length mismatch: {len(a)} != {len(b)}")


def combine(a, b):
    """Product of two Gaussian messages (reproduction rule).

    Precisions add and means are precision-weighted.
    """
    _check_pair(a, b)
    if np.any(~(a.variance > 0)) or np.any(~(b.variance > 0)):
        raise ValueError("combine requires strictly positive variances")
    prec = 1.0 / a.variance + 1.0 / b.variance
    var = 1.0 / prec
    mean = var * (a.mean / a.variance + b.mean / b.variance)
    # 1/(1/a + 1/b) may round a hair above min(a, b)
    var = np.minimum(var, np.minimum(a.variance, b.variance))
    return GaussianMessage(mean, var)


def ext(joint, cavity, v_min=V_MIN, v_max=V_MAX, counter=None):
    """Extrinsic message ``joint / cavity``.

    Components whose precision difference ``1/v_joint - 1/v_cavity`` is not
    positive get variance ``v_max``; they keep the division formula's mean
    when it is finite and the joint mean otherwise.  Each one is added to
    ``counter`` when given.  The remaining variances are clamped into
    ``[v_min, v_max]``.
    """
    _check_pair(joint, cavity)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        prec = 1.0 / joint.variance - 1.0 / cavity.variance
        var = 1.0 / prec
        mean = var * (joint.mean / joint.variance - cavity.mean / cavity.variance)
    bad = ~(prec > 0)
    if counter is not None:
        counter.add(np.count_nonzero(bad | ~np.isfinite(mean)))
    mean = np.where(np.isfinite(mean), mean, joint.mean)
    var = np.clip(np.where(bad, v_max, var), v_min, v_max)
    return GaussianMessage(mean, var)


def clip_variance(msg, v_min=V_MIN, v_max=V_MAX):
    """Clamp variances into ``[v_min, v_max]``; negative or NaN ones go to ``v_max``."""
    var = np.where(msg.variance >= 0, msg.variance, v_max)
    return GaussianMessage(msg.mean, np.clip(var, v_min, v_max))
