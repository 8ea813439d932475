"""Quick equivalence checks against exact references, run by ``detect selftest``."""

from __future__ import annotations

import numpy as np

from .baselines import ep_single_hop
from .detector import DetectorOptions, run
from .messages import GaussianMessage, combine, ext
from .oracle import exact_discrete_posterior, exact_gaussian_posterior
from .prior import GaussianPrior, denoise, qpsk
from .system import Dimensions, crandn, draw_instance, sample_channels, trial_rng

__all__ = ["CHECKS", "run_selftest"]


def check_message_roundtrip(rng):
    a = GaussianMessage(crandn(rng, 1000), rng.uniform(0.1, 10, 1000))
    b = GaussianMessage(crandn(rng, 1000), rng.uniform(0.1, 10, 1000))
    back = ext(combine(a, b), b)
    return max(np.max(np.abs(back.mean - a.mean)), np.max(np.abs(back.variance / a.variance - 1)))


def check_denoiser(rng):
    prior = qpsk()
    m, v = crandn(rng, 64), rng.uniform(0.05, 2.0, 64)
    w = np.exp(-np.abs(m[:, None] - prior.points[None, :]) ** 2 / v[:, None]) * prior.probs
    w /= w.sum(axis=1, keepdims=True)
    ref = w @ prior.points
    got, _ = denoise(m, v, prior)
    return np.max(np.abs(got - ref))


def check_gaussian_exactness(rng):
    prior = GaussianPrior(1.0)
    s1, s2 = 0.1, 0.05
    inst = draw_instance(Dimensions(8, 12, 16), prior, s1, s2, rng)
    res = run(inst.z, inst.H, inst.C, s1, s2, prior, DetectorOptions(K=200, stop_tol=1e-24))
    mean, _, _ = exact_gaussian_posterior(inst.z, inst.H, inst.C, s1, s2, 1.0)
    return np.linalg.norm(res.x_hat - mean) / np.linalg.norm(mean)


def check_single_hop(rng):
    prior = qpsk()
    L = 16
    _, C = sample_channels(Dimensions(L, L, 2 * L), rng)
    x = prior.points[rng.integers(0, 4, L)]
    s2 = 0.1
    z = C @ x + crandn(rng, 2 * L, s2)
    opts = DetectorOptions(K=6, stop_tol=None)
    joint = run(z, np.eye(L), C, 1e-12, s2, prior, opts)
    single = ep_single_hop(z, C, s2, prior, opts)
    return max(np.max(np.abs(a - b)) for (a, _), (b, _) in zip(joint.per_iteration, single.per_iteration))


def check_discrete_oracle(rng):
    prior = qpsk()
    H, C = sample_channels(Dimensions(1, 2, 3), rng)
    s1, s2 = 0.2, 0.3
    z = crandn(rng, 3)
    post = exact_discrete_posterior(z, H, C, s1, s2, prior)
    cov = s1 * C @ C.conj().T + s2 * np.eye(3)
    ci = np.linalg.inv(cov)
    r = z[:, None] - (C @ H) @ prior.points[None, :]
    ll = -np.real(np.einsum("ik,ij,jk->k", r.conj(), ci, r))
    p = np.exp(ll - ll.max())
    p /= p.sum()
    return np.max(np.abs(post.per_symbol_marginals[0] - p))


# name -> (check, tolerance)
CHECKS = {
    "combine/ext round trip": (check_message_roundtrip, 1e-10),
    "denoiser vs direct sum": (check_denoiser, 1e-12),
    "Gaussian prior vs closed-form posterior": (check_gaussian_exactness, 1e-4),
    "H = I reduces to single-hop EP": (check_single_hop, 1e-6),
    "exact posterior vs direct likelihood": (check_discrete_oracle, 1e-10),
}


def run_selftest(seed=0, out=print):
    ok = True
    for i, (name, (check, tol)) in enumerate(CHECKS.items()):
        err = float(check(trial_rng(seed, 0, i)))
        passed = err <= tol
        ok &= passed
        out(f"{'PASS' if passed else 'FAIL'}  {name}: error {err:.2e} (tolerance {tol:.0e})")
    return ok
