"""How close do the detectors get to the exact posterior mean?

With two QPSK symbols the posterior is a sum over 16 candidates, so the
Bayes-optimal MSE can be computed exactly and every detector measured
against it on the same instances.
"""

import numpy as np

from afrelay import DetectorOptions, ep_plus_ls, exact_discrete_posterior, lmmse_plus_ls, posterior_mse
from afrelay import qpsk, run, single_lmmse, snr_to_sigma_sq, trial_rng
from afrelay.system import Dimensions, draw_instance

prior, dims, trials = qpsk(), Dimensions(2, 3, 4), 1000
s1 = s2 = snr_to_sigma_sq(8.0)
mse = {}
for t in range(trials):
    i = draw_instance(dims, prior, s1, s2, trial_rng(0, 0, t))
    post = exact_discrete_posterior(i.z, i.H, i.C, s1, s2, prior)
    for name, x_hat in (
        ("exact posterior mean", post.posterior_mean),
        ("joint detector", run(i.z, i.H, i.C, s1, s2, prior, DetectorOptions(K=20)).x_hat),
        ("EP + LS", ep_plus_ls(i.z, i.H, i.C, s1, s2, prior)),
        ("single LMMSE", single_lmmse(i.z, i.H, i.C, s1, s2)),
        ("LMMSE + LS", lmmse_plus_ls(i.z, i.H, i.C, s1, s2)),
    ):
        mse.setdefault(name, []).append(posterior_mse(x_hat, i.x))

for name, values in mse.items():
    print(f"{name:22s} {np.mean(values):.4f} +- {np.std(values) / np.sqrt(trials):.4f}")
