"""Approximate-Bayesian symbol detection for dual-hop massive-MIMO AF relays."""

from .messages import GaussianMessage, SafeguardCounter, clip_variance, combine, ext
from .prior import Constellation, GaussianPrior, denoise, denoise_gaussian, hard_decision, qpsk
from .system import (
    Dimensions,
    SystemInstance,
    propagate,
    sample_channels,
    sample_symbols,
    snr_to_sigma_sq,
    trial_rng,
)
from .detector import DetectorFailure, DetectorOptions, DetectorResult, posterior_mse, run
from .baselines import ep_plus_ls, ep_single_hop, lmmse_plus_ls, ls_second_hop, single_lmmse
from .state_evolution import SETrace, Spectra, eigen_spectra, scalar_mse, se_run
from .oracle import ExactPosterior, exact_discrete_posterior, exact_gaussian_posterior

__version__ = "0.1.0"
