"""Constellations and the scalar posterior-mean denoiser."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from afrelay.messages import SafeguardCounter
from afrelay.prior import Constellation, GaussianPrior, denoise, denoise_any, denoise_gaussian, hard_decision, qpsk

from conftest import cgauss


def direct_posterior(m, v, prior):
    """Four-term (K-term) normalized sum, written without log-domain tricks."""
    w = prior.probs[None, :] * np.exp(-np.abs(m[:, None] - prior.points[None, :]) ** 2 / v[:, None])
    w /= w.sum(axis=1, keepdims=True)
    mean = w @ prior.points
    var = w @ np.abs(prior.points) ** 2 - np.abs(mean) ** 2
    return mean, var


class TestConstellation:
    def test_qpsk_unit_energy(self):
        c = qpsk()
        assert c.energy == pytest.approx(1.0)
        assert c.bits_per_symbol == 2 and len(c) == 4

    def test_rejects_bad_probabilities(self):
        c = qpsk()
        with pytest.raises(ValueError):
            Constellation(c.points, np.array([0.5, 0.5, 0.5, -0.5]), c.bit_map)

    def test_rejects_duplicate_labels(self):
        c = qpsk()
        with pytest.raises(ValueError):
            Constellation(c.points, c.probs, np.zeros((4, 2), dtype=int))

    def test_rejects_non_unit_energy(self):
        c = qpsk()
        with pytest.raises(ValueError):
            Constellation(2 * c.points, c.probs, c.bit_map)

    def test_gray_labels(self):
        c = qpsk()
        # neighbours (quarter turn apart) differ in exactly one bit
        for k in range(4):
            j = int(np.argmin(np.abs(c.points - c.points[k] * 1j)))
            assert np.sum(c.bit_map[k] != c.bit_map[j]) == 1


class TestDenoise:
    def test_against_direct_sum(self, rng):
        prior = qpsk()
        m, v = cgauss(rng, 500, variance=2), rng.uniform(0.05, 5, 500)
        mean, var = denoise(m, v, prior)
        ref_mean, ref_var = direct_posterior(m, v, prior)
        np.testing.assert_allclose(mean, ref_mean, atol=1e-12)
        np.testing.assert_allclose(var, ref_var, atol=1e-12)

    def test_zero_input_large_variance(self):
        mean, var = denoise(np.zeros(1, complex), np.array([1e6]), qpsk())
        assert abs(mean[0]) < 1e-6 and var[0] == pytest.approx(1.0, abs=1e-6)

    def test_tiny_variance_snaps_to_point(self):
        c = qpsk()
        mean, var = denoise(c.points + 0.01, np.full(4, 1e-10), c)
        np.testing.assert_allclose(mean, c.points, atol=1e-12)
        assert np.all(var >= 0)

    def test_underflow_falls_back_to_nearest(self):
        counter = SafeguardCounter()
        mean, _ = denoise(np.array([np.inf + 0j]), np.array([1.0]), qpsk(), counter)
        assert counter.count == 1
        assert np.isfinite(mean).all()

    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(1e-3, 1e2))
    def test_rotation_equivariance(self, re, im, v):
        # QPSK is invariant under multiplication by j
        c = qpsk()
        m = np.array([complex(re, im)])
        a, va = denoise(m, np.array([v]), c)
        b, vb = denoise(1j * m, np.array([v]), c)
        assert abs(b[0] - 1j * a[0]) < 1e-12
        assert vb[0] == pytest.approx(va[0], abs=1e-12)

    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(1e-3, 1e2))
    def test_variance_within_energy(self, re, im, v):
        _, var = denoise(np.array([complex(re, im)]), np.array([v]), qpsk())
        assert 0 <= var[0] <= 1.0

    def test_gaussian_closed_form(self):
        prior = GaussianPrior(2.0)
        mean, var = denoise_gaussian(np.array([1.0 + 1j]), np.array([2.0]), prior)
        assert mean[0] == pytest.approx(0.5 + 0.5j)
        assert var[0] == pytest.approx(1.0)

    def test_dispatch(self, rng):
        m, v = cgauss(rng, 3), np.ones(3)
        np.testing.assert_array_equal(denoise_any(m, v, qpsk())[0], denoise(m, v, qpsk())[0])
        np.testing.assert_array_equal(denoise_any(m, v, GaussianPrior())[0],
                                      denoise_gaussian(m, v, GaussianPrior())[0])


class TestHardDecision:
    def test_recovers_points(self):
        c = qpsk()
        idx, bits = hard_decision(c.points * 0.9, c)
        np.testing.assert_array_equal(idx, np.arange(4))
        np.testing.assert_array_equal(bits, c.bit_map)

    def test_bits_follow_quadrant(self):
        _, bits = hard_decision(np.array([-0.3 + 0.2j]), qpsk())
        np.testing.assert_array_equal(bits[0], [1, 0])
