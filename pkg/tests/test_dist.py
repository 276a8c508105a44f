import math

import numpy as np
import pytest
from scipy.integrate import quad

from banditab.core import InvalidArgumentError
from banditab.dist import (
    BanditParams,
    bandit_pdf,
    std_normal_cdf,
    std_normal_quantile,
    tab_rejection_probability,
)

# frozen with mpmath at 50 digits: ncdf and findroot on ncdf
PHI_AT_Z975 = 0.9749999999999999862347486
PHI_AT_MINUS_8 = 6.220960574271784123515995e-16
Z_975 = 1.959963984540054235524594


class TestNormalCdf:
    def test_symmetry_at_zero(self):
        assert std_normal_cdf(0.0) == 0.5

    def test_high_precision_point(self):
        assert abs(std_normal_cdf(1.959963984540054) - 0.975) <= 1e-12
        assert abs(std_normal_cdf(1.959963984540054) - PHI_AT_Z975) <= 5e-16

    def test_deep_tail(self):
        assert abs(std_normal_cdf(-8.0) - PHI_AT_MINUS_8) <= 1e-17

    def test_vectorized(self):
        out = std_normal_cdf(np.array([-1.0, 0.0, 1.0]))
        assert out.shape == (3,)
        assert abs(out[0] + out[2] - 1.0) < 1e-15

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidArgumentError):
            std_normal_cdf(np.nan)


class TestNormalQuantile:
    def test_median(self):
        assert abs(std_normal_quantile(0.5)) < 1e-15

    def test_upper_point(self):
        assert abs(std_normal_quantile(0.975) - Z_975) <= 1e-8

    def test_inverse_property(self):
        for z in np.arange(-6.0, 6.0 + 1e-9, 0.5):
            assert abs(std_normal_quantile(std_normal_cdf(z)) - z) <= 1e-8

    def test_cdf_of_quantile(self):
        for p in (1e-8, 1e-4, 0.2, 0.5, 0.8, 1 - 1e-4, 1 - 1e-8):
            assert abs(std_normal_cdf(std_normal_quantile(p)) - p) <= 1e-10

    def test_domain(self):
        for bad in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(InvalidArgumentError):
                std_normal_quantile(bad)


class TestBanditPdf:
    def test_null_is_standard_normal(self):
        params = BanditParams(0.0, 1.0)
        assert abs(bandit_pdf(0.0, params) - 1.0 / math.sqrt(2 * math.pi)) <= 1e-12
        grid = np.arange(-5.0, 5.0 + 1e-9, 0.1)
        normal = np.exp(-grid**2 / 2) / math.sqrt(2 * math.pi)
        assert np.abs(bandit_pdf(grid, params) - normal).max() <= 1e-12

    def test_even_in_y(self):
        params = BanditParams(0.7, 1.2)
        assert bandit_pdf(1.3, params) == bandit_pdf(-1.3, params)

    def test_normalizes(self):
        params = BanditParams(2.0, 1.5)
        total, err = quad(lambda y: bandit_pdf(y, params), 0.0, 30.0, limit=200)
        assert abs(2.0 * total - 1.0) <= 1e-6

    def test_nonnegative_and_normalized_on_grid(self):
        for kappa in np.arange(-5.0, 5.0 + 1e-9, 1.0):
            for sigma0 in np.arange(1.0, 3.0 + 1e-9, 0.5):
                params = BanditParams(float(kappa), float(sigma0))
                ys = np.linspace(-50.0, 50.0, 401)
                assert (bandit_pdf(ys, params) >= 0.0).all()
                lim = sigma0 * (abs(kappa) + 12.0)
                total, _ = quad(lambda y: bandit_pdf(y, params), 0.0, lim, limit=200)
                assert abs(2.0 * total - 1.0) <= 1e-6

    def test_extreme_arguments_stay_finite(self):
        params = BanditParams(5.0, 1.0)
        assert np.isfinite(bandit_pdf(np.array([0.0, 200.0, 1e6]), params)).all()
        params = BanditParams(-5.0, 3.0)
        assert np.isfinite(bandit_pdf(np.array([0.0, 200.0, 1e6]), params)).all()

    def test_bimodal_for_positive_drift(self):
        params = BanditParams(3.0, 1.0)
        grid = np.linspace(-8.0, 8.0, 1601)
        dens = bandit_pdf(grid, params)
        assert abs(grid[np.argmax(dens)]) > 0.5

    def test_param_validation(self):
        with pytest.raises(InvalidArgumentError):
            BanditParams(0.0, 0.8)
        with pytest.raises(InvalidArgumentError):
            BanditParams(np.inf, 1.0)


class TestRejectionProbability:
    def test_null_calibration(self):
        assert abs(tab_rejection_probability(BanditParams(0.0, 1.0), 0.05) - 0.05) <= 1e-10
        for alpha in (0.01, 0.1, 0.32):
            assert abs(tab_rejection_probability(BanditParams(0.0, 1.0), alpha) - alpha) <= 1e-10

    def test_vanishes_for_strongly_negative_drift(self):
        assert tab_rejection_probability(BanditParams(-10.0, 1.0), 0.05) < 1e-6

    def test_monotone_in_kappa(self):
        for sigma0 in (1.0, 1.5, 3.0):
            vals = [tab_rejection_probability(BanditParams(float(k), sigma0), 0.05)
                    for k in np.arange(-5.0, 5.0 + 1e-9, 0.25)]
            assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_matches_density_tail_mass(self):
        # independent route: integrate the density outside [-z, z]
        z = std_normal_quantile(1 - 0.05 / 2)
        for kappa, sigma0 in ((2.0, 1.2), (0.5, 1.0), (-1.0, 2.0), (3.0, 1.5)):
            params = BanditParams(kappa, sigma0)
            inside, _ = quad(lambda y: bandit_pdf(y, params), 0.0, z, limit=200)
            tail = 1.0 - 2.0 * inside
            assert abs(tab_rejection_probability(params, 0.05) - tail) <= 1e-8

    def test_clamped_to_unit_interval(self):
        assert 0.0 <= tab_rejection_probability(BanditParams(50.0, 1.0), 0.05) <= 1.0
        assert 0.0 <= tab_rejection_probability(BanditParams(-50.0, 1.0), 0.05) <= 1.0

    def test_alpha_domain(self):
        with pytest.raises(InvalidArgumentError):
            tab_rejection_probability(BanditParams(0.0, 1.0), 0.0)
        with pytest.raises(InvalidArgumentError):
            tab_rejection_probability(BanditParams(0.0, 1.0), 1.0)
