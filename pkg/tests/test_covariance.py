import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from qvsmooth.covariance import (CovarianceModel, SiteSet, bessel_k, covariance_matrix, g_nu,
                                 matern, power_exponential)
from qvsmooth.designs import exp1_phi, exp2_gamma, exp2_phi, EXP2_L, curve_sites, line_sites
from qvsmooth.errors import DesignError, DomainError

# K_nu(x) frozen from 30-digit mpmath evaluations.
FROZEN_K = [
    (0.5, 1.0, 0.46106850444789456),
    (1.5, 2.0, 0.17990665795209217),
    (0.3, 1e-7, 231.8205205151199),
    (2.5, 0.5, 20.425904466498485),
    (1.9, 3.0, 0.058232296485967658),
    (4.2, 10.0, 4.087621871704048e-5),
    (0.75, 49.5, 5.682478150100011e-23),
    (15.0, 0.3, 9.9382871416449126e+22),
    (1.0, 2.0, 0.13986588181652243),
    (7.0, 25.0, 9.0076148077980043e-12),
    (0.0, 1.0, 0.42102443824070833),
    (0.0, 0.01, 4.7212447301610949),
]


def k_quadrature(nu, x):
    """Integral representation: int_0^inf exp(-x cosh t) cosh(nu t) dt."""
    # beyond t_max the integrand is below exp(-700)
    t_max = math.acosh(1.0 + 750.0 / x)
    val, _ = integrate.quad(
        lambda t: 0.5 * (math.exp(nu * t - x * math.cosh(t)) + math.exp(-nu * t - x * math.cosh(t))),
        0, t_max, epsabs=0, epsrel=1e-13, limit=400)
    return val


class TestGNu:
    def test_examples(self):
        assert g_nu(1.0, 0.75) == 1.0
        assert g_nu(1.0, 1.0) == 0.0
        assert g_nu(0.5, 2.0) == pytest.approx(-0.04332169878499658, rel=1e-14)

    def test_zero_branch(self):
        assert g_nu(0.0, 0.5) == 0.0
        assert g_nu(0.0, 2.0) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            g_nu(-0.1, 0.5)

    def test_near_integer_uses_log_branch(self):
        assert g_nu(0.5, 1.0 + 1e-13) == pytest.approx(0.25 * math.log(0.5), rel=1e-12)
        assert g_nu(0.5, 1.0 + 1e-9) > 0

    @given(st.floats(1e-6, 2.0), st.floats(0.01, 5.0))
    def test_sign_law(self, s, nu):
        if abs(nu - round(nu)) < 1e-6:
            return
        assert g_nu(s, nu) > 0

    @given(st.floats(1e-6, 0.999), st.integers(1, 5))
    def test_integer_negative_below_one(self, s, p):
        assert g_nu(s, float(p)) < 0


class TestBessel:
    @pytest.mark.parametrize("nu,x,expected", FROZEN_K)
    def test_frozen_values(self, nu, x, expected):
        assert bessel_k(nu, x) == pytest.approx(expected, rel=1e-12)

    def test_closed_forms(self):
        x = np.linspace(0.05, 50, 400)
        half = np.sqrt(np.pi / (2 * x)) * np.exp(-x)
        assert np.allclose(bessel_k(0.5, x), half, rtol=1e-13, atol=0)
        assert np.allclose(bessel_k(1.5, x), half * (1 + 1 / x), rtol=1e-13, atol=0)
        assert bessel_k(0.5, 1.0) == pytest.approx(math.sqrt(math.pi / 2) / math.e, rel=1e-14)
        assert bessel_k(1.5, 2.0) == pytest.approx(math.sqrt(math.pi / 4) * math.exp(-2) * 1.5, rel=1e-14)

    @pytest.mark.parametrize("nu", [0.0, 0.25, 0.5, 1.0, 1.3, 2.0, 3.7, 6.0])
    @pytest.mark.parametrize("x", [0.05, 0.7, 1.99, 2.01, 4.0, 12.0])
    def test_integral_representation(self, nu, x):
        assert bessel_k(nu, x) == pytest.approx(k_quadrature(nu, x), rel=1e-10)

    def test_against_scipy_everywhere(self):
        x = np.logspace(-8, math.log10(50), 3000)
        for nu in [0.0, 0.1, 0.49, 0.5, 0.51, 0.9, 1.0, 1.5, 1.9, 2.5, 5.5, 9.99, 15.0]:
            rel = np.abs(bessel_k(nu, x) / special.kv(nu, x) - 1)
            assert rel.max() <= 1e-10, nu

    @given(st.floats(0.0, 15.0), st.floats(1e-8, 49.0), st.floats(1e-3, 1.0))
    @settings(max_examples=200)
    def test_monotone_decreasing(self, nu, x, dx):
        assert bessel_k(nu, x + dx) < bessel_k(nu, x)

    def test_branch_seam_continuous(self):
        for nu in (0.0, 0.4, 1.5, 3.2):
            lo, hi = bessel_k(nu, 2.0), bessel_k(nu, np.nextafter(2.0, 3.0))
            assert abs(hi / lo - 1) < 1e-13

    def test_array_shape_preserved(self):
        x = np.linspace(0.1, 3, 12).reshape(3, 4)
        assert bessel_k(1.2, x).shape == (3, 4)

    @pytest.mark.parametrize("x", [0.0, -1.0, np.nan])
    def test_domain(self, x):
        with pytest.raises(DomainError):
            bessel_k(1.0, x)

    def test_order_bounds(self):
        with pytest.raises(DomainError):
            bessel_k(15.5, 1.0)


class TestMatern:
    def test_examples(self):
        assert matern(CovarianceModel(0.5), 1.0) == pytest.approx(math.exp(-1), rel=1e-13)
        assert matern(CovarianceModel(1.5), 1.0) == pytest.approx(2 * math.exp(-1), rel=1e-13)
        assert matern(CovarianceModel(1.2, 3.0, 2.0), 0.0) == 4.0

    def test_closed_forms_grid(self):
        r = np.linspace(1e-6, 10, 2000)
        for a, s in [(1.0, 1.0), (2.5, 0.7)]:
            m05 = matern(CovarianceModel(0.5, a, s), r)
            m15 = matern(CovarianceModel(1.5, a, s), r)
            assert np.allclose(m05, s * s * np.exp(-a * r), rtol=1e-10, atol=0)
            assert np.allclose(m15, s * s * (1 + a * r) * np.exp(-a * r), rtol=1e-10, atol=0)

    @pytest.mark.parametrize("nu", [0.1, 0.5, 1.0, 1.5, 2.0, 2.5])
    def test_nonincreasing(self, nu):
        r = np.linspace(0, 10, 1000)
        vals = matern(CovarianceModel(nu), r)
        assert np.all(np.diff(vals) <= 0)
        assert np.all(vals > 0)

    def test_continuous_at_zero(self):
        # leading departure from sigma^2 is beta* r^{2 nu} for nu < 1
        for nu in (0.3, 0.5, 0.8):
            m = CovarianceModel(nu)
            r = 1e-9
            assert matern(m, r) - 1 == pytest.approx(m.beta_star * r ** (2 * nu), rel=1e-3)

    def test_invalid_parameters(self):
        for args in [(0.0, 1, 1), (1.0, -1, 1), (1.0, 1, 0)]:
            with pytest.raises(DomainError):
                CovarianceModel(*args)

    def test_beta_star_matches_small_lag_expansion(self):
        # For nu = 1/2 the covariance is exp(-r) = 1 - r + ..., so beta* = -1.
        assert CovarianceModel(0.5).beta_star == pytest.approx(-1.0, rel=1e-14)
        # nu = 3/2: (1 + r) e^{-r} = 1 - r^2/2 + r^3/3 - ..., so beta* = 1/3.
        assert CovarianceModel(1.5).beta_star == pytest.approx(1 / 3, rel=1e-13)
        # nu = 1: r K_1(r) = 1 + (r^2/4)(2 log(r/2) + 2 gamma - 1) + O(r^4 log r)
        m = CovarianceModel(1.0)
        assert m.beta_star == pytest.approx(0.5, rel=1e-14)
        r = np.array([1e-3, 3e-3, 1e-2])
        resid = matern(m, r) - 1 - r ** 2 / 4 * (2 * np.euler_gamma - 1 - 2 * np.log(2))
        assert np.allclose(resid / (r ** 2 * np.log(r)), m.beta_star, rtol=1e-3)
        # scaling: beta* grows like alpha^{2 nu} sigma^2
        assert CovarianceModel(0.7, 2.0, 3.0).beta_star == pytest.approx(
            9 * 2 ** 1.4 * CovarianceModel(0.7).beta_star, rel=1e-13)


class TestCovarianceMatrix:
    def test_single_site(self):
        K = covariance_matrix(CovarianceModel(0.5, sigma=2.0), SiteSet(np.array([[0.3]])))
        assert K.shape == (1, 1) and K[0, 0] == 4.0

    def test_two_sites(self):
        K = covariance_matrix(CovarianceModel(0.5), SiteSet(np.array([[0.0], [1.0]])))
        e = math.exp(-1)
        assert np.allclose(K, [[1, e], [e, 1]], rtol=1e-14)

    def test_exact_symmetry_and_diagonal(self):
        rng = np.random.default_rng(2)
        pts = rng.random((60, 2))
        K = covariance_matrix(CovarianceModel(1.3, 2.0, 1.5), SiteSet(pts))
        assert np.array_equal(K, K.T)
        assert np.all(np.diag(K) == 2.25)

    def test_duplicates_rejected(self):
        with pytest.raises(DesignError):
            covariance_matrix(CovarianceModel(0.5), SiteSet(np.array([[0.1], [0.2], [0.1]])))

    @pytest.mark.parametrize("nu", [0.5, 1.5, 2.5])
    def test_numerically_psd_on_experiment_designs(self, nu):
        for sites in (line_sites(exp1_phi, 300).site_set(),
                      curve_sites(exp2_gamma, exp2_phi, EXP2_L, 300).site_set()):
            K = covariance_matrix(CovarianceModel(nu), sites)
            assert np.linalg.eigvalsh(K).min() > -1e-8

    def test_generic_radial_kernel(self):
        k = power_exponential(0.5, c=1.0)
        K = covariance_matrix(k, SiteSet(np.array([[0.0], [2.0]])))
        assert K[0, 1] == pytest.approx(math.exp(-2))
