"""Prior calibration tests.

Frozen reference values were computed with oracles that do not share code
with the implementation: quadrature plus bisection for the variance scale,
a customer-by-customer recurrence for cluster-count probabilities, and full
set-partition enumeration for the small-n pmf.
"""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from dpmbart import (
    AlphaPrior,
    BaselineG0,
    CalibrationError,
    Dataset,
    MuPrior,
    TreePrior,
    calibrate_alpha_prior,
    calibrate_g0,
    calibrate_lambda,
    calibrate_priors,
    calibrate_sigma_prior,
    calibrate_tau,
    cluster_count_mode,
    default_i_max,
    log_p_clusters_given_alpha,
    marginal_mu_quantile,
    stirling_log_row,
)

# lam solving P(sigma < 1) = q under sigma^2 ~ nu*lam/chisq_nu, found by
# bisection on the quadrature of the chisq density (200 halvings)
LAM_NU3_Q90 = 0.19479145805172776
LAM_NU10_Q95 = 0.39402991361190576

# 0.975 quantile of the location marginal mu0 + sqrt(lam/k0) t_nu at
# nu=10, lam=1, k0=4; cross-checked below against the mixture cdf
MU_Q975_ANCHOR = 1.1140694259824693

# P(sigma < 0.5) for the two default calibrations at sigma_hat = 1,
# from quadrature of the chisq tail
P_BELOW_HALF_NU3 = 0.5053754668454137
P_BELOW_HALF_NU10 = 0.10667553338424707


def chisq_tail(thresh, nu):
    val, _ = integrate.quad(lambda x: stats.chi2.pdf(x, nu), thresh, np.inf)
    return val


def bisect_lambda(nu, q, sigma_hat=1.0):
    """Oracle for calibrate_lambda: invert P(sigma < sigma_hat) = q by
    bisection, with the tail probability from quadrature."""
    lo, hi = 1e-8, 100.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chisq_tail(nu * mid / sigma_hat ** 2, nu) > q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def crp_cluster_pmf(alpha, n):
    """P(I = i | alpha, n) by the seat-by-seat recurrence: customer c+1
    opens a new cluster with probability alpha/(alpha+c)."""
    p = np.zeros(n + 1)
    p[1] = 1.0
    for c in range(1, n):
        q = np.zeros(n + 1)
        q[1:] = p[1:] * c / (alpha + c) + p[:-1] * alpha / (alpha + c)
        p = q
    return p[1:]


def set_partitions(items):
    if len(items) == 1:
        yield [items]
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def stirling_unsigned_exact(n):
    """Integer |s(n, i)| for i = 0..n via the triangular recurrence."""
    row = [1]
    for k in range(n):
        new = [0] * (k + 2)
        for i in range(1, k + 2):
            new[i] = row[i - 1] + (k * row[i] if i <= k else 0)
        row = new
    return row


class TestLambdaCalibration:
    def test_default_anchor(self):
        assert calibrate_lambda(1.0, 3, 0.90) == pytest.approx(
            LAM_NU3_Q90, rel=1e-12)

    def test_base_distribution_anchor(self):
        assert calibrate_lambda(1.0, 10, 0.95) == pytest.approx(
            LAM_NU10_Q95, rel=1e-12)

    @pytest.mark.parametrize("nu,q", [(5.0, 0.80), (2.5, 0.99), (30.0, 0.5)])
    def test_matches_bisection_oracle(self, nu, q):
        assert calibrate_lambda(1.3, nu, q) == pytest.approx(
            bisect_lambda(nu, q, 1.3), rel=1e-6)

    def test_monte_carlo_quantile(self):
        # draw sigma from the prior and check the quantile property directly
        rng = np.random.default_rng(20260816)
        nu, q, sigma_hat = 3.0, 0.90, 2.0
        lam = calibrate_lambda(sigma_hat, nu, q)
        sigma = np.sqrt(nu * lam / rng.chisquare(nu, size=300_000))
        assert abs(np.mean(sigma < sigma_hat) - q) < 0.005

    def test_scales_with_sigma_hat_squared(self):
        base = calibrate_lambda(1.0, 3, 0.90)
        assert calibrate_lambda(2.0, 3, 0.90) == pytest.approx(4 * base)
        assert calibrate_lambda(0.1, 3, 0.90) == pytest.approx(0.01 * base)

    def test_tail_mass_ordering(self):
        # the base-distribution default concentrates harder around
        # sigma_hat than the homoscedastic default
        pb = chisq_tail(3 * calibrate_lambda(1.0, 3, 0.90) / 0.25, 3)
        pg = chisq_tail(10 * calibrate_lambda(1.0, 10, 0.95) / 0.25, 10)
        assert pb == pytest.approx(P_BELOW_HALF_NU3, abs=1e-9)
        assert pg == pytest.approx(P_BELOW_HALF_NU10, abs=1e-9)
        assert pg < pb / 4

    def test_rejects_degenerate_sigma_hat(self):
        with pytest.raises(CalibrationError, match="exact pilot fit"):
            calibrate_lambda(0.0, 3, 0.90)
        with pytest.raises(CalibrationError):
            calibrate_lambda(-1.0, 3, 0.90)
        with pytest.raises(CalibrationError):
            calibrate_lambda(math.nan, 3, 0.90)

    def test_rejects_bad_q_and_nu(self):
        with pytest.raises(CalibrationError):
            calibrate_lambda(1.0, 3, 0.0)
        with pytest.raises(CalibrationError):
            calibrate_lambda(1.0, 3, 1.0)
        with pytest.raises(CalibrationError):
            calibrate_lambda(1.0, 0.0, 0.9)


class TestTauCalibration:
    def test_unit_range_default_settings(self):
        y = np.array([0.0, 0.25, 0.5, 1.0])
        # 1 / (2 * 2 * sqrt(200))
        assert calibrate_tau(y, shrink_k=2.0, m=200) == pytest.approx(
            0.017677669529663688, rel=1e-12)

    def test_arithmetic(self):
        rng = np.random.default_rng(7)
        y = rng.normal(3.0, 2.0, size=50)
        k, m = 1.5, 37
        expect = (y.max() - y.min()) / (2 * k * math.sqrt(m))
        assert calibrate_tau(y, shrink_k=k, m=m) == pytest.approx(expect)

    def test_rejects_constant_response(self):
        with pytest.raises(CalibrationError, match="constant"):
            calibrate_tau(np.ones(10))

    def test_rejects_bad_settings(self):
        y = np.array([0.0, 1.0])
        with pytest.raises(CalibrationError):
            calibrate_tau(y, shrink_k=0.0)
        with pytest.raises(CalibrationError):
            calibrate_tau(y, m=0)


class TestSigmaPrior:
    def test_defaults(self):
        prior = calibrate_sigma_prior(1.0)
        assert prior.nu == 3.0
        assert prior.q == 0.90
        assert prior.lam == pytest.approx(LAM_NU3_Q90, rel=1e-12)
        assert prior.sigma_hat == 1.0


class TestG0Calibration:
    def test_worked_example(self):
        e = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])  # sd = sqrt(2.5), max = 2
        g0 = calibrate_g0(e)
        assert g0.nu == 10.0
        assert g0.mu0 == 0.0
        assert g0.lam == pytest.approx(2.5 * LAM_NU10_Q95, rel=1e-12)
        assert g0.k0 == pytest.approx(100.0 * g0.lam / 4.0, rel=1e-12)

    def test_k0_puts_extreme_at_ks_sds(self):
        rng = np.random.default_rng(11)
        e = rng.standard_t(3, size=200)
        g0 = calibrate_g0(e, ks=10.0)
        marginal_sd_scale = math.sqrt(g0.lam / g0.k0)
        assert np.max(np.abs(e)) == pytest.approx(10.0 * marginal_sd_scale)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(12)
        e = rng.normal(size=100)
        a, b = calibrate_g0(e), calibrate_g0(5.0 * e)
        assert b.lam == pytest.approx(25.0 * a.lam, rel=1e-12)
        assert b.k0 == pytest.approx(a.k0, rel=1e-12)
        assert marginal_mu_quantile(b, 0.9) == pytest.approx(
            5.0 * marginal_mu_quantile(a, 0.9), rel=1e-12)

    def test_quantile_clipping_shrinks_spread_anchor(self):
        rng = np.random.default_rng(13)
        e = rng.standard_t(2, size=500)
        full = calibrate_g0(e)
        clipped = calibrate_g0(e, abs_resid_quantile=0.9)
        assert clipped.k0 > full.k0
        assert clipped.lam == full.lam

    def test_marginal_quantile_anchor(self):
        g0 = BaselineG0(nu=10.0, lam=1.0, mu0=0.0, k0=4.0)
        assert marginal_mu_quantile(g0, 0.975) == pytest.approx(
            MU_Q975_ANCHOR, rel=1e-10)

    def test_marginal_quantile_against_mixture_cdf(self):
        # oracle: P(mu < x) = E_c[Phi((x - mu0) sqrt(k0 c / (nu lam)))]
        # with c ~ chisq_nu, evaluated by quadrature at the frozen quantile
        nu, lam, k0 = 10.0, 1.0, 4.0

        def integrand(c):
            z = MU_Q975_ANCHOR * math.sqrt(k0 * c / (nu * lam))
            return stats.norm.cdf(z) * stats.chi2.pdf(c, nu)

        cdf, _ = integrate.quad(integrand, 0, np.inf)
        assert cdf == pytest.approx(0.975, abs=1e-8)

    def test_marginal_quantile_location_shift(self):
        g0 = BaselineG0(nu=10.0, lam=1.0, mu0=3.0, k0=4.0)
        assert marginal_mu_quantile(g0, 0.975) == pytest.approx(
            3.0 + MU_Q975_ANCHOR, rel=1e-10)
        assert marginal_mu_quantile(g0, 0.5) == pytest.approx(3.0)

    def test_point_mass_quantile(self):
        g0 = BaselineG0(nu=10.0, lam=1.0, mu0=0.0, k0=4.0,
                        point_mass=(1.7, 0.4))
        assert marginal_mu_quantile(g0, 0.975) == 1.7

    def test_rejects_too_few_or_flat_residuals(self):
        with pytest.raises(CalibrationError, match="at least 2"):
            calibrate_g0(np.array([1.0]))
        with pytest.raises(CalibrationError):
            calibrate_g0(np.zeros(5))

    def test_rejects_bad_quantile(self):
        e = np.array([-1.0, 0.0, 2.0])
        with pytest.raises(CalibrationError):
            calibrate_g0(e, abs_resid_quantile=0.0)
        with pytest.raises(CalibrationError):
            calibrate_g0(e, abs_resid_quantile=1.5)


class TestTreePrior:
    def test_split_probability_decays_with_depth(self):
        prior = TreePrior(split_base=0.95, split_power=2.0)
        assert prior.p_split(0) == pytest.approx(0.95)
        assert prior.p_split(1) == pytest.approx(0.95 / 4.0)
        assert prior.p_split(3) == pytest.approx(0.95 / 16.0)

    def test_rejects_bad_params(self):
        with pytest.raises(CalibrationError):
            TreePrior(split_base=1.5, split_power=2.0)
        with pytest.raises(CalibrationError):
            TreePrior(split_base=0.95, split_power=-1.0)


class TestStirlingRow:
    def test_n5_row(self):
        row = np.exp(stirling_log_row(5)[1:])
        np.testing.assert_allclose(row, [24, 50, 35, 10, 1], rtol=1e-12)

    def test_matches_exact_integers_through_n12(self):
        for n in range(1, 13):
            exact = stirling_unsigned_exact(n)
            logrow = stirling_log_row(n)
            assert logrow[0] == -np.inf
            for i in range(1, n + 1):
                assert logrow[i] == pytest.approx(
                    math.log(exact[i]), abs=1e-10)

    def test_base_cases(self):
        np.testing.assert_array_equal(stirling_log_row(0), [0.0])
        row1 = stirling_log_row(1)
        assert row1[0] == -np.inf and row1[1] == 0.0

    def test_cached_row_is_frozen(self):
        row = stirling_log_row(6)
        with pytest.raises(ValueError):
            row[1] = 0.0

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            stirling_log_row(-1)


class TestClusterCountPmf:
    @pytest.mark.parametrize("alpha", [0.3, 1.0, 7.5])
    @pytest.mark.parametrize("n", [5, 60])
    def test_matches_seating_recurrence(self, n, alpha):
        oracle = crp_cluster_pmf(alpha, n)
        got = np.array([math.exp(log_p_clusters_given_alpha(i, n, alpha))
                        for i in range(1, n + 1)])
        np.testing.assert_allclose(got, oracle, rtol=1e-10, atol=1e-300)

    @pytest.mark.parametrize("alpha", [0.2, 1.0, 9.0])
    def test_n2_closed_form(self, alpha):
        p1 = math.exp(log_p_clusters_given_alpha(1, 2, alpha))
        p2 = math.exp(log_p_clusters_given_alpha(2, 2, alpha))
        assert p1 == pytest.approx(1.0 / (1.0 + alpha), rel=1e-12)
        assert p2 == pytest.approx(alpha / (1.0 + alpha), rel=1e-12)

    @pytest.mark.parametrize("alpha", [1.0, 2.5])
    def test_partition_enumeration_n5(self, alpha):
        # sum exact assignment probabilities over all 52 set partitions
        from scipy.special import gammaln
        by_count = {}
        n_parts = 0
        for part in set_partitions(list(range(5))):
            n_parts += 1
            k = len(part)
            logp = (k * math.log(alpha)
                    + sum(math.lgamma(len(block)) for block in part)
                    + gammaln(alpha) - gammaln(alpha + 5))
            by_count[k] = by_count.get(k, 0.0) + math.exp(logp)
        assert n_parts == 52
        for i in range(1, 6):
            assert math.exp(log_p_clusters_given_alpha(i, 5, alpha)) == \
                pytest.approx(by_count[i], rel=1e-9)

    @pytest.mark.parametrize("alpha", [0.01, 1.0, 50.0])
    @pytest.mark.parametrize("n", [1, 4, 12])
    def test_normalizes(self, n, alpha):
        total = sum(math.exp(log_p_clusters_given_alpha(i, n, alpha))
                    for i in range(1, n + 1))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            log_p_clusters_given_alpha(0, 5, 1.0)
        with pytest.raises(ValueError):
            log_p_clusters_given_alpha(6, 5, 1.0)
        with pytest.raises(ValueError):
            log_p_clusters_given_alpha(1, 5, 0.0)


class TestClusterCountMode:
    def test_nondecreasing_in_alpha(self):
        modes = [cluster_count_mode(100, a)
                 for a in np.geomspace(1e-3, 100, 60)]
        assert all(b >= a for a, b in zip(modes, modes[1:]))
        assert modes[0] == 1
        assert modes[-1] > 20

    def test_matches_argmax_of_seating_pmf(self):
        for alpha in (0.5, 2.0, 10.0):
            pmf = crp_cluster_pmf(alpha, 40)
            assert cluster_count_mode(40, alpha) == int(np.argmax(pmf)) + 1


class TestAlphaPriorCalibration:
    def test_endpoint_modes_n100(self):
        prior = calibrate_alpha_prior(100)
        assert prior.i_min == 1 and prior.i_max == 10
        assert cluster_count_mode(100, prior.alpha_min) == 1
        assert cluster_count_mode(100, prior.alpha_max) == 10
        # alpha_max is the boundary: just below it the mode drops
        assert cluster_count_mode(100, prior.alpha_max * (1 - 1e-9)) == 9

    def test_min_endpoint_is_search_floor_for_mode_one(self):
        # the mode is already 1 at the smallest alpha searched
        prior = calibrate_alpha_prior(100)
        assert prior.alpha_min == 1e-3

    def test_grid_and_weights(self):
        prior = calibrate_alpha_prior(100)
        assert prior.grid.shape == (100,)
        assert prior.grid[0] == prior.alpha_min
        assert prior.grid[-1] == prior.alpha_max
        t = (prior.grid - prior.alpha_min) / (prior.alpha_max
                                              - prior.alpha_min)
        np.testing.assert_allclose(prior.weights, np.sqrt(1.0 - t),
                                   rtol=1e-12)
        assert prior.weights[0] == 1.0
        assert prior.weights[-1] == 0.0
        assert prior.log_weights[-1] == -np.inf

    def test_default_i_max(self):
        assert default_i_max(100) == 10
        assert default_i_max(200) == 20
        assert default_i_max(25) == 2
        assert default_i_max(9) == 2

    def test_degenerate_single_point_grid(self):
        prior = calibrate_alpha_prior(50, i_min=1, i_max=1)
        assert prior.grid.shape == (1,)
        assert prior.weights[0] == 1.0

    def test_unreachable_mode_raises(self):
        # for n=5 no alpha <= n puts the cluster-count mode at 5
        with pytest.raises(CalibrationError, match="no alpha"):
            calibrate_alpha_prior(5, i_min=1, i_max=5)

    def test_rejects_bad_targets(self):
        with pytest.raises(CalibrationError):
            calibrate_alpha_prior(100, i_min=5, i_max=2)
        with pytest.raises(CalibrationError):
            calibrate_alpha_prior(10, i_min=1, i_max=11)

    def test_weight_monotonicity_enforced(self):
        grid = np.array([0.1, 0.2, 0.3])
        with pytest.raises(CalibrationError, match="nonincreasing"):
            AlphaPrior(n=10, i_min=1, i_max=2, psi=0.5, alpha_min=0.1,
                       alpha_max=0.3, grid=grid,
                       weights=np.array([0.5, 1.0, 0.2]))


class TestMuPrior:
    def test_rejects_nonpositive_tau(self):
        with pytest.raises(CalibrationError):
            MuPrior(tau=0.0)


class TestCalibratePriors:
    @staticmethod
    def make_data(n=120, noise=0.5, seed=3):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-1, 1, size=n)
        y = 2.0 * x + noise * rng.normal(size=n)
        return Dataset.from_xy(x, y)

    def test_bundle_fields(self):
        data = self.make_data()
        priors = calibrate_priors(data, m=50)
        assert priors.tree.split_base == 0.95
        assert priors.tree.split_power == 2.0
        assert priors.mu.tau == pytest.approx(calibrate_tau(data.y, m=50))
        assert priors.sigma.nu == 3.0
        assert priors.g0.nu == 10.0
        assert priors.alpha.i_max == default_i_max(data.n)
        # pilot residual sd should sit near the true noise level
        assert 0.3 < priors.sigma.sigma_hat < 0.8

    def test_naive_variance_anchor(self):
        data = self.make_data()
        priors = calibrate_priors(data, naive=True, naive_fraction=0.8)
        expect = 0.8 * float(np.std(data.y, ddof=1))
        assert priors.sigma.sigma_hat == pytest.approx(expect)

    def test_exact_linear_pilot_fit_refuses(self):
        x = np.linspace(-1, 1, 30)
        data = Dataset.from_xy(x, 2.0 * x - 3.0)
        with pytest.raises(CalibrationError, match="exact pilot fit"):
            calibrate_priors(data)
