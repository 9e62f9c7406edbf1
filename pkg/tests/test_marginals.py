import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr

from lawquad import integrate_law

from leakyuq.exceptions import CapabilityError, DegenerateLawError, ValidationError
from leakyuq.linearization import SensitivityModel, sensitivity
from leakyuq.marginals import (
    MarginalLaw,
    characteristic_function,
    marginal_laws,
    marginal_pdf,
    marginal_pdf_oracle,
    moments,
    read_curve,
)
from leakyuq.montecarlo import empirical_moments, ks_statistic, run_ensemble


class TestCharacteristicFunction:
    def test_at_zero(self):
        assert characteristic_function(MarginalLaw(0.0, [1.0, 2.0], 0.3), 0.0) == 1.0

    def test_single_rect_zero(self):
        assert abs(characteristic_function(MarginalLaw(0.0, [1.0], 1.0), np.pi)) < 1e-16

    def test_two_factor_value(self):
        law = MarginalLaw(0.0, [1.0, 2.0], 0.5)
        expected = np.sin(0.5) / 0.5 * np.sin(1.0) / 1.0
        assert abs(characteristic_function(law, 1.0) - expected) < 1e-15

    def test_zero_coefficients_contribute_one(self):
        a = np.linspace(0, 20, 11)
        np.testing.assert_array_equal(
            MarginalLaw(0.0, [1.0, 0.0, 0.5], 1.0).characteristic_function(a),
            MarginalLaw(0.0, [1.0, 0.5], 1.0).characteristic_function(a),
        )


class TestMarginalPdf:
    def test_uniform(self):
        law = MarginalLaw(0.7, [1.0], 1.0)
        assert marginal_pdf(law, 0.7) == 0.5
        assert marginal_pdf(law, 2.0) == 0.0

    def test_triangle_apex(self):
        law = MarginalLaw(0.0, [1.0, 1.0], 1.0)
        assert marginal_pdf(law, 0.0) == pytest.approx(0.5, abs=1e-12)
        assert marginal_pdf(law, 1.0) == pytest.approx(0.25, abs=1e-12)

    def test_matches_oracle_k5(self, rng):
        law = MarginalLaw(0.2, rng.uniform(-1, 1, 5), 0.7)
        g = law.center + np.linspace(-1.05, 1.05, 50) * law.support_radius
        np.testing.assert_allclose(law.pdf(g), law.pdf_oracle(g), atol=1e-6)

    @pytest.mark.parametrize("K", [2, 3, 4, 7, 12])
    def test_tight_oracle_agreement(self, K):
        law = MarginalLaw(-1.0, np.random.default_rng(K).uniform(0.05, 1.0, K), 1.3)
        g = law.center + np.linspace(-1, 1, 41) * law.support_radius
        assert np.abs(law.pdf(g) - law.pdf_oracle(g)).max() < 1e-9

    def test_oracle_k3_against_sampling(self):
        # 10^7 sums of three U[-1, 1]; density at 0 is 3/8.
        gen = np.random.default_rng(0)
        n, h = 10_000_000, 0.02
        s = gen.uniform(-1, 1, (n, 3)).sum(axis=1)
        frac = np.mean(np.abs(s) < h / 2)
        est, se = frac / h, np.sqrt(frac * (1 - frac) / n) / h
        oracle = MarginalLaw(0.0, [1.0, 1.0, 1.0], 1.0).pdf_oracle(0.0)
        assert oracle == pytest.approx(3 / 8, abs=1e-14)
        assert abs(est - oracle) < 3 * se + 1e-5  # O(h^2) bin bias

    def test_zero_outside_support(self, rng):
        law = MarginalLaw(1.0, rng.uniform(-1, 1, 6), 0.4)
        s = law.support_radius
        assert np.all(law.pdf(law.center + s * np.array([-3.0, -1.0 - 1e-12, 1.0 + 1e-9, 5.0])) == 0.0)

    def test_symmetric(self, rng):
        law = MarginalLaw(0.3, rng.uniform(-1, 1, 9), 0.5)
        t = np.linspace(0, law.support_radius, 33)
        np.testing.assert_allclose(law.pdf(law.center + t), law.pdf(law.center - t), atol=1e-10)

    @pytest.mark.parametrize("K", [1, 2, 3, 6, 12])
    def test_normalized_with_right_variance(self, K):
        law = MarginalLaw(0.0, np.random.default_rng(100 + K).uniform(-1, 1, K), 0.8)
        assert integrate_law(law) == pytest.approx(1.0, abs=1e-6)
        assert integrate_law(law, lambda x: x**2) == pytest.approx(law.variance, rel=1e-4)
        assert law.variance == pytest.approx(0.8**2 / 3 * np.sum(law.coeffs**2), rel=1e-14)

    def test_zero_coefficient_bitwise_invariant(self, rng):
        q = rng.uniform(-1, 1, 5)
        g = np.linspace(-2, 2, 17)
        a = MarginalLaw(0.0, q, 0.6).pdf(g)
        b = MarginalLaw(0.0, np.insert(q, 2, 0.0), 0.6).pdf(g)
        np.testing.assert_array_equal(a, b)

    def test_tiny_coefficients_ignored(self):
        law = MarginalLaw(0.0, [1.0, 1e-15, 0.5], 1.0)
        assert law.K == 2

    def test_degenerate(self):
        law = MarginalLaw(2.0, [0.0, 0.0], 1.0)
        assert law.is_degenerate
        with pytest.raises(DegenerateLawError):
            law.pdf(2.0)
        assert law.cdf(1.9) == 0.0 and law.cdf(2.0) == 1.0
        assert law.inverse_cdf(0.3) == 2.0

    def test_oracle_capability_limit(self):
        with pytest.raises(CapabilityError):
            marginal_pdf_oracle(MarginalLaw(0.0, np.ones(21), 1.0), 0.0)

    def test_per_component_beta(self):
        a = MarginalLaw(0.0, [1.0, 2.0], [0.5, 0.25])
        b = MarginalLaw(0.0, [0.5, 0.5], 1.0)
        g = np.linspace(-1, 1, 9)
        np.testing.assert_allclose(a.pdf(g), b.pdf(g), atol=1e-14)


class TestCdf:
    def test_edges_and_median(self, rng):
        law = MarginalLaw(0.5, rng.uniform(-1, 1, 4), 1.0)
        lo, hi = law.support
        assert law.cdf(lo) == 0.0 and law.cdf(hi) == 1.0
        assert law.inverse_cdf(0.5) == pytest.approx(0.5, abs=1e-10)
        assert law.inverse_cdf(0.0) == lo and law.inverse_cdf(1.0) == hi

    def test_monotone(self, rng):
        law = MarginalLaw(0.0, rng.uniform(-1, 1, 8), 1.0)
        F = law.cdf(np.linspace(*law.support, 2001))
        assert np.all(np.diff(F) >= 0)

    @pytest.mark.parametrize("K", [1, 2, 3, 5, 10, 31])
    def test_inverse_round_trip(self, K):
        law = MarginalLaw(0.0, np.random.default_rng(K).uniform(-1, 1, K), 0.5)
        g = np.linspace(*law.support, 301)[1:-1]
        keep = law.pdf(g) > 1e-3 * law.pdf(law.center)
        np.testing.assert_allclose(law.inverse_cdf(law.cdf(g[keep])), g[keep], atol=1e-8)

    def test_against_sampling(self):
        law = MarginalLaw(0.0, np.random.default_rng(4).uniform(-1, 1, 4), 1.0)
        gen = np.random.default_rng(44)
        x = gen.uniform(-1, 1, (1_000_000, 4)) @ law.coeffs
        assert ks_statistic(x, law.cdf) < 0.002

    def test_against_oracle_integral(self):
        law = MarginalLaw(0.0, [1.0, 1.0], 1.0)
        g = np.linspace(-2, 2, 21)
        exact = np.where(g < 0, (g + 2) ** 2 / 8, 1 - (2 - g) ** 2 / 8)
        np.testing.assert_allclose(law.cdf(g), exact, atol=1e-7)

    def test_rejects_bad_probability(self):
        law = MarginalLaw(0.0, [1.0, 1.0], 1.0)
        for u in (-0.1, 1.1, np.nan):
            with pytest.raises(ValidationError):
                law.inverse_cdf(u)

    def test_latent_quantile_is_composition(self):
        law = MarginalLaw(0.0, [1.0, 0.4, 0.3], 1.0)
        x = np.linspace(-4, 4, 17)
        np.testing.assert_allclose(law.latent_quantile(x), law.inverse_cdf(ndtr(x)), atol=1e-9)
        np.testing.assert_allclose(law.latent_quantile(x), -law.latent_quantile(-x), atol=1e-15)

    def test_curve_export(self, tmp_path):
        law = MarginalLaw(1.0, [1.0, 0.5, 0.2], 0.3)
        path = tmp_path / "c.csv"
        law.write_curve(path, 64)
        g, p, F = read_curve(path)
        np.testing.assert_array_equal(g, law.curve(64)[0])
        np.testing.assert_array_equal(p, law.pdf(g))
        assert F[0] == 0.0 and F[-1] == 1.0


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(-2, 2).filter(lambda v: abs(v) > 1e-3), min_size=2, max_size=6), st.floats(0.05, 2.0))
def test_pdf_nonnegative_and_bounded(coeffs, beta):
    law = MarginalLaw(0.0, coeffs, beta)
    g = np.linspace(-1.1, 1.1, 23) * law.support_radius
    p = law.pdf(g)
    assert np.all(p >= 0)
    # Convolution cannot exceed the tallest single rectangle.
    assert p.max() <= 0.5 / law.half_widths.max() + 1e-9


class TestMoments:
    def test_unit_row(self):
        model = SensitivityModel(np.array([2.0]), np.array([[1.0, 0.0]]), 1.0)
        mom = moments(model)
        assert mom.covariance[0, 0] == pytest.approx(1 / 3)
        assert mom.mean[0] == 2.0

    def test_zero_beta(self, net3, mu31):
        mom = moments(sensitivity(net3, mu31, 0.0))
        assert np.all(mom.covariance == 0.0)
        np.testing.assert_array_equal(mom.correlation, np.eye(31))

    def test_symmetric_psd(self, net3, mu31):
        mom = moments(sensitivity(net3, mu31, 0.3))
        np.testing.assert_array_equal(mom.covariance, mom.covariance.T)
        assert np.linalg.eigvalsh(mom.covariance).min() > -1e-14
        np.testing.assert_allclose(np.diag(mom.correlation), 1.0)

    def test_per_component_amplitudes(self):
        Q = np.array([[1.0, 2.0], [0.5, -1.0]])
        beta = np.array([0.2, 0.7])
        cov = moments(SensitivityModel(np.zeros(2), Q, beta)).covariance
        np.testing.assert_allclose(cov, (Q * beta) @ (Q * beta).T / 3, atol=1e-16)

    def test_variance_against_sampling(self):
        net = __import__("leakyuq").init_net(31, 32, 3, seed=21, bias_scale=1.0)
        mu = np.linspace(-1, 1, 31)
        # Small enough that no preactivation changes sign.
        model = sensitivity(net, mu, 1e-4)
        ens = run_ensemble(net, mu, 1e-4, 1_000_000, seed=5)
        np.testing.assert_allclose(np.diag(empirical_moments(ens).covariance), np.diag(moments(model).covariance), rtol=0.01)

    def test_laws_per_component(self, net3, mu31):
        model = sensitivity(net3, mu31, 0.2)
        laws = marginal_laws(model)
        assert len(laws) == 31
        np.testing.assert_allclose([l.variance for l in laws], np.diag(moments(model).covariance), rtol=1e-12)
