import numpy as np
import pytest
from scipy.stats import multivariate_normal, norm

from leakyuq.copula import (
    RHO_CAP,
    CopulaModel,
    build_copula,
    copula_density,
    fit_rho,
    load_copula,
    pair_moment,
    read_samples,
    save_copula,
    std_normal_quantile,
    write_samples,
)
from leakyuq.exceptions import DegenerateLawError, DimensionError, FactorizationError, ValidationError
from leakyuq.linearization import SensitivityModel
from leakyuq.marginals import MarginalLaw, moments


def uniform_pair_moment(rho):
    # Two U[-1, 1] laws under a Gaussian copula: Pearson equals Spearman's rho.
    return (6.0 / np.pi) * np.arcsin(rho / 2.0) / 3.0


@pytest.fixture(scope="module")
def small_model():
    Q = np.array(
        [
            [1.0, 0.5, 0.7, 0.4, -0.6, 0.8],
            [0.4, -1.0, 0.3, 0.9, 0.5, -0.7],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.9, 0.6, -0.5, 0.7, 0.8, 0.4],
        ]
    )
    return SensitivityModel(np.array([0.5, -1.0, 2.0, 0.0]), Q, 0.8)


@pytest.fixture(scope="module")
def small_copula(small_model):
    return build_copula(small_model)


class TestNormal:
    def test_quantile_bounds(self):
        for u in (0.0, 1.0, -0.5, np.nan):
            with pytest.raises(ValidationError):
                std_normal_quantile(u)

    def test_quantile_values(self):
        u = np.array([1e-12, 0.025, 0.5, 0.975])
        np.testing.assert_allclose(std_normal_quantile(u), norm.ppf(u), rtol=1e-13)


class TestCopulaDensity:
    def test_identity_is_one(self, rng):
        u = rng.uniform(0.01, 0.99, (5, 3))
        np.testing.assert_allclose(copula_density(np.eye(3), u), 1.0, rtol=1e-14)

    def test_against_bivariate_normal(self, rng):
        R = np.array([[1.0, 0.6], [0.6, 1.0]])
        u = rng.uniform(0.01, 0.99, (20, 2))
        z = norm.ppf(u)
        expected = multivariate_normal(cov=R).pdf(z) / np.prod(norm.pdf(z), axis=1)
        np.testing.assert_allclose(copula_density(R, u), expected, rtol=1e-12)

    def test_not_positive_definite(self):
        with pytest.raises(FactorizationError):
            copula_density(np.array([[1.0, 1.2], [1.2, 1.0]]), np.array([0.3, 0.4]))

    def test_dimension(self):
        with pytest.raises(DimensionError):
            copula_density(np.eye(2), np.array([0.3, 0.4, 0.5]))


class TestPairMoment:
    law = MarginalLaw(0.0, [1.0], 1.0)

    @pytest.mark.parametrize("rho", [-0.9, -0.3, 0.0, 0.5, 0.95])
    def test_uniform_closed_form(self, rho):
        assert pair_moment(self.law, self.law, rho) == pytest.approx(uniform_pair_moment(rho), abs=1e-6)

    def test_centers_enter_product(self):
        a, b = MarginalLaw(2.0, [1.0, 0.5], 1.0), MarginalLaw(-3.0, [0.7], 1.0)
        assert pair_moment(a, b, 0.0) == pytest.approx(-6.0, abs=1e-12)

    def test_rejects_unit_rho(self):
        with pytest.raises(ValidationError):
            pair_moment(self.law, self.law, 1.0)

    def test_monotone(self):
        a, b = MarginalLaw(0.0, [1.0, 0.3], 1.0), MarginalLaw(0.0, [0.2, 0.9, 0.4], 1.0)
        vals = [pair_moment(a, b, r) for r in np.linspace(-0.99, 0.99, 21)]
        assert np.all(np.diff(vals) > 0)


class TestFitRho:
    law = MarginalLaw(0.0, [1.0], 1.0)

    @pytest.mark.parametrize("rho", [-0.7, 0.2, 0.5])
    def test_recovers_latent_rho(self, rho):
        fit = fit_rho(self.law, self.law, uniform_pair_moment(rho))
        assert not fit.clipped
        assert fit.rho == pytest.approx(rho, abs=1e-5)
        assert fit.residual < 1e-12

    def test_clips_unattainable(self):
        high = fit_rho(self.law, self.law, 1.0)
        low = fit_rho(self.law, self.law, -1.0)
        assert high.clipped and high.rho == RHO_CAP
        assert low.clipped and low.rho == -RHO_CAP

    def test_degenerate_partner(self):
        fit = fit_rho(self.law, MarginalLaw(1.0, [0.0], 1.0), 0.0)
        assert fit.rho == 0.0 and not fit.clipped


class TestBuildCopula:
    def test_structure(self, small_copula):
        R = small_copula.R
        np.testing.assert_array_equal(R, R.T)
        np.testing.assert_allclose(np.diag(R), 1.0)
        assert np.linalg.eigvalsh(R).min() > 0
        np.testing.assert_array_equal(small_copula.live, [True, True, False, True])
        np.testing.assert_array_equal(R[2], np.eye(4)[2])
        for key in ("pair_quadrature", "rho_solver", "psd_repair", "repair_shift_max", "max_relative_fit_residual"):
            assert key in small_copula.metadata

    def test_reproduces_pair_moments(self, small_model, small_copula):
        mom = moments(small_model)
        C = np.outer(mom.mean, mom.mean) + mom.covariance
        laws = small_copula.marginals
        for i, j in [(0, 1), (0, 3), (1, 3)]:
            assert pair_moment(laws[i], laws[j], small_copula.R[i, j]) == pytest.approx(C[i, j], abs=1e-10)

    def test_all_degenerate(self):
        with pytest.raises(DegenerateLawError):
            build_copula(SensitivityModel(np.ones(2), np.zeros((2, 3)), 1.0))


class TestSampling:
    def test_deterministic_and_thread_invariant(self, small_copula):
        a = small_copula.sample(3000, seed=11)
        np.testing.assert_array_equal(a, small_copula.sample(3000, seed=11))
        np.testing.assert_array_equal(a, small_copula.sample(3000, seed=11, workers=3))
        assert not np.array_equal(a, small_copula.sample(3000, seed=12))

    def test_prefix_stable(self, small_copula):
        np.testing.assert_array_equal(
            small_copula.sample(500, seed=3), small_copula.sample(70_000, seed=3)[:500]
        )

    def test_support_and_point_mass(self, small_copula):
        s = small_copula.sample(20_000, seed=1)
        assert np.all(s[:, 2] == 2.0)
        for j in (0, 1, 3):
            lo, hi = small_copula.marginals[j].support
            assert lo <= s[:, j].min() and s[:, j].max() <= hi

    def test_second_moments(self, small_model, small_copula):
        s = small_copula.sample(200_000, seed=2)
        mom = moments(small_model)
        C = np.outer(mom.mean, mom.mean) + mom.covariance
        np.testing.assert_allclose(s.T @ s / len(s), C, atol=0.01)


class TestJointDensity:
    def test_outside_support(self, small_copula):
        g = np.array([100.0, -1.0, 2.0, 0.0])
        assert small_copula.joint_density(g) == 0.0

    def test_marginalizes(self, small_copula):
        pair = small_copula.marginal([0, 3])
        li, lj = pair.marginals
        x, w = np.polynomial.legendre.leggauss(8)
        lo, hi = lj.support
        edges = np.linspace(lo, hi, 41)
        a, b = edges[:-1, None], edges[1:, None]
        nodes = (0.5 * (b - a) * (x + 1) + a).ravel()
        wts = (0.5 * (b - a) * w).ravel()
        gi = np.linspace(*li.support, 22)[1:-1]
        pts = np.stack([np.repeat(gi, nodes.size), np.tile(nodes, gi.size)], axis=1)
        vals = pair.joint_density(pts).reshape(gi.size, nodes.size) @ wts
        np.testing.assert_allclose(vals, li.pdf(gi), atol=1e-3)

    def test_all_point_masses(self):
        cop = CopulaModel(np.eye(2), [MarginalLaw(0, [0.0], 1), MarginalLaw(1, [0.0], 1)])
        with pytest.raises(DegenerateLawError):
            cop.joint_density(np.array([0.0, 1.0]))

    def test_dimension(self, small_copula):
        with pytest.raises(DimensionError):
            small_copula.joint_density(np.zeros(3))


class TestPersistence:
    def test_copula_round_trip(self, small_copula, tmp_path):
        path = tmp_path / "c.json"
        save_copula(small_copula, path)
        back = load_copula(path)
        np.testing.assert_array_equal(back.R, small_copula.R)
        np.testing.assert_array_equal(back.sample(100, seed=4), small_copula.sample(100, seed=4))

    def test_samples_round_trip(self, small_copula, tmp_path):
        s = small_copula.sample(50, seed=0)
        write_samples(s, tmp_path / "s.csv")
        np.testing.assert_array_equal(read_samples(tmp_path / "s.csv"), s)

    def test_bad_file(self, tmp_path):
        from leakyuq.exceptions import ParseError

        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(ParseError):
            load_copula(tmp_path / "bad.json")
        (tmp_path / "bad2.json").write_text('{"R": [[1]]}')
        with pytest.raises(ParseError):
            load_copula(tmp_path / "bad2.json")
