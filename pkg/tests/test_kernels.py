import math

import numpy as np
import pytest
from scipy import stats

from recmix.kernels import (GammaRate, Normal, Poisson, likelihood_table, loglik_curve,
                            marginal_density, mixture_on_x_raw, posterior_reweight, x_measure)
from recmix.measure import DegenerateDensity, atoms_measure, make_measure, mixture, normalize

from .conftest import random_density


class TestSamplingModels:
    def test_normal_matches_scipy(self):
        x = np.linspace(-1, 2, 7)
        np.testing.assert_allclose(Normal(0.3).log_density(x, 0.4), stats.norm.logpdf(x, 0.4, 0.3))

    def test_poisson_matches_scipy(self):
        k = np.arange(12.0)
        np.testing.assert_allclose(Poisson().log_density(k, 3.2), stats.poisson.logpmf(k, 3.2))

    def test_poisson_zero_mean(self):
        lp = Poisson().log_density(np.array([0.0, 1.0, 4.0]), 0.0)
        assert lp[0] == 0.0
        assert np.all(np.isneginf(lp[1:]))

    def test_gamma_matches_scipy(self):
        x = np.linspace(0.1, 5, 9)
        np.testing.assert_allclose(GammaRate(2.5).log_density(x, 1.7),
                                   stats.gamma.logpdf(x, 2.5, scale=1 / 1.7))

    @pytest.mark.parametrize("model,theta", [(Normal(0.1), 0.3), (Poisson(), 4.0), (GammaRate(2.0), 1.5)])
    def test_densities_normalize_in_x(self, model, theta):
        if isinstance(model, Poisson):
            total = np.exp(model.log_density(np.arange(200.0), theta)).sum()
        else:
            grid = np.linspace(1e-9, 60, 600_001) if isinstance(model, GammaRate) else np.linspace(-2, 3, 200_001)
            total = np.trapezoid(np.exp(model.log_density(grid, theta)), grid)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_count_validation(self):
        with pytest.raises(ValueError):
            Poisson().check_observations([1.0, 2.5])


class TestLoglikCurve:
    def test_poisson_zero(self):
        m = make_measure(0, 5, 51)
        np.testing.assert_allclose(loglik_curve(Poisson(), 0, m), np.exp(-m.support), rtol=1e-14)

    def test_normal_symmetric(self):
        m = make_measure(-3, 3, 61)
        c = loglik_curve(Normal(1.0), 0.0, m)
        np.testing.assert_allclose(c, c[::-1], rtol=1e-14)

    def test_agrees_with_exp_log_density(self, rng):
        m = make_measure(0, 20, 300, [0.0])
        for model, x in [(Normal(0.5), 3.3), (Poisson(), 7.0), (GammaRate(3.0), 0.8)]:
            direct = np.exp(model.log_density(x, m.support))
            np.testing.assert_allclose(loglik_curve(model, x, m), direct, rtol=1e-12, atol=1e-300)

    def test_table_rows_scaled_and_cached(self):
        m = make_measure(0, 10, 101)
        xs = np.array([3.0, 0.0, 3.0, 5.0, 0.0])
        tab = likelihood_table(Poisson(), xs, m)
        assert tab.rows.shape == (3, 101)
        assert tab.counts.tolist() == [2, 2, 1]
        np.testing.assert_allclose(tab.rows.max(axis=1), 1.0)
        rows, offsets = tab.expanded()
        direct = np.exp(Poisson().log_density(xs[:, None], m.support[None, :]))
        np.testing.assert_allclose(rows * np.exp(offsets)[:, None], direct, rtol=1e-12)


class TestMarginalDensity:
    def test_constant_kernel(self, const_kernel, rng):
        m = make_measure(0, 1, 50, [0.5])
        assert marginal_density(const_kernel, random_density(rng, m), 0.1) == pytest.approx(0.7, rel=1e-14)

    def test_point_mass(self):
        m = atoms_measure([0.25])
        f = normalize(np.ones(1), m)
        assert marginal_density(Normal(0.1), f, 0.3) == pytest.approx(stats.norm.pdf(0.3, 0.25, 0.1))

    def test_against_dense_riemann(self):
        m = make_measure(0, 1, 1000)
        f = normalize(np.ones(m.size), m)
        t = (np.arange(100_000) + 0.5) / 100_000
        oracle = np.mean(stats.norm.pdf(0.5, t, 0.1))
        assert abs(marginal_density(Normal(0.1), f, 0.5) - oracle) <= 1e-6

    def test_zero_is_degenerate(self):
        f = normalize(np.ones(1), atoms_measure([0.0]))
        with pytest.raises(DegenerateDensity):
            marginal_density(Poisson(), f, 3.0)

    def test_linear_in_f(self, rng):
        m = make_measure(0, 5, 80)
        f, g = random_density(rng, m), random_density(rng, m)
        a = 0.3
        h = mixture([f, g], [a, 1 - a])
        for x in (0.0, 2.0, 6.0):
            lhs = marginal_density(Poisson(), h, x)
            rhs = a * marginal_density(Poisson(), f, x) + (1 - a) * marginal_density(Poisson(), g, x)
            assert lhs == pytest.approx(rhs, rel=1e-12)

    @pytest.mark.parametrize("model,lo,hi", [(Normal(0.1), 0, 1), (Poisson(), 0, 50), (Normal(1.0), -10, 10)])
    def test_integrates_to_one_in_x(self, model, lo, hi, rng):
        theta = make_measure(lo, hi, 400)
        xm = x_measure(model, theta)
        for f in (normalize(np.ones(theta.size), theta), random_density(rng, theta)):
            raw = mixture_on_x_raw(model, f, xm)
            assert float(raw @ xm.weights) == pytest.approx(1.0, abs=1e-3)


class TestPosteriorReweight:
    def test_constant_kernel_is_identity(self, const_kernel, rng):
        m = make_measure(0, 1, 40)
        f = random_density(rng, m)
        np.testing.assert_allclose(posterior_reweight(const_kernel, f, 0.3).values, f.values, rtol=1e-13)

    def test_two_point_poisson(self, two_atom_uniform):
        post = posterior_reweight(Poisson(), two_atom_uniform, 0.0)
        z = 0.5 * (1 + math.exp(-1))
        np.testing.assert_allclose(post.values, [0.5 / z, 0.5 * math.exp(-1) / z], atol=1e-12)
        np.testing.assert_allclose(post.values, [0.7311, 0.2689], atol=1e-4)

    def test_mode_moves_toward_x(self):
        m = make_measure(-5, 5, 1001)
        prior = normalize(np.exp(-0.5 * (m.support / 0.8) ** 2), m)
        post = posterior_reweight(Normal(1.0), prior, 2.0)
        mode = m.support[np.argmax(post.values)]
        assert 0.0 < mode < 2.0
