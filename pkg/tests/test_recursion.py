import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recmix import _loops
from recmix.evalx import l1_distance
from recmix.kernels import Normal, Poisson, posterior_reweight
from recmix.measure import DegenerateDensity, atoms_measure, integrate, make_measure, normalize
from recmix.npb import DPConfig, enumerate_exact
from recmix.recursion import (WeightSchedule, iterate_average, pare_exact, pare_run,
                              permutations_for, re_run, re_update)
from recmix.simgen import gen, ordered_counts, scenario

from .conftest import random_density


class TestWeightSchedule:
    def test_default_is_one_over_i_plus_one(self):
        np.testing.assert_allclose(WeightSchedule().weights(4), [1 / 2, 1 / 3, 1 / 4, 1 / 5])

    @pytest.mark.parametrize("alpha", [0.51, 0.67, 1.0])
    def test_valid_alphas(self, alpha):
        s = WeightSchedule(alpha)
        w = s.weights(1000)
        assert np.all((w > 0) & (w < 1))
        assert s.divergent_sum and s.square_summable

    @pytest.mark.parametrize("alpha", [0.5, 0.3, 1.2])
    def test_rejects_alphas_outside_range(self, alpha):
        with pytest.raises(ValueError):
            WeightSchedule(alpha)


class TestReUpdate:
    def test_full_weight_gives_posterior(self, bn_small):
        _, meas, model, f0 = bn_small
        f = re_update(f0, 0.4, 1.0, model)
        np.testing.assert_allclose(f.values, posterior_reweight(model, f0, 0.4).values, rtol=1e-15)

    def test_constant_kernel(self, const_kernel, rng):
        m = make_measure(0, 1, 30)
        f = random_density(rng, m)
        np.testing.assert_allclose(re_update(f, 0.2, 0.4, const_kernel).values, f.values, rtol=1e-13)

    def test_two_atom_poisson(self, two_atom_uniform):
        f1 = re_update(two_atom_uniform, 0.0, 0.5, Poisson())
        post0 = 1 / (1 + math.exp(-1))
        np.testing.assert_allclose(f1.values, [0.25 + 0.5 * post0, 0.25 + 0.5 * (1 - post0)], atol=1e-12)
        np.testing.assert_allclose(f1.values, [0.6156, 0.3844], atol=1e-4)

    def test_degenerate(self):
        f = normalize(np.ones(1), atoms_measure([0.0]))
        with pytest.raises(DegenerateDensity):
            re_update(f, 2.0, 0.5, Poisson())

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.01, 1.0), st.floats(-0.5, 1.5), st.integers(0, 10_000))
    def test_convex_combination(self, w, x, seed):
        rng = np.random.default_rng(seed)
        m = make_measure(0, 1, 25, [0.5])
        f = random_density(rng, m)
        post = posterior_reweight(Normal(0.2), f, x)
        g = re_update(f, x, w, Normal(0.2))
        lo = np.minimum(f.values, post.values)
        hi = np.maximum(f.values, post.values)
        assert np.all(g.values >= lo * (1 - 1e-12) - 1e-300)
        assert np.all(g.values <= hi * (1 + 1e-12))
        assert abs(integrate(g) - 1) <= 1e-10


class TestReRun:
    def test_matches_python_fold(self, bn_small):
        sc, meas, model, f0 = bn_small
        xs = gen(scenario("BN", n=25), 4, meas).xs
        f = f0
        for i, x in enumerate(xs, start=1):
            f = re_update(f, x, 1 / (i + 1), model)
        fast, trace = re_run(f0, xs, model=model)
        np.testing.assert_allclose(fast.values, f.values, rtol=1e-10)
        assert len(trace) == 25

    def test_n1_is_dp_posterior_mean(self, bn_small):
        _, meas, model, f0 = bn_small
        for alpha in (1.0, 0.7):
            sched = WeightSchedule(alpha)
            w1 = sched.weights(1)[0]
            f1, _ = re_run(f0, [0.62], sched, model)
            dp = enumerate_exact([0.62], DPConfig(f0, 1 / w1 - 1), model)
            assert l1_distance(f1, dp) <= 1e-12

    def test_order_dependence(self, bn_small):
        _, meas, model, f0 = bn_small
        xs = np.sort(gen(scenario("BN", n=30), 6, meas).xs)
        a, _ = re_run(f0, xs, model=model)
        b, _ = re_run(f0, xs[::-1], model=model)
        assert l1_distance(a, b) > 1e-3

    def test_sorted_counts_false_peak(self):
        sc = scenario("GP", m=500)
        meas = sc.measure()
        d = gen(sc, 3, meas)
        sorted_fit, _ = re_run(sc.f0(meas), ordered_counts(d.xs), model=sc.model())
        near_zero = meas.support <= 1.0
        assert sorted_fit.masses[near_zero].sum() > d.truth_f.masses[near_zero].sum()

    def test_predictive_recorded(self, bn_small):
        from recmix.kernels import marginal_density
        _, meas, model, f0 = bn_small
        _, trace = re_run(f0, [0.3, 0.5], model=model)
        assert trace.predictive[0] == pytest.approx(marginal_density(model, f0, 0.3), rel=1e-12)

    def test_degenerate_reports_index(self):
        f = normalize(np.ones(1), atoms_measure([0.0]))
        with pytest.raises(DegenerateDensity) as exc:
            re_run(f, [0.0, 0.0, 3.0], model=Poisson())
        assert exc.value.index == 2

    def test_checkpoints(self, bn_small):
        _, meas, model, f0 = bn_small
        xs = gen(scenario("BN", n=30), 1, meas).xs
        final, trace = re_run(f0, xs, model=model, checkpoints=[10, 30])
        np.testing.assert_allclose(trace.snapshots[1], final.masses, atol=1e-15)
        mid, _ = re_run(f0, xs[:10], model=model)
        np.testing.assert_allclose(trace.density_at(0).values, mid.values, rtol=1e-12)


class TestPare:
    def test_single_permutation_is_one_run(self, bn_small):
        _, meas, model, f0 = bn_small
        xs = gen(scenario("BN", n=20), 2, meas).xs
        est = pare_run(f0, xs, model=model, num_perms=1, seed=9)
        perm = permutations_for(20, 1, 9)[0]
        ref, _ = re_run(f0, xs[perm], model=model)
        np.testing.assert_allclose(est.values, ref.values, rtol=1e-12)

    def test_exact_matches_enumeration(self, bn_small):
        _, meas, model, f0 = bn_small
        xs = np.array([0.2, 0.5, 0.9])
        runs = [re_run(f0, xs[list(p)], model=model)[0].values for p in itertools.permutations(range(3))]
        oracle = np.mean(runs, axis=0)
        np.testing.assert_allclose(pare_exact(f0, xs, model=model).values, oracle, rtol=1e-12)

    def test_exact_small_cases(self, bn_small):
        _, meas, model, f0 = bn_small
        one, _ = re_run(f0, [0.3], model=model)
        np.testing.assert_array_equal(pare_exact(f0, [0.3], model=model).values, one.values)
        ab, _ = re_run(f0, [0.3, 0.7], model=model)
        ba, _ = re_run(f0, [0.7, 0.3], model=model)
        np.testing.assert_allclose(pare_exact(f0, [0.3, 0.7], model=model).values,
                                   (ab.values + ba.values) / 2, rtol=1e-12)

    def test_exact_is_permutation_invariant(self, bn_small, rng):
        _, meas, model, f0 = bn_small
        xs = rng.random(5)
        base = pare_exact(f0, xs, model=model)
        for _ in range(3):
            np.testing.assert_array_equal(pare_exact(f0, rng.permutation(xs), model=model).values,
                                          base.values)

    def test_exact_guard(self, bn_small):
        _, _, model, f0 = bn_small
        with pytest.raises(ValueError):
            pare_exact(f0, np.linspace(0, 1, 9), model=model)

    def test_reproducible(self, bn_small):
        _, meas, model, f0 = bn_small
        xs = gen(scenario("BN", n=40), 5, meas).xs
        a = pare_run(f0, xs, model=model, num_perms=20, seed=3)
        b = pare_run(f0, xs, model=model, num_perms=20, seed=3)
        np.testing.assert_array_equal(a.values, b.values)
        c = pare_run(f0, xs, model=model, num_perms=20, seed=4)
        assert not np.array_equal(a.values, c.values)

    def test_beats_sorted_recursion_on_counts(self):
        from recmix.evalx import xscale_for
        sc = scenario("GP", m=500)
        meas = sc.measure()
        model = sc.model()
        d = gen(sc, 8, meas)
        xs = ordered_counts(d.xs)
        xsc = xscale_for(model, meas)
        p = xsc.mixture(d.truth_f)
        f_re, _ = re_run(sc.f0(meas), xs, model=model)
        f_pa = pare_run(sc.f0(meas), xs, model=model, seed=1)
        assert l1_distance(p, xsc.mixture(f_pa)) < l1_distance(p, xsc.mixture(f_re))


class TestIterateAverage:
    def test_single_iterate(self, bn_small):
        _, meas, model, f0 = bn_small
        f1, trace = re_run(f0, [0.4], model=model, keep_iterates=True)
        np.testing.assert_allclose(iterate_average(trace, None).values, f1.values, rtol=1e-12)

    def test_identical_iterates(self, rng, unit_grid):
        f = random_density(rng, unit_grid)
        np.testing.assert_allclose(iterate_average([f, f, f], [0.5, 0.3, 0.2]).values, f.values,
                                   rtol=1e-13)

    def test_weighted_average_of_trace(self, bn_small):
        _, meas, model, f0 = bn_small
        xs = np.array([0.2, 0.6, 0.9])
        _, trace = re_run(f0, xs, model=model, keep_iterates=True)
        fs = [re_run(f0, xs[:k], model=model)[0] for k in (1, 2, 3)]
        w = WeightSchedule().weights(3)
        ref = sum(wi * f.values for wi, f in zip(w, fs)) / w.sum()
        got = iterate_average(trace, None)
        np.testing.assert_allclose(got.values, ref, rtol=1e-11)
        assert abs(integrate(got) - 1) < 1e-10

    def test_empty(self):
        with pytest.raises(ValueError):
            iterate_average([], [])


class TestBackends:
    @pytest.mark.skipif(_loops.BACKEND != "numba", reason="numba disabled")
    def test_fold_backends_agree(self, rng):
        rows = rng.random((40, 60))
        mass = rng.random(60)
        mass /= mass.sum()
        order = rng.permutation(40)
        w = WeightSchedule(0.8).weights(40)
        a = _loops.re_fold(rows, order, w, mass, [10, 40], backend="numba")
        b = _loops.re_fold(rows, order, w, mass, [10, 40], backend="numpy")
        np.testing.assert_allclose(a[0], b[0], rtol=1e-12)
        np.testing.assert_allclose(a[2], b[2], rtol=1e-12)
        perms = np.array([rng.permutation(40) for _ in range(5)])
        pa, _ = _loops.pare_fold(rows, perms, w, mass, backend="numba")
        pb, _ = _loops.pare_fold(rows, perms, w, mass, backend="numpy")
        np.testing.assert_allclose(pa, pb, rtol=1e-12)

    def test_unknown_backend(self, rng):
        with pytest.raises(ValueError):
            _loops.re_fold(np.ones((1, 2)), np.zeros(1, np.int64), np.ones(1) / 2, np.ones(2) / 2,
                           backend="cuda")
