"""Brute-force and enumeration cross-checks, runnable from the CLI.

Each check returns ``(name, passed, detail)``.  They are small enough to run
in a few seconds and exercise every estimator against an independent route.
"""

import math

import numpy as np

from . import _loops
from .evalx import bias_spread, kl_divergence, l1_distance
from .kernels import Normal, Poisson, marginal_density, posterior_reweight
from .measure import atoms_measure, make_measure, normalize
from .npb import DPConfig, enumerate_exact, ess, exact_log_marginal, npb_estimate
from .npml import npml_fit
from .recursion import WeightSchedule, pare_exact, pare_run, re_run
from .simgen import gen, scenario


def _check(name, value, target, tol):
    err = abs(value - target)
    return name, bool(err <= tol), f"got {value:.6g}, want {target:.6g} (|err|={err:.2e} <= {tol:g})"


def marginal_vs_riemann():
    meas = make_measure(0.0, 1.0, 1000)
    f = normalize(np.ones(meas.size), meas)
    model = Normal(0.1)
    # midpoint sum on 10^5 cells
    fine = (np.arange(100_000) + 0.5) / 100_000
    dense = np.mean(np.exp(model.log_density(0.5, fine)))
    return _check("marginal density vs dense Riemann sum", marginal_density(model, f, 0.5), dense, 1e-6)


def two_point_posterior():
    meas = atoms_measure([0.0, 1.0])
    f = normalize(np.ones(2), meas)
    post = posterior_reweight(Poisson(), f, 0.0)
    return _check("two-point Poisson posterior", post.values[0], 1 / (1 + math.exp(-1)), 1e-12)


def dp_identity_n1():
    sc = scenario("BN", m=400)
    meas = sc.measure()
    f0 = sc.f0(meas)
    x = np.array([0.3])
    w1 = WeightSchedule().weights(1)[0]
    fre, _ = re_run(f0, x, model=sc.model())
    fdp = enumerate_exact(x, DPConfig(f0, 1 / w1 - 1), sc.model())
    return _check("n=1 recursion equals DP posterior mean (L1)", l1_distance(fre, fdp), 0.0, 1e-10)


def pare_convergence():
    sc = scenario("BN", m=400)
    meas = sc.measure()
    f0 = sc.f0(meas)
    xs = gen(scenario("BN", n=3), 11, meas).xs
    exact = pare_exact(f0, xs, model=sc.model())
    mc = pare_run(f0, xs, model=sc.model(), num_perms=500, seed=3)
    return _check("PARE Monte Carlo vs exact n!=6 average (L1)", l1_distance(exact, mc), 0.0, 0.02)


def npb_vs_enumeration():
    meas = atoms_measure([0.0, 1.0])
    f0 = normalize(np.ones(2), meas)
    xs = np.array([0.0, 1.0, 0.0])
    dp = DPConfig(f0, 1.0)
    exact = enumerate_exact(xs, dp, Poisson())
    est = npb_estimate(xs, dp, Poisson(), R=10_000, seed=5)
    return _check("importance sampler vs set-partition enumeration (L1)",
                  l1_distance(exact, est.density), 0.0, 0.01)


def npb_marginal():
    meas = atoms_measure([0.0, 1.0])
    f0 = normalize(np.ones(2), meas)
    xs = np.array([0.0, 1.0, 0.0, 2.0])
    dp = DPConfig(f0, 1.0)
    exact = math.exp(exact_log_marginal(xs, dp, Poisson()))
    est = math.exp(npb_estimate(xs, dp, Poisson(), R=10_000, seed=9).log_marginal)
    return _check("mean importance weight vs exact marginal (rel err)", abs(est / exact - 1), 0.0, 0.02)


def metric_closed_forms():
    out = []
    d = atoms_measure([0.0, 1.0])
    out.append(_check("KL (0.7,0.3)||(0.5,0.5)",
                      kl_divergence(normalize(np.array([0.7, 0.3]), d), normalize(np.ones(2), d)),
                      0.7 * math.log(1.4) + 0.3 * math.log(0.6), 1e-12))
    out.append(_check("ESS of weights (1, 3)", ess([1.0, 3.0]), 1.6, 1e-12))
    meas = make_measure(0.0, 2.0, 2001)
    u1 = normalize(np.where(meas.support <= 1.0, 1.0, 0.0), meas)
    u2 = normalize(np.ones(meas.size), meas)
    out.append(_check("L1 Unif(0,1) vs Unif(0,2)", l1_distance(u1, u2), 1.0, 1e-3))
    b, s = bias_spread([u1, u2], u1)
    out.append(_check("bias of {Unif(0,1), Unif(0,2)}", b, 0.5, 1e-3))
    out.append(_check("spread of {Unif(0,1), Unif(0,2)}", s, 0.5, 1e-3))
    return out


def npml_support_condition():
    sc = scenario("BN")
    meas = sc.measure()
    d = gen(sc, 0, meas)
    res = npml_fit(d.xs, meas, sc.model())
    return _check("NPML gradient max_j D(theta_j) - 1", max(res.max_gradient - 1, 0.0), 0.0, 1e-4)


def backends_agree():
    if _loops.BACKEND != "numba":
        return "numba vs numpy loops", True, "numba disabled; nothing to compare"
    rng = np.random.default_rng(0)
    rows = rng.random((30, 50))
    mass = rng.random(50)
    mass /= mass.sum()
    perms = np.array([rng.permutation(30) for _ in range(8)])
    w = WeightSchedule().weights(30)
    a, _ = _loops.pare_fold(rows, perms, w, mass, backend="numba")
    b, _ = _loops.pare_fold(rows, perms, w, mass, backend="numpy")
    return _check("numba vs numpy recursive loops (max abs diff)", float(np.abs(a - b).max()), 0.0, 1e-12)


CHECKS = [marginal_vs_riemann, two_point_posterior, dp_identity_n1, pare_convergence,
          npb_vs_enumeration, npb_marginal, metric_closed_forms, npml_support_condition,
          backends_agree]


def run_all():
    for check in CHECKS:
        res = check()
        if isinstance(res, list):
            yield from res
        else:
            yield res
