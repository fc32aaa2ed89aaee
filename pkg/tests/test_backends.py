import os
import subprocess
import sys

import numpy as np
import pytest

from recmix import _loops
from recmix.kernels import likelihood_table
from recmix.npb import DPConfig, npb_estimate
from recmix.recursion import pare_run
from recmix.simgen import gen, scenario

needs_numba = pytest.mark.skipif(not _loops.USE_NUMBA, reason="numba disabled")


@pytest.fixture(scope="module")
def in_problem():
    sc = scenario("IN", n=60, m=120)
    meas = sc.measure()
    d = gen(sc, 2, meas)
    return sc, meas, d


@needs_numba
def test_sis_chunk_backends_agree(in_problem):
    sc, meas, d = in_problem
    table = likelihood_table(sc.model(), d.xs, meas)
    f0 = sc.f0(meas).masses
    base = table.rows @ f0
    rng = np.random.default_rng(5)
    orders = table.index[np.array([rng.permutation(60) for _ in range(16)])]
    unif = rng.random((16, 60))
    a = _loops.sis_chunk(table.rows, table.offsets, base, f0, 1.0, orders, unif, backend="numba")
    b = _loops.sis_chunk(table.rows, table.offsets, base, f0, 1.0, orders, unif, backend="numpy")
    np.testing.assert_array_equal(a[1], b[1])
    np.testing.assert_array_equal(a[3], b[3])
    np.testing.assert_allclose(a[0], b[0], rtol=1e-12)
    np.testing.assert_allclose(a[2], b[2], rtol=1e-10, atol=1e-15)


@needs_numba
def test_estimators_agree_across_backends(in_problem):
    sc, meas, d = in_problem
    f0 = sc.f0(meas)
    a = npb_estimate(d.xs, DPConfig(f0), sc.model(), R=40, seed=1, backend="numba")
    b = npb_estimate(d.xs, DPConfig(f0), sc.model(), R=40, seed=1, backend="numpy")
    np.testing.assert_allclose(a.log_weights, b.log_weights, rtol=1e-12)
    np.testing.assert_allclose(a.density.values, b.density.values, rtol=1e-9, atol=1e-15)
    pa = pare_run(f0, d.xs, model=sc.model(), num_perms=10, backend="numba")
    pb = pare_run(f0, d.xs, model=sc.model(), num_perms=10, backend="numpy")
    np.testing.assert_allclose(pa.values, pb.values, rtol=1e-11)


def test_env_flag_selects_numpy():
    env = dict(os.environ, RECMIX_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "from recmix import _loops; print(_loops.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_disabled_numba_rejects_numba_backend(monkeypatch):
    monkeypatch.setattr(_loops, "USE_NUMBA", False)
    with pytest.raises(RuntimeError):
        _loops.re_fold(np.ones((1, 2)), np.zeros(1, np.int64), np.ones(1) / 2, np.ones(2) / 2,
                       backend="numba")
