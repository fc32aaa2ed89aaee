"""Dirichlet-process-mixture posterior mean by collapsed sequential
importance sampling over clustering configurations.

Each pass walks the observations once, drawing every cluster label from its
Polya-urn predictive conditional and multiplying the importance weight by
the normalizer of that conditional.  The conditional mean of the mixing
density given a configuration is available in closed form on the grid, and
the estimate is the importance-weighted average of those means.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from . import _loops
from .kernels import likelihood_table
from .measure import DegenerateDensity, Density, normalize

MAX_EXACT_N = 8
CHUNK = 512


@dataclass(frozen=True)
class DPConfig:
    f0: Density
    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("DP precision must be positive")


@dataclass
class ClusterState:
    assignments: np.ndarray  # restricted-growth labels 1..M, in processing order
    cluster_sizes: np.ndarray
    cluster_densities: list
    log_weight: float

    @property
    def num_clusters(self):
        return int(self.cluster_sizes.size)


@dataclass
class NpbEstimate:
    density: Density
    ess: float
    log_marginal: float  # log of the mean importance weight
    num_samples: int
    log_weights: np.ndarray
    num_clusters: np.ndarray

    def diagnostics_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["pass", "log_weight", "num_clusters"])
            for r, (lw, m) in enumerate(zip(self.log_weights, self.num_clusters)):
                writer.writerow([r, repr(float(lw)), int(m)])


def ess(weights):
    """R / (1 + var(w*)) with w* = w R / sum(w), population variance.

    Equals (sum w)^2 / sum w^2.
    """
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or not np.any(w > 0):
        raise ValueError("need at least one positive weight")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    r = w.size
    ws = w * (r / w.sum())
    return r / (1.0 + np.mean((ws - 1.0) ** 2))


def ess_from_log(log_weights):
    lw = np.asarray(log_weights, dtype=float)
    if lw.size == 0 or not np.any(np.isfinite(lw)):
        raise ValueError("all log weights are -inf")
    return ess(np.exp(lw - lw[np.isfinite(lw)].max()))


def _prepare(data, dp, model):
    data = np.atleast_1d(np.asarray(data, dtype=float))
    if data.size < 1:
        raise ValueError("need at least one observation")
    table = likelihood_table(model, data, dp.f0.measure)
    rows, offsets = table.rows, table.offsets
    f0 = dp.f0.masses
    base = rows @ f0
    if np.any(~(base > 0)):
        u = int(np.flatnonzero(~(base > 0))[0])
        raise DegenerateDensity("observation has zero marginal under the base density",
                                index=int(np.flatnonzero(table.index == u)[0]))
    return data, table, rows, offsets, base, f0


def _pass_randomness(n, seed, r, permute):
    rng = np.random.default_rng([seed, r])
    order = rng.permutation(n) if permute else np.arange(n)
    return order, rng.random(n)


def sis_pass(data, dp, model, rng=None, backend=None):
    """One sequential pass over ``data`` in the given order.

    Returns the final :class:`ClusterState` and the conditional mean density
    of the mixing distribution given that configuration.
    """
    data, table, rows, offsets, base, f0 = _prepare(data, dp, model)
    rng = np.random.default_rng(rng)
    n = data.size
    uniforms = rng.random(n)
    logw, nclus, fs, labels = _loops.sis_chunk(
        rows, offsets, base, f0, dp.c, table.index[None, :], uniforms[None, :], backend=backend)
    labels = labels[0]
    num = int(nclus[0])
    measure = dp.f0.measure
    sizes = np.bincount(labels, minlength=num + 1)[1:]
    # cluster densities are cheap to rebuild from the labels
    processed = table.index  # sis_pass keeps the data order
    dens = []
    with np.errstate(divide="ignore"):
        log_f0 = np.log(dp.f0.values)
        for ell in range(1, num + 1):
            lp = np.log(rows[processed[labels == ell]]).sum(axis=0) + log_f0
            top = lp[np.isfinite(lp)].max()
            dens.append(normalize(np.exp(lp - top), measure))
    state = ClusterState(labels, sizes, dens, float(logw[0]))
    return state, Density.from_masses(measure, fs[0])


def npb_estimate(data, dp, model, R=10_000, seed=0, permute_each_pass=True, backend=None,
                 chunk=CHUNK):
    """Importance-weighted average of R conditional-mean densities."""
    if R < 1:
        raise ValueError("R must be >= 1")
    data, table, rows, offsets, base, f0 = _prepare(data, dp, model)
    n = data.size
    all_logw = np.empty(R)
    all_m = np.empty(R, np.int64)
    acc = np.zeros(f0.size)
    top = -np.inf
    for start in range(0, R, chunk):
        stop = min(R, start + chunk)
        orders = np.empty((stop - start, n), np.int64)
        unif = np.empty((stop - start, n))
        for k, r in enumerate(range(start, stop)):
            orders[k], unif[k] = _pass_randomness(n, seed, r, permute_each_pass)
        logw, nclus, fs, _ = _loops.sis_chunk(rows, offsets, base, f0, dp.c,
                                              table.index[orders], unif, backend=backend)
        all_logw[start:stop] = logw
        all_m[start:stop] = nclus
        chunk_top = logw.max()
        if chunk_top > top:
            if np.isfinite(top):
                acc *= math.exp(top - chunk_top)
            top = chunk_top
        acc += np.exp(logw - top) @ fs
    if not np.isfinite(top):
        raise DegenerateDensity("all importance weights are zero")
    density = Density.from_masses(dp.f0.measure, acc / acc.sum())
    return NpbEstimate(
        density=density,
        ess=float(ess_from_log(all_logw)),
        log_marginal=float(logsumexp(all_logw) - math.log(R)),
        num_samples=R,
        log_weights=all_logw,
        num_clusters=all_m,
    )


# ------------------------------------------------------------ exact oracle

def set_partitions(n):
    """All restricted-growth strings of length n (labels from 1)."""
    if n == 0:
        yield ()
        return
    labels = [1] * n

    def rec(i, top):
        if i == n:
            yield tuple(labels)
            return
        for v in range(1, top + 2):
            labels[i] = v
            yield from rec(i + 1, max(top, v))

    labels[0] = 1
    yield from rec(1, 1)


def _log_partition_prior(sizes, c):
    n = int(sum(sizes))
    return (len(sizes) * math.log(c) + sum(gammaln(s) for s in sizes)
            - sum(math.log(c + i) for i in range(n)))


def _enumerate(data, dp, model):
    data = np.atleast_1d(np.asarray(data, dtype=float))
    n = data.size
    if n > MAX_EXACT_N:
        raise ValueError(f"n={n} too large for enumeration")
    measure = dp.f0.measure
    ll = np.asarray(model.log_density(data[:, None], measure.support[None, :]), dtype=float)
    with np.errstate(divide="ignore"):
        log_f0m = np.log(dp.f0.masses)
    log_terms, means = [], []
    for s in set_partitions(n):
        s = np.asarray(s)
        num = s.max()
        sizes = np.bincount(s, minlength=num + 1)[1:]
        logp = _log_partition_prior(sizes, dp.c)
        fs = dp.c * dp.f0.masses
        for ell in range(1, num + 1):
            lp = ll[s == ell].sum(axis=0) + log_f0m
            lm = logsumexp(lp)  # log cluster marginal likelihood
            if not np.isfinite(lm):
                logp = -np.inf
                break
            logp += lm
            fs = fs + sizes[ell - 1] * np.exp(lp - lm)
        log_terms.append(logp)
        means.append(fs / (dp.c + n))
    return np.array(log_terms), np.array(means)


def enumerate_exact(data, dp, model):
    """Exact posterior mean of the mixing density, summing over every set
    partition of the data (n <= 8)."""
    log_terms, means = _enumerate(data, dp, model)
    if not np.any(np.isfinite(log_terms)):
        raise DegenerateDensity("data impossible under the base density")
    w = np.exp(log_terms - log_terms.max())
    return Density.from_masses(dp.f0.measure, (w @ means) / w.sum())


def exact_log_marginal(data, dp, model):
    """log p(x_1, ..., x_n) under the DP mixture, by enumeration."""
    log_terms, _ = _enumerate(data, dp, model)
    return float(logsumexp(log_terms))
