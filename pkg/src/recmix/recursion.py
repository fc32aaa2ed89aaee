"""The recursive estimate of a mixing density and its permutation-averaged versions."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _loops
from .kernels import likelihood_table, posterior_reweight
from .measure import DegenerateDensity, Density, normalize

MAX_EXACT_N = 8
DEFAULT_NUM_PERMS = 100


@dataclass(frozen=True)
class WeightSchedule:
    """w_i = 1 / (i**alpha + 1), i = 1, 2, ..."""

    alpha: float = 1.0

    def __post_init__(self):
        if not 0.5 < self.alpha <= 1.0:
            raise ValueError(f"alpha={self.alpha} outside (0.5, 1]: weights would not "
                             "satisfy sum w = inf and sum w^2 < inf")

    @property
    def divergent_sum(self):
        # sum (i^a + 1)^-1 ~ sum i^-a diverges iff a <= 1
        return self.alpha <= 1.0

    @property
    def square_summable(self):
        return 2 * self.alpha > 1.0

    def weights(self, n, start=1):
        i = np.arange(start, start + n, dtype=float)
        return 1.0 / (i ** self.alpha + 1.0)

    def __call__(self, i):
        return 1.0 / (float(i) ** self.alpha + 1.0)


@dataclass
class RecursionTrace:
    """Per-step record of one recursive pass."""

    steps: np.ndarray
    weights: np.ndarray
    predictive: np.ndarray  # p_{i-1}(X_i), the one-step predictive density
    final: Density
    checkpoints: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    snapshots: np.ndarray | None = None  # masses after each checkpoint step
    kl: np.ndarray | None = None

    def __len__(self):
        return self.steps.size

    def density_at(self, k):
        """Density after checkpoint number ``k``."""
        return Density.from_masses(self.final.measure, self.snapshots[k])


def re_update(f_prev, x, w, model):
    """One step: (1 - w) f_prev + w * posterior of f_prev given x."""
    if not 0.0 < w <= 1.0:
        raise ValueError("weight must lie in (0, 1]")
    post = posterior_reweight(model, f_prev, x)
    if w == 1.0:
        return post
    return normalize((1.0 - w) * f_prev.values + w * post.values, f_prev.measure)


def _fold_inputs(f0, data, model):
    table = likelihood_table(model, data, f0.measure)
    rows = table.rows
    return table, rows


def re_run(f0, data, schedule=None, model=None, truth=None, checkpoints=None,
           keep_iterates=False, backend=None):
    """Fold :func:`re_update` over ``data`` in the given order.

    ``checkpoints`` (steps in 0..n, 0 being ``f0`` itself) or ``keep_iterates`` retain intermediate
    masses; with ``truth`` (the true mixing density) the trace also carries
    the observation-scale KL divergence at each checkpoint.
    """
    schedule = schedule or WeightSchedule()
    data = np.atleast_1d(np.asarray(data, dtype=float))
    n = data.size
    if n < 1:
        raise ValueError("need at least one observation")
    table, rows = _fold_inputs(f0, data, model)
    w = schedule.weights(n)
    if keep_iterates:
        cps = np.arange(1, n + 1)
    elif checkpoints is None:
        cps = np.array([n]) if truth is not None else np.zeros(0, np.int64)
    else:
        cps = np.unique(np.asarray(checkpoints, dtype=np.int64))
        if cps.size and (cps[0] < 0 or cps[-1] > n):
            raise ValueError(f"checkpoints must lie in 0..{n}")
    with_start = bool(cps.size and cps[0] == 0)
    mass, marg, snaps, fail = _loops.re_fold(rows, table.index, w, f0.masses,
                                             cps[1:] if with_start else cps, backend=backend)
    if with_start:
        snaps = np.vstack([f0.masses[None, :], snaps])
    if fail >= 0:
        raise DegenerateDensity(f"zero predictive density at step {fail + 1} (x={data[fail]!r})",
                                index=fail)
    final = Density.from_masses(f0.measure, mass)
    trace = RecursionTrace(
        steps=np.arange(1, n + 1), weights=w,
        predictive=marg * np.exp(table.offsets[table.index]),
        final=final, checkpoints=cps, snapshots=snaps,
    )
    if truth is not None:
        from .evalx import marginal_kl_trace
        trace.kl = np.array([kl for _, kl in marginal_kl_trace(trace, truth, model)])
    return final, trace


def permutations_for(n, num_perms, seed):
    """Permutation k is drawn from its own stream seeded by ``(seed, k)``."""
    out = np.empty((num_perms, n), np.int64)
    for k in range(num_perms):
        out[k] = np.random.default_rng([seed, k]).permutation(n)
    return out


def _average_runs(f0, data, schedule, model, perms, backend):
    table, rows = _fold_inputs(f0, data, model)
    w = schedule.weights(perms.shape[1])
    # map permuted positions straight onto likelihood rows
    masses, fails = _loops.pare_fold(rows, table.index[perms], w, f0.masses, backend=backend)
    bad = np.flatnonzero(fails >= 0)
    if bad.size:
        k = int(bad[0])
        i = int(fails[k])
        raise DegenerateDensity(
            f"zero predictive density at step {i + 1} of permutation {k}", index=int(perms[k, i]))
    acc = np.zeros(masses.shape[1])
    for row in masses:  # fixed index order keeps results bit-reproducible
        acc += row
    return Density.from_masses(f0.measure, acc / masses.shape[0]), masses


def pare_run(f0, data, schedule=None, model=None, num_perms=DEFAULT_NUM_PERMS, seed=0,
             backend=None, return_runs=False):
    """Mean of recursive estimates over ``num_perms`` random orderings."""
    if num_perms < 1:
        raise ValueError("num_perms must be >= 1")
    schedule = schedule or WeightSchedule()
    data = np.atleast_1d(np.asarray(data, dtype=float))
    perms = permutations_for(data.size, num_perms, seed)
    est, runs = _average_runs(f0, data, schedule, model, perms, backend)
    if return_runs:
        return est, runs
    return est


def pare_exact(f0, data, schedule=None, model=None, backend=None):
    """Exact average over all n! orderings (n <= 8)."""
    schedule = schedule or WeightSchedule()
    data = np.sort(np.atleast_1d(np.asarray(data, dtype=float)))
    n = data.size
    if n > MAX_EXACT_N:
        raise ValueError(f"n={n} too large for exact enumeration ({math.factorial(n)} orderings)")
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(-1, n)
    est, _ = _average_runs(f0, data, schedule, model, perms, backend)
    return est


def iterate_average(iterates, weights):
    """sum_i w_i f_i / sum_i w_i over the retained iterates.

    ``iterates`` is a list of densities or a :class:`RecursionTrace` run with
    ``keep_iterates=True``.
    """
    if isinstance(iterates, RecursionTrace):
        trace = iterates
        if trace.snapshots is None or trace.checkpoints.size != len(trace):
            raise ValueError("trace does not retain every iterate (use keep_iterates=True)")
        w = np.asarray(trace.weights if weights is None else weights, dtype=float)
        acc = w @ trace.snapshots
        return Density.from_masses(trace.final.measure, acc / w.sum())
    if len(iterates) == 0:
        raise ValueError("no iterates to average")
    w = np.asarray(weights, dtype=float)
    if w.size != len(iterates):
        raise ValueError("one weight per iterate required")
    acc = np.zeros(iterates[0].measure.size)
    for wi, f in zip(w, iterates):
        acc += wi * f.values
    return normalize(acc / w.sum(), iterates[0].measure)
