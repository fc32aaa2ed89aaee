"""Nonparametric maximum likelihood on the grid by fixed-point EM.

The mixing distribution is restricted to the support points of the
dominating measure; EM on the support masses increases the likelihood
monotonically and its fixed points satisfy Lindsay's gradient condition
``D(theta) = (1/n) sum_i p(x_i|theta) / p_hat(x_i) <= 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import likelihood_table
from .measure import DegenerateDensity, Density


@dataclass
class NpmlResult:
    density: Density
    log_likelihood: float
    iterations: int
    converged: bool
    loglik_trace: np.ndarray
    gradient: np.ndarray  # D(theta_j) at the returned masses

    @property
    def max_gradient(self):
        return float(self.gradient.max())


def npml_fit(data, measure, model, max_iter=100_000, tol=1e-8, start=None, trace_every=1):
    """Grid EM until the relative log-likelihood gain drops below ``tol``.

    Repeated observation values are collapsed to a frequency table first,
    so count data cost one likelihood row per distinct value.
    """
    data = np.atleast_1d(np.asarray(data, dtype=float))
    n = data.size
    if n < 1:
        raise ValueError("need at least one observation")
    table = likelihood_table(model, data, measure)
    rows, freq = table.rows, table.counts / n
    const = float(table.counts @ table.offsets)
    # every support point, atoms included, needs positive starting mass:
    # EM never revives a zero
    if start is None:
        pi = np.full(measure.size, 1.0 / measure.size)
    else:
        pi = start.masses.copy()

    mix = rows @ pi
    if np.any(~(mix > 0)):
        raise DegenerateDensity("an observation has zero likelihood under the starting masses")
    ll = n * float(freq @ np.log(mix)) + const
    trace = [ll]
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        grad = (freq / mix) @ rows
        pi = pi * grad
        pi /= pi.sum()
        mix = rows @ pi
        new = n * float(freq @ np.log(mix)) + const
        # EM ascent; allow rounding-level wobble only
        if new < ll - 1e-10 * abs(ll):
            raise AssertionError(f"EM likelihood decreased at iteration {it}: {ll} -> {new}")
        gain = (new - ll) / abs(ll) if ll != 0 else abs(new - ll)
        ll = new
        if it % trace_every == 0:
            trace.append(ll)
        if gain < tol:
            converged = True
            break
    grad = (freq / mix) @ rows
    return NpmlResult(
        density=Density.from_masses(measure, pi),
        log_likelihood=ll,
        iterations=it,
        converged=converged,
        loglik_trace=np.asarray(trace),
        gradient=grad,
    )
