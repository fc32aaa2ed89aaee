"""Sampling models p(x | theta) and mixture-marginal operations."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .measure import DegenerateDensity, Density, DominatingMeasure, normalize

LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


class SamplingModel(ABC):
    """A kernel p(x | theta).  Implementations are stateless."""

    observation_kind = "real"

    @abstractmethod
    def log_density(self, x, theta):
        """log p(x | theta), broadcasting over ``x`` and ``theta``."""

    @abstractmethod
    def draw(self, theta, rng):
        """One observation per entry of ``theta``."""

    def check_observations(self, xs):
        xs = np.asarray(xs, dtype=float)
        if self.observation_kind == "count":
            if np.any(xs < 0) or np.any(xs != np.round(xs)):
                raise ValueError("count observations must be nonnegative integers")
        return xs

    def to_config(self):
        return {"kernel": self.name}

    def scaled_rows(self, xs, support):
        """``exp(log p(x_i | t_j) - max_j)`` and the row maxima."""
        ll = np.asarray(self.log_density(xs[:, None], support[None, :]), dtype=float)
        top = ll.max(axis=1)
        with np.errstate(invalid="ignore"):
            ll -= top[:, None]
        np.exp(ll, out=ll)
        return ll, top


@dataclass(frozen=True)
class Normal(SamplingModel):
    """N(theta, sigma^2) with fixed sigma."""

    sigma: float = 0.1
    name = "normal"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def log_density(self, x, theta):
        z = (np.asarray(x, dtype=float) - np.asarray(theta, dtype=float)) / self.sigma
        return -0.5 * z * z - np.log(self.sigma) - LOG_SQRT_2PI

    def draw(self, theta, rng):
        theta = np.asarray(theta, dtype=float)
        return theta + self.sigma * rng.standard_normal(theta.shape)

    def scaled_rows(self, xs, support):
        z = np.subtract.outer(xs, support)
        z *= 1.0 / self.sigma
        np.square(z, out=z)
        zmin = z.min(axis=1)
        z -= zmin[:, None]
        z *= -0.5
        np.exp(z, out=z)
        return z, -0.5 * zmin - np.log(self.sigma) - LOG_SQRT_2PI

    def to_config(self):
        return {"kernel": self.name, "sigma": self.sigma}


@dataclass(frozen=True)
class Poisson(SamplingModel):
    """Poisson with mean theta >= 0; theta = 0 puts all mass on x = 0."""

    name = "poisson"
    observation_kind = "count"

    def log_density(self, x, theta):
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        with np.errstate(divide="ignore"):
            return special.xlogy(x, theta) - theta - special.gammaln(x + 1)

    def draw(self, theta, rng):
        return rng.poisson(np.asarray(theta, dtype=float)).astype(float)

    def scaled_rows(self, xs, support):
        with np.errstate(divide="ignore"):
            log_t = np.log(support)
        ll = np.multiply.outer(xs, np.where(support > 0, log_t, 0.0))
        ll[np.ix_(xs > 0, support <= 0)] = -np.inf
        ll -= support
        top = ll.max(axis=1)
        with np.errstate(invalid="ignore"):
            ll -= top[:, None]
        np.exp(ll, out=ll)
        return ll, top - special.gammaln(xs + 1)


@dataclass(frozen=True)
class GammaRate(SamplingModel):
    """Gamma with fixed shape and rate theta > 0."""

    shape: float = 2.0
    name = "gamma"

    def __post_init__(self):
        if not self.shape > 0:
            raise ValueError("shape must be positive")

    def log_density(self, x, theta):
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        a = self.shape
        with np.errstate(divide="ignore", invalid="ignore"):
            out = special.xlogy(a, theta) + special.xlogy(a - 1, x) - theta * x - special.gammaln(a)
        return np.where(theta > 0, out, -np.inf)

    def draw(self, theta, rng):
        theta = np.asarray(theta, dtype=float)
        return rng.gamma(self.shape, 1.0 / theta)

    def to_config(self):
        return {"kernel": self.name, "shape": self.shape}


def model_from_config(cfg):
    kind = cfg.get("kernel", "normal")
    if kind == "normal":
        return Normal(float(cfg.get("sigma", 0.1)))
    if kind == "poisson":
        return Poisson()
    if kind == "gamma":
        return GammaRate(float(cfg.get("shape", 2.0)))
    raise ValueError(f"unknown kernel {kind!r}")


def log_likelihood_curve(model, x, measure):
    return np.asarray(model.log_density(x, measure.support), dtype=float)


def loglik_curve(model, x, measure):
    """p(x | theta_j) on every support point, via log space."""
    ll = log_likelihood_curve(model, x, measure)
    top = ll.max()
    if not np.isfinite(top):
        return np.zeros_like(ll)
    return np.exp(ll - top) * np.exp(top)


@dataclass(frozen=True, eq=False)
class LikelihoodTable:
    """Scaled likelihood rows for a batch of observations.

    ``rows[i, j] = p(x_i | theta_j) * exp(-offset[i])`` with ``offset[i]`` the
    row max of the log-likelihood, so every row peaks at 1.  Rows are computed
    once per distinct observation value; ``index`` maps observations to rows.
    """

    rows: np.ndarray
    offsets: np.ndarray
    index: np.ndarray
    counts: np.ndarray

    def expanded(self):
        """Per-observation (rows, offsets) in data order."""
        return (np.ascontiguousarray(self.rows[self.index]),
                np.ascontiguousarray(self.offsets[self.index]))


def likelihood_table(model, xs, measure):
    xs = model.check_observations(np.atleast_1d(xs))
    uniq, index, counts = np.unique(xs, return_inverse=True, return_counts=True)
    rows, offsets = model.scaled_rows(uniq, measure.support)
    bad = ~np.isfinite(offsets)
    if np.any(bad):
        pos = int(np.flatnonzero(np.isin(index, np.flatnonzero(bad)))[0])
        raise DegenerateDensity(
            f"observation {xs[pos]!r} has zero likelihood at every support point", index=pos)
    return LikelihoodTable(rows, offsets, index.reshape(-1), counts)


def marginal_density(model, f, x):
    """p_f(x) = integral of p(x | theta) f(theta) dmu(theta)."""
    ll = log_likelihood_curve(model, x, f.measure)
    top = ll.max()
    masses = f.masses
    if np.isfinite(top):
        s = float(np.exp(ll - top) @ masses)
        value = s * np.exp(top)
    else:
        value = 0.0
    if not value > 0:
        raise DegenerateDensity(f"marginal density at x={x!r} is zero")
    return value


def posterior_reweight(model, f, x):
    """Density proportional to p(x | theta) f(theta)."""
    ll = log_likelihood_curve(model, x, f.measure)
    top = ll.max()
    if not np.isfinite(top):
        raise DegenerateDensity(f"observation {x!r} impossible under every support point")
    return normalize(np.exp(ll - top) * f.values, f.measure)


def x_measure(model, theta_measure, num_points=4000, tail=1e-10):
    """A measure on the observation space wide enough for ``theta_measure``.

    Normal: uniform grid over [min - 6 sigma, max + 6 sigma].  Poisson: unit
    atoms at 0..x_max with tail mass below ``tail`` at the largest theta.
    Gamma: grid on (0, upper quantile at the smallest positive rate].
    """
    from .measure import atoms_measure, make_measure

    support = theta_measure.support
    if isinstance(model, Normal):
        return make_measure(support.min() - 6 * model.sigma, support.max() + 6 * model.sigma, num_points)
    if isinstance(model, Poisson):
        x_max = int(stats.poisson.isf(tail, max(support.max(), 1e-12))) + 1
        return atoms_measure(np.arange(x_max + 1, dtype=float))
    if isinstance(model, GammaRate):
        rate = support[support > 0].min()
        hi = float(stats.gamma.isf(tail, model.shape, scale=1.0 / rate))
        return make_measure(0.0, hi, num_points)
    raise TypeError(f"no default observation grid for {type(model).__name__}")


def mixture_on_x(model, f, xmeasure):
    """The mixture density p_f rendered on ``xmeasure`` and renormalized
    there (truncation of the observation range is far below 1e-6)."""
    ll = np.asarray(model.log_density(xmeasure.support[:, None], f.measure.support[None, :]))
    with np.errstate(under="ignore"):
        p = np.exp(ll) @ f.masses
    return normalize(p, xmeasure)


def mixture_on_x_raw(model, f, xmeasure):
    """Like :func:`mixture_on_x` without renormalization."""
    ll = np.asarray(model.log_density(xmeasure.support[:, None], f.measure.support[None, :]))
    with np.errstate(under="ignore"):
        return np.exp(ll) @ f.masses


__all__ = [
    "SamplingModel", "Normal", "Poisson", "GammaRate", "model_from_config",
    "loglik_curve", "log_likelihood_curve", "LikelihoodTable", "likelihood_table",
    "marginal_density", "posterior_reweight", "x_measure", "mixture_on_x",
    "mixture_on_x_raw", "Density", "DominatingMeasure",
]
