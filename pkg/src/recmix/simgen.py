"""Data generators for the Beta-Normal (BN), Gamma-Poisson (GP) and
Irregular-Normal (IN) simulation studies."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special, stats

from .kernels import Normal, Poisson, SamplingModel
from .measure import Density, make_measure, normalize

# Gamma(2, 0.4) is read as shape 2, RATE 0.4 (mean 5).
GP_SHAPE = 2.0
GP_RATE = 0.4
# TruncNormal(0, 4): 4 is the variance.
IN_SLAB_SD = 2.0
IN_NULL_PROB = 2.0 / 3.0
MAX_PROPOSALS = 1_000_000


@dataclass(frozen=True)
class Scenario:
    name: str
    n: int = 200
    theta_lo: float = 0.0
    theta_hi: float = 1.0
    atoms: tuple = ()
    sigma: float = 0.1
    m: int = 1000

    def model(self) -> SamplingModel:
        return Poisson() if self.name == "GP" else Normal(self.sigma)

    def measure(self):
        return make_measure(self.theta_lo, self.theta_hi, self.m, self.atoms)

    def f0(self, measure=None):
        """Initial guess: uniform on the interval, half mass on atoms if any."""
        measure = measure or self.measure()
        flat = np.where(measure.is_atom, 0.0, 1.0 / (self.theta_hi - self.theta_lo))
        if not self.atoms:
            return normalize(flat, measure)
        atom = np.where(measure.is_atom, 1.0 / len(self.atoms), 0.0)
        return normalize(0.5 * flat + 0.5 * atom, measure)

    def truth_values(self, measure):
        """Unnormalized rendering of the true mixing density (integral ~ 1)."""
        t = measure.support
        nodes = ~measure.is_atom
        out = np.zeros(measure.size)
        if self.name == "BN":
            out[nodes] = (beta_pdf(t[nodes], 3, 30) + 2 * beta_pdf(t[nodes], 4, 4)) / 3
        elif self.name == "GP":
            z = stats.gamma.cdf(self.theta_hi, GP_SHAPE, scale=1 / GP_RATE)
            out[nodes] = stats.gamma.pdf(t[nodes], GP_SHAPE, scale=1 / GP_RATE) / z
        elif self.name == "IN":
            z = 1 - 2 * stats.norm.sf(self.theta_hi, scale=IN_SLAB_SD)
            out[nodes] = (1 - IN_NULL_PROB) * stats.norm.pdf(t[nodes], scale=IN_SLAB_SD) / z
            out[measure.atom_index(0.0)] = IN_NULL_PROB
        return out

    def truth(self, measure=None):
        measure = measure or self.measure()
        return normalize(self.truth_values(measure), measure)

    def draw_thetas(self, n, rng):
        if self.name == "BN":
            first = rng.random(n) < 1 / 3
            return np.where(first, rng.beta(3, 30, n), rng.beta(4, 4, n))
        if self.name == "GP":
            return _rejection(lambda k: rng.gamma(GP_SHAPE, 1 / GP_RATE, k),
                              lambda t: t <= self.theta_hi, n)
        if self.name == "IN":
            null = rng.random(n) < IN_NULL_PROB
            slab = _rejection(lambda k: rng.normal(0.0, IN_SLAB_SD, k),
                              lambda t: (t >= self.theta_lo) & (t <= self.theta_hi), n)
            return np.where(null, 0.0, slab)
        raise ValueError(f"unknown scenario {self.name!r}")

    def to_config(self):
        return {"scenario": self.name, "n": self.n, "theta_lo": self.theta_lo,
                "theta_hi": self.theta_hi, "atoms": list(self.atoms), "sigma": self.sigma,
                "m": self.m}


SCENARIOS = {
    "BN": Scenario("BN", theta_lo=0.0, theta_hi=1.0, sigma=0.1, m=1000),
    "GP": Scenario("GP", theta_lo=0.0, theta_hi=50.0, m=1000),
    "IN": Scenario("IN", theta_lo=-10.0, theta_hi=10.0, atoms=(0.0,), sigma=1.0, m=800),
}


def scenario(name, **overrides):
    try:
        base = SCENARIOS[name.upper()]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; expected one of {sorted(SCENARIOS)}")
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if "atoms" in overrides:
        overrides["atoms"] = tuple(overrides["atoms"])
    return replace(base, **overrides)


def beta_pdf(t, a, b):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        logp = special.xlogy(a - 1, t) + special.xlog1py(b - 1, -t) - special.betaln(a, b)
    return np.where((t >= 0) & (t <= 1), np.exp(logp), 0.0)


def _rejection(propose, accept, n):
    out = np.empty(n)
    filled = 0
    tried = 0
    while filled < n:
        k = max(2 * (n - filled), 16)
        cand = propose(k)
        tried += k
        cand = cand[accept(cand)]
        take = min(cand.size, n - filled)
        out[filled:filled + take] = cand[:take]
        filled += take
        if filled < n and tried >= MAX_PROPOSALS:
            raise RuntimeError("rejection sampler exhausted its proposal budget")
    return out


@dataclass
class SimData:
    scenario: Scenario
    thetas: np.ndarray
    xs: np.ndarray
    truth_f: Density
    model: SamplingModel = field(repr=False)

    def truth_p(self, x):
        """True mixture density at ``x`` (quadrature over the rendered truth)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        ll = self.model.log_density(x[:, None], self.truth_f.measure.support[None, :])
        with np.errstate(under="ignore"):
            return np.exp(ll) @ self.truth_f.masses

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["theta", "x"])
            for t, x in zip(self.thetas, self.xs):
                writer.writerow([repr(float(t)), repr(float(x))])


def gen(sc, seed, measure=None):
    """Draw n (theta, x) pairs; deterministic given ``seed``."""
    rng = np.random.default_rng(seed)
    thetas = sc.draw_thetas(sc.n, rng)
    model = sc.model()
    xs = model.draw(thetas, rng)
    return SimData(sc, thetas, xs, sc.truth(measure), model)


def ordered_counts(xs):
    """Count data sorted ascending: all 0s first, then 1s, and so on."""
    xs = np.asarray(xs, dtype=float)
    if np.any(xs < 0) or np.any(xs != np.round(xs)):
        raise ValueError("ordered_counts needs nonnegative integer data")
    return np.sort(xs, kind="stable")


def read_data_csv(path):
    """Observations from a CSV with an ``x`` column (or a single column)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header = rows[0]
    try:
        float(header[0])
        body, col = rows, 0
    except ValueError:
        body = rows[1:]
        col = header.index("x") if "x" in header else 0
    return np.array([float(r[col]) for r in body])
