"""Dominating measure on the parameter space and densities living on it.

A :class:`DominatingMeasure` is a uniform trapezoid grid over an interval
plus an optional list of atoms, each carrying unit point mass.  Support
points are stored flat: grid nodes first, then atoms.  Every estimator works
with the vector ``weights`` (trapezoid weight for a node, 1 for an atom), so
``values * weights`` is the probability mass on each support point.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

INTEGRAL_TOL = 1e-10


class DegenerateDensity(ValueError):
    """Raised when a density cannot be normalized (zero total mass)."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


def trapezoid_weights(lo, hi, m):
    h = (hi - lo) / (m - 1)
    w = np.full(m, h)
    w[0] = w[-1] = h / 2.0
    return w


@dataclass(frozen=True, eq=False)
class DominatingMeasure:
    """Grid nodes with quadrature weights plus unit-mass atoms."""

    nodes: np.ndarray
    quad_weights: np.ndarray
    atoms: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        qw = np.asarray(self.quad_weights, dtype=float)
        atoms = np.asarray(self.atoms, dtype=float).reshape(-1)
        if nodes.shape != qw.shape or nodes.ndim != 1:
            raise ValueError("nodes and quad_weights must be 1-d of equal length")
        if np.any(qw < 0):
            raise ValueError("quadrature weights must be nonnegative")
        if nodes.size > 1 and np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if np.unique(atoms).size != atoms.size:
            raise ValueError("atom locations must be distinct")
        if nodes.size + atoms.size == 0:
            raise ValueError("measure has no support points")
        for name, arr in (("nodes", nodes), ("quad_weights", qw), ("atoms", atoms)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        support = np.concatenate([nodes, atoms])
        weights = np.concatenate([qw, np.ones(atoms.size)])
        support.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)

    @property
    def num_nodes(self):
        return self.nodes.size

    @property
    def size(self):
        return self.support.size

    @property
    def is_atom(self):
        flags = np.zeros(self.size, dtype=bool)
        flags[self.num_nodes:] = True
        return flags

    def atom_index(self, location):
        hits = np.flatnonzero(self.atoms == location)
        if hits.size == 0:
            raise KeyError(f"no atom at {location!r}")
        return self.num_nodes + int(hits[0])

    def same_as(self, other):
        return self is other or (
            np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.quad_weights, other.quad_weights)
            and np.array_equal(self.atoms, other.atoms)
        )

    def describe(self):
        if self.num_nodes:
            lo, hi = self.nodes[0], self.nodes[-1]
            grid = f"[{lo:g}, {hi:g}] m={self.num_nodes}"
        else:
            grid = "no grid"
        return f"{grid} atoms={list(map(float, self.atoms))}"


def make_measure(theta_lo, theta_hi, m=1000, atoms=()):
    """Uniform composite-trapezoid grid on ``[theta_lo, theta_hi]`` plus atoms."""
    if not theta_lo < theta_hi:
        raise ValueError(f"reversed or empty interval [{theta_lo}, {theta_hi}]")
    if m < 2:
        raise ValueError("need at least 2 grid nodes")
    atoms = np.asarray(atoms, dtype=float).reshape(-1)
    if np.any((atoms < theta_lo) | (atoms > theta_hi)):
        raise ValueError(f"atoms {atoms} not inside [{theta_lo}, {theta_hi}]")
    nodes = np.linspace(theta_lo, theta_hi, m)
    return DominatingMeasure(nodes, trapezoid_weights(theta_lo, theta_hi, m), atoms)


def atoms_measure(locations):
    """Purely discrete measure: unit mass at each location, no grid."""
    return DominatingMeasure(np.empty(0), np.empty(0), np.asarray(locations, dtype=float))


@dataclass(frozen=True, eq=False)
class Density:
    """Nonnegative values, one per support point, integrating to one."""

    measure: DominatingMeasure
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.measure.size,):
            raise ValueError(f"expected {self.measure.size} values, got shape {v.shape}")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite and nonnegative")
        total = float(v @ self.measure.weights)
        if abs(total - 1.0) > INTEGRAL_TOL:
            raise ValueError(f"density integrates to {total!r}, not 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_masses(cls, measure, masses):
        """Build from per-support-point probability masses (sum to one)."""
        masses = np.asarray(masses, dtype=float)
        w = measure.weights
        values = np.divide(masses, w, out=np.zeros_like(masses), where=w > 0)
        return normalize(values, measure)

    @property
    def masses(self):
        return self.values * self.measure.weights

    def __len__(self):
        return self.values.size


def integrate(d):
    """Integral of a density (or any value vector) against its measure."""
    if isinstance(d, Density):
        values, measure = d.values, d.measure
    else:
        values, measure = d
    values = np.asarray(values, dtype=float)
    if values.shape != (measure.size,):
        raise ValueError(f"expected {measure.size} values, got shape {values.shape}")
    return float(values @ measure.weights)


def normalize(values, measure):
    """Scale nonnegative ``values`` to a :class:`Density` on ``measure``."""
    values = np.asarray(values, dtype=float)
    if values.shape != (measure.size,):
        raise ValueError(f"expected {measure.size} values, got shape {values.shape}")
    if np.any(values < 0):
        raise ValueError("values must be nonnegative")
    total = float(values @ measure.weights)
    if not total > 0 or not np.isfinite(total):
        raise DegenerateDensity(f"cannot normalize: total mass {total!r}")
    out = values / total
    # one correction pass pins the integral to rounding level
    out /= float(out @ measure.weights)
    return Density(measure, out)


def uniform_density(measure, include_atoms=False):
    values = np.where(measure.is_atom, 1.0 if include_atoms else 0.0, 1.0)
    return normalize(values, measure)


def mix_atom_mass(d, atom_location):
    """Probability the density puts on the atom at ``atom_location``."""
    return float(d.values[d.measure.atom_index(atom_location)])


def mixture(densities, coefs):
    """Convex combination of densities on a shared measure."""
    coefs = np.asarray(coefs, dtype=float)
    measure = densities[0].measure
    acc = np.zeros(measure.size)
    for d, a in zip(densities, coefs):
        if not d.measure.same_as(measure):
            raise ValueError("densities live on different measures")
        acc += a * d.values
    return normalize(acc, measure)


def to_csv(d, path=None, label="theta"):
    """Write ``(theta, value, kind)`` rows; returns the text if no path."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([label, "value", "kind"])
    kinds = np.where(d.measure.is_atom, "atom", "node")
    for t, v, k in zip(d.measure.support, d.values, kinds):
        writer.writerow([repr(float(t)), repr(float(v)), k])
    text = buf.getvalue()
    if path is None:
        return text
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text


def read_csv(path_or_text, measure=None):
    """Inverse of :func:`to_csv`.  Rebuilds the measure from the rows when
    ``measure`` is not given (trapezoid weights over the node range)."""
    if "\n" in str(path_or_text):
        text = str(path_or_text)
    else:
        with open(path_or_text) as fh:
            text = fh.read()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    rows = rows[1:]
    theta = np.array([float(r[0]) for r in rows])
    value = np.array([float(r[1]) for r in rows])
    kind = np.array([r[2] for r in rows])
    if measure is None:
        nodes = theta[kind == "node"]
        qw = trapezoid_weights(nodes[0], nodes[-1], nodes.size) if nodes.size > 1 else np.ones(nodes.size)
        measure = DominatingMeasure(nodes, qw, theta[kind == "atom"])
    return Density(measure, value)
