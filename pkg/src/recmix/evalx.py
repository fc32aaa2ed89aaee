"""Distances, bias/spread summaries and consistency diagnostics."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernels import x_measure
from .measure import normalize


def _check_same(a, b):
    if not a.measure.same_as(b.measure):
        raise ValueError("densities live on different measures")


def l1_distance(a, b):
    _check_same(a, b)
    return float(np.abs(a.values - b.values) @ a.measure.weights)


def kl_divergence(truth, est):
    """KL(truth || est); +inf (with a warning) if est vanishes where truth
    has mass."""
    _check_same(truth, est)
    t, e, w = truth.values, est.values, truth.measure.weights
    on = t > 0
    if np.any(e[on] <= 0):
        warnings.warn("estimate has zero density where truth is positive; KL = inf",
                      RuntimeWarning, stacklevel=2)
        return math.inf
    val = float((t[on] * np.log(t[on] / e[on])) @ w[on])
    return max(val, 0.0)


def bias_spread(estimates, truth):
    """L1 distance of the pointwise mean estimate to ``truth``, and the mean
    L1 distance of each estimate to that pointwise mean."""
    if len(estimates) == 0:
        raise ValueError("need at least one estimate")
    for e in estimates:
        _check_same(e, truth)
    w = truth.measure.weights
    stack = np.stack([e.values for e in estimates])
    mean = stack.mean(axis=0)
    bias = float(np.abs(mean - truth.values) @ w)
    spread = float((np.abs(stack - mean) @ w).mean())
    return bias, spread


class XScale:
    """Observation-space grid with a cached kernel matrix, for rendering
    mixture densities p_f on the x scale."""

    def __init__(self, model, theta_measure, num_points=4000):
        self.model = model
        self.theta_measure = theta_measure
        self.measure = x_measure(model, theta_measure, num_points)
        ll = model.log_density(self.measure.support[:, None], theta_measure.support[None, :])
        with np.errstate(under="ignore"):
            self.kernel = np.exp(np.asarray(ll, dtype=float))

    def mixture(self, f):
        if not f.measure.same_as(self.theta_measure):
            raise ValueError("density lives on a different parameter measure")
        return normalize(self.kernel @ f.masses, self.measure)

    def mixture_from_masses(self, masses):
        return normalize(self.kernel @ masses, self.measure)

    def raw_mass(self, f):
        """Integral of the unrenormalized mixture over the grid."""
        return float((self.kernel @ f.masses) @ self.measure.weights)


_XSCALE_CACHE = {}


def xscale_for(model, theta_measure):
    key = (repr(model), id(theta_measure))
    hit = _XSCALE_CACHE.get(key)
    if hit is None or hit.theta_measure is not theta_measure:
        if len(_XSCALE_CACHE) > 16:
            _XSCALE_CACHE.clear()
        hit = _XSCALE_CACHE[key] = XScale(model, theta_measure)
    return hit


def marginal_kl_trace(trace, truth, model, xscale=None):
    """KL(p, p_i) on the observation scale at every checkpoint of ``trace``.

    ``truth`` is the true mixing density (same parameter measure).
    """
    xs = xscale or xscale_for(model, truth.measure)
    p = xs.mixture(truth)
    out = []
    for k, step in enumerate(trace.checkpoints):
        pk = xs.mixture_from_masses(trace.snapshots[k])
        out.append((int(step), kl_divergence(p, pk)))
    return out


def rate_fit(pairs):
    """Least-squares slope of log KL on log w over ``(w_i, KL_i)`` pairs.

    Pairs with nonpositive or non-finite KL are dropped first.
    """
    arr = np.asarray(list(pairs), dtype=float).reshape(-1, 2)
    keep = np.isfinite(arr[:, 1]) & (arr[:, 1] > 0) & (arr[:, 0] > 0)
    arr = arr[keep]
    if arr.shape[0] < 10:
        raise ValueError(f"need at least 10 usable checkpoints, got {arr.shape[0]}")
    lx, ly = np.log(arr[:, 0]), np.log(arr[:, 1])
    slope, _ = np.polyfit(lx, ly, 1)
    return float(slope)


@dataclass
class MetricsReport:
    """Long-format metrics: one row per (estimator, replicate) plus
    aggregate rows."""

    rows: list = field(default_factory=list)
    aggregates: list = field(default_factory=list)

    COLUMNS = ("kind", "estimator", "replicate", "status", "L1_theta", "L1_x", "KL_x",
               "pi_hat", "ess", "bias", "spread", "wall_time_seconds", "note")

    def add(self, estimator, replicate, status="ok", **values):
        row = {"kind": "replicate", "estimator": estimator, "replicate": replicate,
               "status": status}
        row.update(values)
        self.rows.append(row)
        return row

    def ok_rows(self, estimator):
        return [r for r in self.rows if r["estimator"] == estimator and r["status"] == "ok"]

    def mean(self, estimator, column):
        vals = [r[column] for r in self.ok_rows(estimator) if r.get(column) is not None]
        return float(np.mean(vals)) if vals else math.nan

    def add_aggregate(self, estimator, bias, spread, **values):
        row = {"kind": "aggregate", "estimator": estimator, "replicate": "", "status": "ok",
               "bias": bias, "spread": spread}
        row.update(values)
        self.aggregates.append(row)
        return row

    def write_csv(self, fh, include_timing=True, header_lines=()):
        cols = [c for c in self.COLUMNS if include_timing or c != "wall_time_seconds"]
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in self.rows + self.aggregates:
            writer.writerow([_fmt(row.get(c)) for c in cols])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "nan" if v != v else "-inf")
    return str(v)
