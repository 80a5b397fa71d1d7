"""Goodness-of-fit and independence checks, plain and importance-weighted.

Weighted variants use the Kish effective sample size ``(sum w)^2 / sum w^2``
wherever an unweighted test would use ``n``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

MIN_KS_SIZE = 8
ASYMPTOTIC_KS_SIZE = 35


class InsufficientSample(ValueError):
    pass


@dataclass(frozen=True)
class KsReport:
    statistic: float
    n_effective: float
    p_value: float
    test: str = "ks_normal"

    def reject_at(self, alpha: float) -> bool:
        return self.p_value < alpha

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "n_effective": self.n_effective,
            "reject_at_001": self.reject_at(0.01),
            "reject_at_0001": self.reject_at(0.001),
        }


@dataclass(frozen=True)
class WeightedSample:
    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if v.shape != w.shape:
            raise ValueError(f"values and weights differ in length ({v.size} vs {w.size})")
        if not np.all(w > 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and strictly positive")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w / w.sum())

    @classmethod
    def uniform(cls, values) -> "WeightedSample":
        v = np.asarray(values, dtype=float).ravel()
        return cls(v, np.ones_like(v))

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    @property
    def n_effective(self) -> float:
        if self.is_uniform:
            return float(self.values.size)
        return kish_ess(self.weights)


def kish_ess(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return float(w.sum() ** 2 / np.sum(w * w))


def normal_cdf(x, mean: float, variance: float):
    return special.ndtr((np.asarray(x) - mean) / np.sqrt(variance))


def kolmogorov_pvalue(statistic: float, n_effective: float) -> float:
    """Asymptotic Kolmogorov tail ``P(sqrt(n) D > d)``."""
    return float(stats.kstwobign.sf(np.sqrt(n_effective) * statistic))


def _ks_distance(sorted_x, cdf_after, cdf_before, mean, variance) -> float:
    phi = normal_cdf(sorted_x, mean, variance)
    return float(max(np.max(cdf_after - phi), np.max(phi - cdf_before), 0.0))


def _check_size(n: float, what: str) -> None:
    if n < MIN_KS_SIZE:
        raise InsufficientSample(f"{what} {n:.1f} is below the minimum of {MIN_KS_SIZE}")
    if n < ASYMPTOTIC_KS_SIZE:
        warnings.warn(f"{what} {n:.1f} < {ASYMPTOTIC_KS_SIZE}: asymptotic KS p-value is approximate", stacklevel=3)


def ks_test_normal(sample, mean: float = 0.0, variance: float = 1.0) -> KsReport:
    """One-sample KS test against ``N(mean, variance)``."""
    if not variance > 0:
        raise ValueError(f"variance must be positive, got {variance}")
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    n = x.size
    _check_size(n, "sample size")
    steps = np.arange(n + 1) / n
    d = _ks_distance(x, steps[1:], steps[:-1], mean, variance)
    return KsReport(d, float(n), kolmogorov_pvalue(d, n))


def ks_test_normal_weighted(ws: WeightedSample, mean: float = 0.0, variance: float = 1.0) -> KsReport:
    """KS distance between the weighted empirical CDF and ``N(mean, variance)``."""
    if ws.is_uniform:
        r = ks_test_normal(ws.values, mean, variance)
        return KsReport(r.statistic, r.n_effective, r.p_value, "ks_normal_weighted")
    if not variance > 0:
        raise ValueError(f"variance must be positive, got {variance}")
    n_eff = ws.n_effective
    _check_size(n_eff, "effective sample size")
    order = np.argsort(ws.values, kind="stable")
    x = ws.values[order]
    cdf = np.cumsum(ws.weights[order])
    cdf /= cdf[-1]
    before = np.concatenate(([0.0], cdf[:-1]))
    d = _ks_distance(x, cdf, before, mean, variance)
    return KsReport(d, n_eff, kolmogorov_pvalue(d, n_eff), "ks_normal_weighted")


def moment_check(sample, target_mean: float, target_var: float) -> dict:
    """z-scores of the sample mean and variance against targets.

    Accepts a plain array or a :class:`WeightedSample`; standard errors use the
    (effective) sample size, and the variance error uses the fourth central moment.
    """
    ws = sample if isinstance(sample, WeightedSample) else WeightedSample.uniform(sample)
    n = ws.n_effective
    if ws.values.size < 2:
        raise InsufficientSample("moment check needs at least two values")
    w, x = ws.weights, ws.values
    mean = float(np.sum(w * x))
    dev = x - mean
    m2 = float(np.sum(w * dev * dev))
    m4 = float(np.sum(w * dev**4))
    var = m2 * n / (n - 1) if n > 1 else m2

    def z(diff, se):
        if se > 0:
            return diff / se
        return 0.0 if diff == 0 else float(np.copysign(np.inf, diff))

    return {
        "mean": mean,
        "variance": var,
        "n_effective": n,
        "std_error_mean": float(np.sqrt(m2 / n)),
        "z_mean": z(mean - target_mean, np.sqrt(m2 / n)),
        "z_var": z(var - target_var, np.sqrt(max(m4 - m2 * m2, 0.0) / n)),
    }


def _quantile_bins(x, w, n_bins: int) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    cdf = np.cumsum(w[order])
    cdf /= cdf[-1]
    ranks = np.empty(x.size, dtype=int)
    # a value's bin is set by the weighted mass strictly below it
    below = np.concatenate(([0.0], cdf[:-1]))
    ranks[order] = np.minimum((below * n_bins).astype(int), n_bins - 1)
    # ties must share a bin
    xs = x[order]
    tie = np.concatenate(([False], xs[1:] == xs[:-1]))
    if tie.any():
        r = ranks[order]
        for j in np.nonzero(tie)[0]:
            r[j] = r[j - 1]
        ranks[order] = r
    return ranks


def pairwise_independence_check(x_sample, y_sample, n_bins: int = 4, weights=None) -> dict:
    """Chi-square test of independence on an ``n_bins x n_bins`` quantile table.

    With weights, cell frequencies are weighted proportions scaled to the Kish
    effective sample size.
    """
    x = np.asarray(x_sample, dtype=float).ravel()
    y = np.asarray(y_sample, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError("samples must have equal length")
    if x.size < 100:
        raise InsufficientSample("independence check needs at least 100 pairs")
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("degenerate marginal: a sample is constant")
    if weights is None:
        w = np.ones_like(x)
        n = float(x.size)
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape != x.shape or not np.all(w > 0):
            raise ValueError("weights must be positive and match the samples")
        n = kish_ess(w)
    w = w / w.sum()
    bx = _quantile_bins(x, w, n_bins)
    by = _quantile_bins(y, w, n_bins)
    table = np.zeros((n_bins, n_bins))
    np.add.at(table, (bx, by), w)
    px = table.sum(axis=1)
    py = table.sum(axis=0)
    keep_x, keep_y = px > 0, py > 0
    table = table[np.ix_(keep_x, keep_y)]
    px, py = px[keep_x], py[keep_y]
    if px.size < 2 or py.size < 2:
        raise ValueError("degenerate marginal: fewer than two occupied bins")
    expected = np.outer(px, py)
    chi2 = float(n * np.sum((table - expected) ** 2 / expected))
    dof = (px.size - 1) * (py.size - 1)
    return {
        "test": "chi2_independence",
        "statistic": chi2,
        "dof": dof,
        "p_value": float(stats.chi2.sf(chi2, dof)),
        "n_effective": n,
    }


def weighted_l2_norm(values, weights) -> float:
    """``sqrt(sum_i weights_i values_i^2)``."""
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if v.shape != w.shape:
        raise ValueError(f"shape mismatch: {v.shape} vs {w.shape}")
    return float(np.sqrt(np.sum(w * v * v)))


def path_space_norm(paths, index_weights) -> float:
    """Sup over time, then average over paths and weighted average over indices.

    ``paths`` has shape ``(N, M, K + 1)``.
    """
    p = np.asarray(paths, dtype=float)
    w = np.asarray(index_weights, dtype=float)
    if p.ndim != 3 or p.shape[0] != w.shape[0]:
        raise ValueError("paths must be (N, M, K+1) with one weight per index")
    sup2 = np.max(p * p, axis=2).mean(axis=1)
    return float(np.sqrt(np.sum(w * sup2)))


def bonferroni(alpha: float, n_tests: int) -> float:
    return alpha / max(int(n_tests), 1)

