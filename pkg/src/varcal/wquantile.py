"""Weighted quantiles and the conformal pieces built on them: the
finite-sample inflated level and the randomized weighted p-value."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, NumericError


def weighted_quantile(values, weights, gamma: float) -> float:
    """Smallest v among `values` with cumulative normalized weight >= gamma.

    Ties in value pool their weights before the threshold test. If gamma
    sits above the reachable cumulative mass the maximum value is
    returned.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if v.size == 0:
        raise NumericError("weighted_quantile: empty values")
    if v.shape != w.shape:
        raise ConfigError("weighted_quantile: values and weights lengths differ")
    if np.any(w < 0):
        raise ConfigError("weighted_quantile: negative weight")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ConfigError("weighted_quantile: weights must sum to 1")
    if not 0.0 < gamma <= 1.0:
        raise ConfigError(f"weighted_quantile: level {gamma} outside (0, 1]")

    order = np.argsort(v, kind="stable")
    v = v[order]
    cum = np.cumsum(w[order])
    # last index of each tie run carries the pooled mass for that value
    last = np.nonzero(np.r_[v[1:] != v[:-1], True])[0]
    pos = np.searchsorted(cum[last], gamma, side="left")
    if pos >= last.size:
        return float(v[-1])
    return float(v[last[pos]])


def inflated_level(alpha: float, total_weight: float, w_test: float = 1.0) -> float:
    """min{1, (1-alpha) * (1 + w_test / W)} with W the unnormalized
    calibration mass. Approaches 1-alpha as W grows."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha {alpha} outside (0, 1)")
    if total_weight <= 0:
        raise ConfigError("total weight must be positive")
    if w_test < 0:
        raise ConfigError("test-point weight must be >= 0")
    return min(1.0, (1.0 - alpha) * (1.0 + w_test / total_weight))


def conformal_threshold(
    scores,
    weights,
    alpha: float,
    correction: bool = False,
    total_weight: float | None = None,
    w_test: float = 1.0,
) -> float:
    """Calibration buffer c: weighted quantile of past scores at 1-alpha,
    or at the inflated level when the finite-sample correction is on."""
    if correction:
        if total_weight is None:
            raise ConfigError("correction requires the unnormalized total weight")
        level = inflated_level(alpha, total_weight, w_test)
    else:
        if not 0.0 < alpha < 1.0:
            raise ConfigError(f"alpha {alpha} outside (0, 1)")
        level = 1.0 - alpha
    return weighted_quantile(scores, weights, level)


def conformal_pvalue(scores, weights, s_test: float, w_test: float = 1.0, u: float = 1.0) -> float:
    """Randomized weighted conformal p-value on unnormalized weights:

        p = (sum_i w_i 1{s_i >= s_test} + w_test * u) / (W + w_test)

    Super-uniform under weighted exchangeability; decreasing in s_test.
    """
    s = np.asarray(scores, dtype=float)
    w = np.asarray(weights, dtype=float)
    if s.size == 0:
        raise NumericError("conformal_pvalue: empty scores")
    if s.shape != w.shape:
        raise ConfigError("conformal_pvalue: scores and weights lengths differ")
    if np.any(w < 0) or w_test < 0:
        raise ConfigError("conformal_pvalue: negative weight")
    if not 0.0 <= u <= 1.0:
        raise ConfigError(f"conformal_pvalue: u {u} outside [0, 1]")
    total = w.sum() + w_test
    if total <= 0:
        raise NumericError("conformal_pvalue: zero total weight")
    return float((w[s >= s_test].sum() + w_test * u) / total)
