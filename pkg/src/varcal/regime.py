"""Two-dimensional regime embedding and volatility-quintile assignment.

The embedding at index t is z_t = (rv21_t, mar5_t): trailing annualized
volatility and trailing mean absolute return, both built strictly from
returns before t. Standardization statistics come from a pre-test index
range so the test segment never leaks into its own features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

RV_WINDOW = 21
MAR_WINDOW = 5
VALID_FROM = RV_WINDOW  # both features exist from here on
ANNUALIZER = float(np.sqrt(252.0))


def rv21(returns: np.ndarray, t: int) -> float:
    """sqrt(252) times the sample std of the 21 returns before t."""
    if t < RV_WINDOW:
        raise DataError(f"rv21 needs {RV_WINDOW} prior returns, have {t}")
    window = returns[t - RV_WINDOW : t]
    return ANNUALIZER * float(np.std(window, ddof=1))


def mar5(returns: np.ndarray, t: int) -> float:
    """Mean absolute return over the 5 days before t."""
    if t < MAR_WINDOW:
        raise DataError(f"mar5 needs {MAR_WINDOW} prior returns, have {t}")
    return float(np.mean(np.abs(returns[t - MAR_WINDOW : t])))


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray
    source_range: tuple[int, int]

    def apply(self, raw: np.ndarray) -> np.ndarray:
        return (raw - self.mean) / self.std

    def invert(self, standardized: np.ndarray) -> np.ndarray:
        return standardized * self.std + self.mean


@dataclass(frozen=True)
class RegimeEmbedding:
    """Raw and standardized feature rows; rows before valid_from are NaN."""

    raw: np.ndarray
    standardized: np.ndarray
    valid_from: int
    stats: StandardizationStats


def compute_raw_features(returns: np.ndarray) -> np.ndarray:
    """(n, 2) array of (rv21, mar5) rows; NaN before index 21."""
    n = returns.shape[0]
    out = np.full((n, 2), np.nan)
    if n <= VALID_FROM:
        return out
    # windowed views keep the arithmetic identical to the per-index
    # functions (a cumulative-sum shortcut cancels badly near zero var)
    from numpy.lib.stride_tricks import sliding_window_view

    rv_wins = sliding_window_view(returns, RV_WINDOW)
    out[VALID_FROM:, 0] = ANNUALIZER * rv_wins[: n - VALID_FROM].std(axis=1, ddof=1)
    mar_wins = sliding_window_view(np.abs(returns), MAR_WINDOW)
    lead = VALID_FROM - MAR_WINDOW
    out[VALID_FROM:, 1] = mar_wins[lead : lead + n - VALID_FROM].mean(axis=1)
    return out


def fit_standardizer(raw: np.ndarray, source_range: tuple[int, int]) -> StandardizationStats:
    """Per-coordinate mean and sample std over [start, stop)."""
    start, stop = source_range
    if stop - start < 2:
        raise ConfigError("standardizer needs at least 2 rows")
    block = raw[start:stop]
    if np.any(np.isnan(block)):
        raise ConfigError("standardizer range includes warm-up rows")
    mean = block.mean(axis=0)
    std = block.std(axis=0, ddof=1)
    for k, s in enumerate(std):
        if s <= 0:
            raise DataError(f"degenerate feature {k}: zero variance over fit range")
    return StandardizationStats(mean=mean, std=std, source_range=source_range)


def compute_embedding(returns: np.ndarray, source_range: tuple[int, int]) -> RegimeEmbedding:
    """Full embedding with statistics fit on `source_range` (which must
    start at or after the warm-up boundary)."""
    raw = compute_raw_features(returns)
    stats = fit_standardizer(raw, source_range)
    standardized = np.full_like(raw, np.nan)
    standardized[VALID_FROM:] = stats.apply(raw[VALID_FROM:])
    return RegimeEmbedding(raw=raw, standardized=standardized, valid_from=VALID_FROM, stats=stats)


def assign_vol_quintiles(values: np.ndarray, n_buckets: int = 5) -> np.ndarray:
    """Rank-based bucket labels 0..n_buckets-1 over one segment.

    Bucket sizes differ by at most one, with the larger buckets first.
    Ties in value go to the earlier position (stable rank order).
    """
    n = values.shape[0]
    if n == 0:
        raise DataError("cannot bucket an empty segment")
    order = np.argsort(values, kind="stable")
    base, extra = divmod(n, n_buckets)
    labels = np.empty(n, dtype=np.int64)
    pos = 0
    for b in range(n_buckets):
        size = base + (1 if b < extra else 0)
        labels[order[pos : pos + size]] = b
        pos += size
    return labels
