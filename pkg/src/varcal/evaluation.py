"""Exceedance metrics, rolling and regime-stratified calibration,
weight diagnostics, and the Kupiec/Christoffersen likelihood-ratio
backtests."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .calibrators import BoundSeries
from .errors import ConfigError, DataError

ROLLING_WINDOW = 252


def exceedance_rate(bs: BoundSeries) -> float:
    if len(bs) == 0:
        raise DataError("empty bound series")
    return float(np.mean(bs.exceed))


def avg_var_bps(bs: BoundSeries) -> float:
    """Mean bound level, reported in basis points."""
    if len(bs) == 0:
        raise DataError("empty bound series")
    return float(np.mean(bs.bound)) * 10_000.0


def rolling_exceedance(indicators: np.ndarray, window: int = ROLLING_WINDOW) -> np.ndarray:
    """Trailing full-window exceedance rates; entry j covers positions
    j .. j+window-1 of the input. One extra exceedance inside a window
    moves the value by exactly 1/window."""
    n = indicators.shape[0]
    if window < 1:
        raise ConfigError("window must be positive")
    if n < window:
        raise DataError(f"need at least {window} observations, have {n}")
    c = np.concatenate(([0.0], np.cumsum(indicators, dtype=float)))
    return (c[window:] - c[:-window]) / window


def regime_stratified(indicators: np.ndarray, labels: np.ndarray, n_buckets: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Per-bucket exceedance percentage and bucket sizes."""
    if indicators.shape[0] != labels.shape[0]:
        raise DataError("indicator and label lengths differ")
    rates = np.empty(n_buckets)
    sizes = np.empty(n_buckets, dtype=np.int64)
    for k in range(n_buckets):
        mask = labels == k
        sizes[k] = int(mask.sum())
        if sizes[k] == 0:
            raise DataError(f"empty volatility bucket {k}")
        rates[k] = 100.0 * float(np.mean(indicators[mask]))
    return rates, sizes


def regime_stability(per_quintile_pct: np.ndarray, target_pct: float) -> tuple[float, float, float]:
    """(mean |dev|, max |dev|, population std of devs), deviations taken
    from the target rate, all in percentage points."""
    dev = np.asarray(per_quintile_pct, dtype=float) - target_pct
    return float(np.mean(np.abs(dev))), float(np.max(np.abs(dev))), float(np.std(dev))


def chi2_sf(x: float, dof: int) -> float:
    """Chi-squared survival function for 1 or 2 degrees of freedom."""
    if x < 0:
        raise ConfigError("chi2_sf needs x >= 0")
    if dof == 1:
        return math.erfc(math.sqrt(x / 2.0))
    if dof == 2:
        return math.exp(-x / 2.0)
    raise ConfigError(f"unsupported degrees of freedom {dof}")


def _xlogy(x: float, y: float) -> float:
    # 0 * log(0) := 0 convention used throughout the LR statistics
    if x == 0.0:
        return 0.0
    return x * math.log(y)


def kupiec_uc(n: int, x: int, alpha: float) -> tuple[float, float]:
    """Unconditional-coverage LR test of exceedance probability alpha."""
    if n < 1 or not 0 <= x <= n:
        raise ConfigError(f"invalid counts n={n}, x={x}")
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha {alpha} outside (0, 1)")
    p_hat = x / n
    lr = 2.0 * (_xlogy(n - x, (1.0 - p_hat) / (1.0 - alpha)) + _xlogy(x, p_hat / alpha))
    lr = max(lr, 0.0)
    return lr, chi2_sf(lr, 1)


def christoffersen(indicators: np.ndarray, alpha: float) -> tuple[float, float, float, float]:
    """Independence and conditional-coverage LR tests.

    Returns (lr_ind, p_ind, lr_cc, p_cc) with lr_cc = lr_uc + lr_ind.
    Degenerate transition cells contribute zero log-likelihood.
    """
    ind = np.asarray(indicators, dtype=np.int64)
    n = ind.shape[0]
    if n < 2:
        raise DataError("christoffersen needs at least 2 observations")
    prev, cur = ind[:-1], ind[1:]
    n00 = int(np.sum((prev == 0) & (cur == 0)))
    n01 = int(np.sum((prev == 0) & (cur == 1)))
    n10 = int(np.sum((prev == 1) & (cur == 0)))
    n11 = int(np.sum((prev == 1) & (cur == 1)))
    total = n00 + n01 + n10 + n11

    def _bern(k0: int, k1: int) -> float:
        # log-likelihood of k1 ones / k0 zeros at their own MLE rate
        s = k0 + k1
        if s == 0:
            return 0.0
        p = k1 / s
        return _xlogy(k0, 1.0 - p) + _xlogy(k1, p)

    ll_split = _bern(n00, n01) + _bern(n10, n11)
    ll_pooled = _bern(n00 + n10, n01 + n11)
    lr_ind = max(2.0 * (ll_split - ll_pooled), 0.0)
    lr_uc, _ = kupiec_uc(n, int(ind.sum()), alpha)
    lr_cc = lr_uc + lr_ind
    return lr_ind, chi2_sf(lr_ind, 1), lr_cc, chi2_sf(lr_cc, 2)


def weight_diagnostics(bs: BoundSeries) -> dict[str, float | None]:
    """Summary of the per-step weight health, as reported per method."""

    def _q(arr: np.ndarray, q: float) -> float | None:
        if arr.size == 0 or np.any(np.isnan(arr)):
            return None
        return float(np.percentile(arr, q))

    return {
        "median_n_eff": _q(bs.n_eff, 50),
        "p10_n_eff": _q(bs.n_eff, 10),
        "median_tau": _q(bs.tau, 50),
        "p90_tau": _q(bs.tau, 90),
    }


def format_pvalue(p: float) -> str:
    """Three decimals, switching to scientific below 1e-3."""
    if p < 1e-3:
        return f"{p:.2e}"
    return f"{p:.3f}"


@dataclass
class BacktestReport:
    method: str
    base: str
    alpha: float
    n: int
    exceed_count: int
    exceedance_pct: float
    avg_var_bps: float
    lr_uc: float
    p_uc: float
    lr_ind: float
    p_ind: float
    lr_cc: float
    p_cc: float
    per_quintile_pct: list[float]
    quintile_sizes: list[int]
    reg_mae_pp: float
    reg_maxdev_pp: float
    reg_std_pp: float
    weight_diag: dict[str, float | None]
    fallback_steps: int
    rolling_window: int
    rolling_dates: list[str] = field(repr=False)
    rolling_rates: list[float] = field(repr=False)

    def to_dict(self) -> dict:
        return asdict(self)


def build_report(
    bs: BoundSeries,
    alpha: float,
    quintile_labels: np.ndarray,
    method: str,
    base: str,
    rolling_window: int = ROLLING_WINDOW,
) -> BacktestReport:
    n = len(bs)
    x = int(np.sum(bs.exceed))
    lr_uc, p_uc = kupiec_uc(n, x, alpha)
    lr_ind, p_ind, lr_cc, p_cc = christoffersen(bs.exceed, alpha)
    rates, sizes = regime_stratified(bs.exceed, quintile_labels)
    mae, maxdev, std = regime_stability(rates, 100.0 * alpha)
    if n >= rolling_window:
        roll = rolling_exceedance(bs.exceed, rolling_window)
        roll_dates = list(bs.dates[rolling_window - 1 :])
        roll_rates = [float(v) for v in roll]
    else:
        roll_dates, roll_rates = [], []
    return BacktestReport(
        method=method,
        base=base,
        alpha=alpha,
        n=n,
        exceed_count=x,
        exceedance_pct=100.0 * x / n,
        avg_var_bps=avg_var_bps(bs),
        lr_uc=lr_uc,
        p_uc=p_uc,
        lr_ind=lr_ind,
        p_ind=p_ind,
        lr_cc=lr_cc,
        p_cc=p_cc,
        per_quintile_pct=[float(r) for r in rates],
        quintile_sizes=[int(s) for s in sizes],
        reg_mae_pp=mae,
        reg_maxdev_pp=maxdev,
        reg_std_pp=std,
        weight_diag=weight_diagnostics(bs),
        fallback_steps=int(np.sum(bs.fallback != 0)),
        rolling_window=rolling_window,
        rolling_dates=roll_dates,
        rolling_rates=roll_rates,
    )
