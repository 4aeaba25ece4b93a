"""Base (1-alpha)-quantile forecasters: rolling historical simulation,
gradient-boosted quantile regression, and a precomputed-forecast adapter.

Every forecaster emits q_hat[t] built strictly from information with
index <= t-1. Forecast arrays are full-length with NaN before
`valid_from`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import LossSeries
from .errors import ConfigError, DataError
from .regime import MAR_WINDOW, VALID_FROM, compute_raw_features

N_LAGS = 5


def empirical_quantile_higher(values: np.ndarray, gamma: float) -> float:
    """Higher-convention empirical quantile: the ceil(gamma * n)-th order
    statistic, the smallest value with at least gamma of the mass at or
    below it."""
    n = values.shape[0]
    if n == 0:
        raise DataError("quantile of empty sample")
    if not 0.0 < gamma <= 1.0:
        raise ConfigError(f"quantile level {gamma} outside (0, 1]")
    k = min(n, max(1, math.ceil(gamma * n)))
    return float(np.partition(values, k - 1)[k - 1])


@dataclass(frozen=True)
class ForecastSeries:
    dates: tuple[str, ...]
    qhat: np.ndarray
    valid_from: int
    valid_to: int = -1

    def __post_init__(self) -> None:
        if len(self.dates) != len(self.qhat):
            raise DataError("forecast length mismatch")
        if self.valid_to < 0:
            object.__setattr__(self, "valid_to", len(self.qhat))
        body = self.qhat[self.valid_from : self.valid_to]
        if body.size and not np.all(np.isfinite(body)):
            raise DataError("non-finite forecast inside valid range")


def hs_forecast(losses: LossSeries, alpha: float, window: int = 252) -> ForecastSeries:
    """Rolling empirical (1-alpha) quantile of the last `window` losses."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha {alpha} outside (0, 1)")
    if window < math.ceil(1.0 / alpha):
        raise ConfigError(f"window {window} too small for alpha {alpha}: quantile sits on the extreme")
    y = losses.losses
    n = y.shape[0]
    qhat = np.full(n, np.nan)
    if n > window:
        from numpy.lib.stride_tricks import sliding_window_view

        wins = sliding_window_view(y, window)[: n - window]
        k = min(window, max(1, math.ceil((1.0 - alpha) * window)))
        qhat[window:] = np.partition(wins, k - 1, axis=1)[:, k - 1]
    return ForecastSeries(dates=losses.dates, qhat=qhat, valid_from=window)


def build_features(returns: np.ndarray) -> np.ndarray:
    """(n, 7) causal covariates: r_{t-1}..r_{t-5}, rv21_t, mar5_t.
    Rows before the volatility warm-up are NaN."""
    n = returns.shape[0]
    x = np.full((n, N_LAGS + 2), np.nan)
    for lag in range(1, N_LAGS + 1):
        x[lag:, lag - 1] = returns[:-lag] if lag < n else returns[:0]
    x[:, N_LAGS : N_LAGS + 2] = compute_raw_features(returns)
    x[:VALID_FROM] = np.nan
    return x


@dataclass(frozen=True)
class GbdtParams:
    rounds: int = 200
    depth: int = 3
    learning_rate: float = 0.05
    window: int = 1008
    refit_every: int = 21
    min_window: int = 252
    n_bins: int = 64
    min_leaf: int = 10

    def __post_init__(self) -> None:
        if self.rounds < 0 or self.depth < 1 or self.min_leaf < 1:
            raise ConfigError("bad tree parameters")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError("learning rate must be in (0, 1]")
        if self.window < self.min_window:
            raise ConfigError(f"gbdt window below the minimum {self.min_window}")
        if self.refit_every < 1 or self.n_bins < 2:
            raise ConfigError("bad refit cadence or bin count")


class _Tree:
    """Depth-limited regression tree. Split structure is greedy
    squared-error on gradients; each leaf then takes the higher-convention
    gamma-quantile of the raw residuals it holds, which is the exact
    pinball-optimal constant for that leaf."""

    __slots__ = ("feature", "thresh", "left", "right", "value")

    def __init__(self, n_nodes: int):
        self.feature = np.full(n_nodes, -1, dtype=np.int64)
        self.thresh = np.zeros(n_nodes)
        self.left = np.arange(n_nodes, dtype=np.int64)
        self.right = np.arange(n_nodes, dtype=np.int64)
        self.value = np.zeros(n_nodes)

    def predict(self, x: np.ndarray, depth: int) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=np.int64)
        for _ in range(depth):
            f = self.feature[node]
            go = f >= 0
            if not go.any():
                break
            col = x[np.arange(x.shape[0]), np.maximum(f, 0)]
            node = np.where(go & (col <= self.thresh[node]), self.left[node], np.where(go, self.right[node], node))
        return self.value[node]


def _fit_tree(binned: np.ndarray, edges: list[np.ndarray], grad: np.ndarray, resid: np.ndarray, gamma: float, p: GbdtParams) -> _Tree:
    n, d = binned.shape
    max_nodes = 2 ** (p.depth + 1) - 1
    tree = _Tree(max_nodes)
    next_free = 1
    frontier: list[tuple[int, np.ndarray, int]] = [(0, np.arange(n), 0)]
    while frontier:
        node, rows, level = frontier.pop()
        g = grad[rows]
        if level >= p.depth or rows.size < 2 * p.min_leaf:
            tree.value[node] = empirical_quantile_higher(resid[rows], gamma)
            continue
        total = g.sum()
        best_gain, best_f, best_bin = 0.0, -1, -1
        parent = total * total / rows.size
        for f in range(d):
            cnt = np.bincount(binned[rows, f], minlength=p.n_bins)
            sm = np.bincount(binned[rows, f], weights=g, minlength=p.n_bins)
            c_cnt = np.cumsum(cnt)[:-1]
            c_sm = np.cumsum(sm)[:-1]
            ok = (c_cnt >= p.min_leaf) & (rows.size - c_cnt >= p.min_leaf)
            if not ok.any():
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = c_sm**2 / c_cnt + (total - c_sm) ** 2 / (rows.size - c_cnt) - parent
            gain[~ok] = -np.inf
            b = int(np.argmax(gain))
            if gain[b] > best_gain:
                best_gain, best_f, best_bin = float(gain[b]), f, b
        if best_f < 0:
            tree.value[node] = empirical_quantile_higher(resid[rows], gamma)
            continue
        go_left = binned[rows, best_f] <= best_bin
        lid, rid = next_free, next_free + 1
        next_free += 2
        tree.feature[node] = best_f
        tree.thresh[node] = edges[best_f][best_bin]
        tree.left[node] = lid
        tree.right[node] = rid
        frontier.append((lid, rows[go_left], level + 1))
        frontier.append((rid, rows[~go_left], level + 1))
    return tree


class GbdtQuantile:
    """Gradient boosting for the gamma-quantile under pinball loss.

    The base score and every leaf update are exact empirical quantiles,
    so training pinball loss is non-increasing round over round (each
    leaf's update minimizes the leaf's pinball objective, and shrinking
    it by the learning rate stays below the no-update loss by
    convexity)."""

    def __init__(self, gamma: float, params: GbdtParams):
        if not 0.0 < gamma < 1.0:
            raise ConfigError(f"gamma {gamma} outside (0, 1)")
        self.gamma = gamma
        self.p = params
        self.base_score = 0.0
        self.trees: list[_Tree] = []
        self._edges: list[np.ndarray] = []

    def _bin(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(x.shape, dtype=np.int64)
        for f in range(x.shape[1]):
            out[:, f] = np.searchsorted(self._edges[f], x[:, f], side="left")
        return out

    def fit(self, x: np.ndarray, y: np.ndarray) -> "GbdtQuantile":
        if x.shape[0] != y.shape[0] or x.shape[0] == 0:
            raise DataError("bad training shapes")
        self._edges = []
        qs = np.linspace(0.0, 1.0, self.p.n_bins + 1)[1:-1]
        for f in range(x.shape[1]):
            e = np.unique(np.quantile(x[:, f], qs))
            self._edges.append(e)
        binned = self._bin(x)
        self.base_score = empirical_quantile_higher(y, self.gamma)
        self.trees = []
        pred = np.full(y.shape[0], self.base_score)
        for _ in range(self.p.rounds):
            resid = y - pred
            grad = np.where(resid < 0, self.gamma - 1.0, self.gamma)
            tree = _fit_tree(binned, self._edges, grad, resid, self.gamma, self.p)
            self.trees.append(tree)
            pred = pred + self.p.learning_rate * tree.predict(x, self.p.depth)
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        pred = np.full(x.shape[0], self.base_score)
        for tree in self.trees:
            pred = pred + self.p.learning_rate * tree.predict(x, self.p.depth)
        return pred


def pinball_loss(y: np.ndarray, pred: np.ndarray, gamma: float) -> float:
    u = y - pred
    return float(np.mean(np.where(u >= 0, gamma * u, (gamma - 1.0) * u)))


def gbdt_quantile_forecast(
    losses: LossSeries,
    returns: np.ndarray,
    alpha: float,
    params: GbdtParams | None = None,
) -> ForecastSeries:
    """Walk-forward GBDT forecasts: refit on the trailing window every
    `refit_every` steps, reuse the model in between."""
    p = params or GbdtParams()
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha {alpha} outside (0, 1)")
    y = losses.losses
    n = y.shape[0]
    x = build_features(returns)
    first = VALID_FROM + p.min_window
    qhat = np.full(n, np.nan)
    if first >= n:
        raise DataError(f"series too short for gbdt: need more than {first} rows")
    t = first
    while t < n:
        lo = max(VALID_FROM, t - p.window)
        model = GbdtQuantile(1.0 - alpha, p).fit(x[lo:t], y[lo:t])
        # one model serves the whole block until the next refit; its
        # prediction at t+j reads only the causal feature row x[t+j]
        end = min(n, t + p.refit_every)
        qhat[t:end] = model.predict(x[t:end])
        t = end
    return ForecastSeries(dates=losses.dates, qhat=qhat, valid_from=first)


def load_external_forecasts(
    path: str,
    dates: tuple[str, ...],
    eval_range: tuple[int, int],
    date_column: str = "date",
    qhat_column: str = "qhat",
) -> ForecastSeries:
    """Adapter for precomputed forecasts. The file must cover every date
    in [eval_range); earlier extra dates are used when present (they
    warm the calibration buffer), later ones are ignored."""
    import csv

    table: dict[str, float] = {}
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [c.strip() for c in header]
        try:
            d_idx = header.index(date_column)
            q_idx = header.index(qhat_column)
        except ValueError:
            raise DataError(f"{path}: need columns {date_column!r} and {qhat_column!r}, have {header}") from None
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            try:
                val = float(row[q_idx])
            except (ValueError, IndexError):
                raise DataError(f"{path}:{lineno}: bad forecast row") from None
            if not math.isfinite(val):
                raise DataError(f"{path}:{lineno}: non-finite forecast")
            table[row[d_idx].strip()] = val

    n = len(dates)
    qhat = np.full(n, np.nan)
    hit = np.zeros(n, dtype=bool)
    for i, d in enumerate(dates):
        if d in table:
            qhat[i] = table[d]
            hit[i] = True
    start, stop = eval_range
    missing = [dates[i] for i in range(start, stop) if not hit[i]]
    if missing:
        raise DataError(f"{path}: no forecast for {len(missing)} evaluation dates (first: {missing[0]})")
    covered = np.flatnonzero(hit)
    valid_from = int(covered[0])
    # keep only the contiguous run of coverage ending at the eval stop;
    # earlier isolated forecasts cannot serve the sequential buffer
    run = np.flatnonzero(~hit[valid_from:stop])
    if run.size:
        valid_from = int(valid_from + run[-1] + 1)
    return ForecastSeries(dates=dates, qhat=qhat, valid_from=valid_from, valid_to=stop)
