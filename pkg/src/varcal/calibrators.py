"""Sequential calibrators over conformity scores: sliding-window (swc),
time-weighted (twc), regime-weighted (rwc), and the adaptive-level
baseline (aci).

All four share one walk-forward discipline: at step t the threshold
c_t comes from scores at indices max(first, t-m) .. t-1 only, the bound
U_t = qhat_t + c_t is emitted, and only then is the realized loss
consumed. The buffer is primed with every pre-evaluation score
available, so emission can begin at the first evaluation date.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import backend
from .data import LossSeries, RunConfig
from .errors import ConfigError, DataError, EmptyBufferError
from .forecasters import ForecastSeries
from .regime import RegimeEmbedding


def compute_score(y, qhat):
    """Conformity score s = y - qhat; positive when the base forecast
    alone would have been exceeded."""
    return y - qhat


@dataclass(frozen=True)
class BoundSeries:
    """Per-date records of one calibrated run."""

    dates: tuple[str, ...]
    qhat: np.ndarray
    chat: np.ndarray
    bound: np.ndarray
    loss: np.ndarray
    exceed: np.ndarray
    n_eff: np.ndarray
    tau: np.ndarray
    fallback: np.ndarray
    alpha_t: np.ndarray

    def __len__(self) -> int:
        return len(self.dates)


def _prepare(losses: LossSeries, forecasts: ForecastSeries, eval_range: tuple[int, int], min_first: int = 0):
    n = len(losses)
    start, stop = eval_range
    if not 0 <= start < stop <= n:
        raise ConfigError(f"bad evaluation range [{start}, {stop}) for series of length {n}")
    if losses.dates != forecasts.dates:
        raise DataError("losses and forecasts are on different dates")
    first = max(forecasts.valid_from, min_first)
    if stop > forecasts.valid_to:
        raise DataError("forecasts do not cover the evaluation range")
    emit_start = max(start, first + 1)
    if emit_start >= stop:
        raise EmptyBufferError(
            f"no emittable step: scores begin at {first}, evaluation ends at {stop}"
        )
    scores = np.full(n, np.nan)
    scores[first:stop] = compute_score(losses.losses[first:stop], forecasts.qhat[first:stop])
    return np.ascontiguousarray(scores), first, emit_start, stop


def _assemble(
    losses: LossSeries,
    forecasts: ForecastSeries,
    scores: np.ndarray,
    emit_start: int,
    stop: int,
    chat: np.ndarray,
    n_eff: np.ndarray,
    tau: np.ndarray,
    fallback: np.ndarray,
    alpha_t: np.ndarray,
) -> BoundSeries:
    sl = slice(emit_start, stop)
    qhat = forecasts.qhat[sl].copy()
    exceed = (scores[sl] > chat).astype(np.int8)
    return BoundSeries(
        dates=losses.dates[sl],
        qhat=qhat,
        chat=chat,
        bound=qhat + chat,
        loss=losses.losses[sl].copy(),
        exceed=exceed,
        n_eff=n_eff,
        tau=tau,
        fallback=fallback,
        alpha_t=alpha_t,
    )


def _run_weighted(losses, forecasts, cfg: RunConfig, eval_range, z, use_kernel, lam, h):
    min_first = 0
    if use_kernel:
        if z is None:
            raise ConfigError("rwc needs a regime embedding")
        min_first = z.valid_from
    scores, first, emit_start, stop = _prepare(losses, forecasts, eval_range, min_first)
    if use_kernel:
        zz = np.ascontiguousarray(z.standardized)
    else:
        zz = np.zeros((scores.shape[0], 1))
    chat, n_eff, tau, fb = backend.run_weighted_conformal(
        scores,
        zz,
        int(use_kernel),
        first,
        emit_start,
        stop,
        cfg.m,
        lam,
        h,
        float(cfg.n_min) if use_kernel else 0.0,
        cfg.alpha,
        int(cfg.finite_sample_correction),
    )
    alpha_t = np.full(stop - emit_start, cfg.alpha)
    return _assemble(losses, forecasts, scores, emit_start, stop, chat, n_eff, tau, fb, alpha_t)


def run_swc(losses, forecasts, cfg: RunConfig, eval_range) -> BoundSeries:
    """Uniform weights over the last m scores."""
    return _run_weighted(losses, forecasts, cfg, eval_range, None, False, 0.0, np.inf)


def run_twc(losses, forecasts, cfg: RunConfig, eval_range) -> BoundSeries:
    """Recency-only weights exp(-lambda * lag)."""
    return _run_weighted(losses, forecasts, cfg, eval_range, None, False, cfg.lam, np.inf)


def run_rwc(losses, forecasts, cfg: RunConfig, eval_range, embedding: RegimeEmbedding) -> BoundSeries:
    """Recency times regime-similarity weights with the ESS safeguard."""
    return _run_weighted(losses, forecasts, cfg, eval_range, embedding, True, cfg.lam, cfg.h)


def run_aci(losses, forecasts, cfg: RunConfig, eval_range) -> BoundSeries:
    """Adaptive level over a uniform window; alpha_t resets to alpha at
    the start of each evaluation range."""
    scores, first, emit_start, stop = _prepare(losses, forecasts, eval_range)
    chat, alpha_hist = backend.run_aci(
        scores,
        first,
        emit_start,
        stop,
        cfg.m,
        cfg.alpha,
        cfg.aci_gamma,
        cfg.aci_alpha_min,
        cfg.aci_alpha_max,
    )
    k = stop - emit_start
    # uniform weights make the diagnostics analytic: n_eff is the window
    # size, tau the mean lag; both match the swc kernel output bit for bit
    nb = np.minimum(np.arange(emit_start, stop) - first, cfg.m).astype(float)
    n_eff = nb
    tau = (nb + 1.0) / 2.0
    fb = np.zeros(k, dtype=np.int8)
    return _assemble(losses, forecasts, scores, emit_start, stop, chat, n_eff, tau, fb, alpha_hist)


def run_base(losses, forecasts, cfg: RunConfig, eval_range) -> BoundSeries:
    """Uncalibrated reference: U_t is the raw base forecast."""
    scores, first, emit_start, stop = _prepare(losses, forecasts, eval_range)
    k = stop - emit_start
    zeros = np.zeros(k)
    nan = np.full(k, np.nan)
    return _assemble(
        losses, forecasts, scores, emit_start, stop, zeros, nan, nan, np.zeros(k, dtype=np.int8), np.full(k, cfg.alpha)
    )


def run_calibrator(
    method: str,
    losses: LossSeries,
    forecasts: ForecastSeries,
    cfg: RunConfig,
    eval_range: tuple[int, int],
    embedding: RegimeEmbedding | None = None,
) -> BoundSeries:
    if method == "swc":
        return run_swc(losses, forecasts, cfg, eval_range)
    if method == "twc":
        return run_twc(losses, forecasts, cfg, eval_range)
    if method == "rwc":
        if embedding is None:
            raise ConfigError("rwc needs a regime embedding")
        return run_rwc(losses, forecasts, cfg, eval_range, embedding)
    if method == "aci":
        return run_aci(losses, forecasts, cfg, eval_range)
    if method == "base":
        return run_base(losses, forecasts, cfg, eval_range)
    raise ConfigError(f"unknown calibrator {method!r}")


_CSV_HEADER = ["date", "qhat", "chat", "U", "loss", "exceed", "n_eff", "tau", "fallback", "alpha_t"]


def write_bounds_csv(bs: BoundSeries, path: str) -> None:
    """Full-precision CSV, one row per emitted date."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_CSV_HEADER)
        for i in range(len(bs)):
            w.writerow(
                [
                    bs.dates[i],
                    repr(float(bs.qhat[i])),
                    repr(float(bs.chat[i])),
                    repr(float(bs.bound[i])),
                    repr(float(bs.loss[i])),
                    int(bs.exceed[i]),
                    repr(float(bs.n_eff[i])),
                    repr(float(bs.tau[i])),
                    int(bs.fallback[i]),
                    repr(float(bs.alpha_t[i])),
                ]
            )


def read_bounds_csv(path: str) -> BoundSeries:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _CSV_HEADER:
            raise DataError(f"{path}: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(_CSV_HEADER):
                raise DataError(f"{path}:{lineno}: wrong field count")
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no rows")
    cols = list(zip(*rows))
    return BoundSeries(
        dates=tuple(cols[0]),
        qhat=np.array([float(v) for v in cols[1]]),
        chat=np.array([float(v) for v in cols[2]]),
        bound=np.array([float(v) for v in cols[3]]),
        loss=np.array([float(v) for v in cols[4]]),
        exceed=np.array([int(v) for v in cols[5]], dtype=np.int8),
        n_eff=np.array([float(v) for v in cols[6]]),
        tau=np.array([float(v) for v in cols[7]]),
        fallback=np.array([int(v) for v in cols[8]], dtype=np.int8),
        alpha_t=np.array([float(v) for v in cols[9]]),
    )
