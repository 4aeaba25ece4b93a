"""Recency x regime-similarity weights with diagnostics and the
effective-sample-size safeguard.

For a test step t with calibration indices i in I_t the unnormalized
weight is w_i(t) = exp(-lambda (t - i)) * K_h(z_i, z_t) with a Gaussian
similarity kernel K. Diagnostics:

    n_eff = 1 / sum(normalized^2)     effective sample size
    tau   = sum(normalized * lag)     effective lag in days
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

log = logging.getLogger(__name__)


def recency_weight(t: int, i: int, lam: float) -> float:
    """exp(-lam * (t - i)) for a past index i < t."""
    if i >= t:
        raise ConfigError("recency_weight: index i must precede t")
    if lam < 0:
        raise ConfigError("recency_weight: decay must be >= 0")
    return math.exp(-lam * (t - i))


def gaussian_kernel(z_i, z_t, h: float) -> float:
    """exp(-||z_i - z_t||^2 / (2 h^2)); h = inf turns similarity off."""
    if not h > 0:
        raise ConfigError("gaussian_kernel: bandwidth must be positive")
    if math.isinf(h):
        return 1.0
    d = np.asarray(z_i, dtype=float) - np.asarray(z_t, dtype=float)
    return math.exp(-0.5 * float(d @ d) / (h * h))


@dataclass
class WeightVector:
    """Weights over one step's calibration window, plus diagnostics."""

    indices: np.ndarray
    unnormalized: np.ndarray
    normalized: np.ndarray
    total: float
    n_eff: float
    tau: float
    fallback_used: bool = False


def _finalize(indices: np.ndarray, raw: np.ndarray, t: int, fallback: bool) -> WeightVector:
    # cumsum accumulates left to right, matching the compiled kernel's loop
    # bit for bit; np.sum pairwise-reduces and can differ in the last ulp
    total = float(np.cumsum(raw)[-1])
    if total <= 0.0:
        # full underflow (huge lambda*lag): uniform is the conservative stand-in
        log.warning("total weight underflowed at t=%d; using uniform weights", t)
        raw = np.ones_like(raw)
        total = float(raw.size)
        fallback = True
    normalized = raw / total
    sq = float(np.cumsum(raw * raw)[-1])
    lags = (t - indices).astype(float)
    n_eff = total * total / sq
    tau = float(np.cumsum(raw * lags)[-1]) / total
    return WeightVector(
        indices=indices,
        unnormalized=raw,
        normalized=normalized,
        total=total,
        n_eff=n_eff,
        tau=tau,
        fallback_used=fallback,
    )


def build_weights(t: int, indices, z_buffer, z_t, lam: float, h: float) -> WeightVector:
    """Weights for test step t over `indices` (all < t). `z_buffer` holds
    the embedding rows for those indices; pass h = inf for time-only."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        raise ConfigError("build_weights: empty calibration window")
    if np.any(idx >= t):
        raise ConfigError("build_weights: calibration index not in the past")
    if lam < 0:
        raise ConfigError("build_weights: decay must be >= 0")
    if not h > 0:
        raise ConfigError("build_weights: bandwidth must be positive")

    lags = (t - idx).astype(float)
    raw = np.exp(-lam * lags)
    if not math.isinf(h):
        zb = np.atleast_2d(np.asarray(z_buffer, dtype=float))
        zt = np.asarray(z_t, dtype=float)
        d2 = ((zb - zt) ** 2).sum(axis=1)
        raw = raw * np.exp(-0.5 * d2 / (h * h))
    return _finalize(idx, raw, t, fallback=False)


def apply_ess_safeguard(wv: WeightVector, time_only: WeightVector, n_min: float | None) -> WeightVector:
    """Swap in the time-only weights when n_eff drops below n_min
    (strict). n_min of None or 0 disables the safeguard."""
    if not n_min:
        return wv
    if wv.indices.shape != time_only.indices.shape or np.any(wv.indices != time_only.indices):
        raise ConfigError("apply_ess_safeguard: index sets differ")
    if wv.n_eff < n_min:
        return WeightVector(
            indices=time_only.indices,
            unnormalized=time_only.unnormalized,
            normalized=time_only.normalized,
            total=time_only.total,
            n_eff=time_only.n_eff,
            tau=time_only.tau,
            fallback_used=True,
        )
    return wv
