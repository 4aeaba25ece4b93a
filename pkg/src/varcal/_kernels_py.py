"""Pure-Python (numpy) sequential calibration kernels.

Drop-in twin of the compiled extension `_kernels`. Both backends follow
the same arithmetic recipe so results agree bit for bit on the time-only
paths:

- running sums are left-to-right accumulations (np.cumsum here, a C loop
  there; np.sum would pairwise-reduce and drift in the last ulp),
- the recency decay table is built with math.exp, which is the same libm
  exp the C side calls,
- the quantile walk compares raw cumulative weight against level * total
  rather than normalizing per element.

The one intentional difference: the regime-similarity term uses np.exp
here for speed, which may differ from libm by an ulp on some inputs.

Fallback codes per step: 0 none, 1 ESS safeguard (kernel dropped,
recency-only weights), 2 total-weight underflow (uniform weights).
"""

from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "python"


def _walk(vs: np.ndarray, cum: np.ndarray, target: float) -> float:
    """Smallest value whose pooled cumulative weight reaches target.
    `vs` sorted ascending, `cum` its running weight sum. Above-total
    targets land on the maximum."""
    nb = vs.shape[0]
    runend = np.empty(nb, dtype=bool)
    runend[-1] = True
    if nb > 1:
        runend[:-1] = vs[1:] != vs[:-1]
    hits = np.nonzero(runend & (cum >= target))[0]
    return float(vs[hits[0]]) if hits.size else float(vs[-1])


def run_weighted_conformal(
    scores: np.ndarray,
    z: np.ndarray,
    use_kernel: int,
    first: int,
    start: int,
    stop: int,
    m: int,
    lam: float,
    h: float,
    n_min: float,
    alpha: float,
    correction: int,
):
    """Sequential weighted conformal pass over t in [start, stop).

    scores[i] must be valid for i >= first; step t calibrates on the
    window [max(first, t - m), t) and never reads scores[t] before
    emitting its threshold.

    Returns (chat, n_eff, tau, fallback) arrays of length stop - start.
    """
    k = stop - start
    chat = np.empty(k)
    neff = np.empty(k)
    tau = np.empty(k)
    fallback = np.zeros(k, dtype=np.int8)

    decay = np.empty(m + 1)
    for lag in range(m + 1):
        decay[lag] = math.exp(-lam * lag)

    inv_h2 = 0.0
    if use_kernel and not math.isinf(h):
        inv_h2 = 1.0 / (h * h)

    for out, t in enumerate(range(start, stop)):
        lo = max(first, t - m)
        nb = t - lo
        v = scores[lo:t]
        lags = np.arange(nb, 0, -1, dtype=float)
        w = decay[nb:0:-1]
        code = 0
        if inv_h2 > 0.0:
            d2 = ((z[lo:t] - z[t]) ** 2).sum(axis=1)
            w = w * np.exp(-0.5 * d2 * inv_h2)
        total = float(np.cumsum(w)[-1])
        if total <= 0.0:
            w = np.ones(nb)
            total = float(nb)
            code = 2
        elif inv_h2 > 0.0 and n_min > 0.0:
            # safeguard only bites while the similarity kernel is active;
            # at h = inf there is no kernel to drop
            sq = float(np.cumsum(w * w)[-1])
            if total * total / sq < n_min:
                w = decay[nb:0:-1]
                total = float(np.cumsum(w)[-1])
                code = 1
                if total <= 0.0:
                    w = np.ones(nb)
                    total = float(nb)
                    code = 2
        sq = float(np.cumsum(w * w)[-1])
        neff[out] = total * total / sq
        tau[out] = float(np.cumsum(w * lags)[-1]) / total
        fallback[out] = code

        if correction:
            level = min(1.0, (1.0 - alpha) * (1.0 + 1.0 / total))
        else:
            level = 1.0 - alpha
        order = np.argsort(v, kind="stable")
        chat[out] = _walk(v[order], np.cumsum(w[order]), level * total)
    return chat, neff, tau, fallback


def run_aci(
    scores: np.ndarray,
    first: int,
    start: int,
    stop: int,
    m: int,
    alpha: float,
    gamma: float,
    alpha_min: float,
    alpha_max: float,
):
    """Adaptive-level baseline: uniform empirical quantile of the last m
    scores at level 1 - alpha_t, then alpha_{t+1} = clip(alpha_t +
    gamma * (alpha - exceed_t)). alpha_t starts at alpha.

    Returns (chat, alpha_hist) with alpha_hist the pre-update levels.
    """
    k = stop - start
    chat = np.empty(k)
    alpha_hist = np.empty(k)
    a = alpha
    for out, t in enumerate(range(start, stop)):
        lo = max(first, t - m)
        nb = t - lo
        v = np.sort(scores[lo:t], kind="stable")
        cum = np.arange(1.0, nb + 1.0)
        alpha_hist[out] = a
        c = _walk(v, cum, (1.0 - a) * nb)
        chat[out] = c
        exceed = 1.0 if scores[t] > c else 0.0
        a = a + gamma * (alpha - exceed)
        a = min(alpha_max, max(alpha_min, a))
    return chat, alpha_hist
