"""Regime-switching synthetic market generator.

Everything here is driven by a counter-based deterministic generator so
that any language can reproduce a stream bit-identically from
``(seed, stream, index)``. The construction, in full:

1. 64-bit mixing (SplitMix64 finalizer), all arithmetic mod 2**64::

       mix64(x): x ^= x >> 30; x *= 0xBF58476D1CE4E5B9
                 x ^= x >> 27; x *= 0x94D049BB133111EB
                 x ^= x >> 31; return x

2. Stream base: ``base = mix64(seed + stream * 0xD2B74407B1CE6E93)``.
3. Raw word at counter k: ``raw(k) = mix64(base + (k + 1) * 0x9E3779B97F4A7C15)``.
4. Uniform on (0, 1]: ``u(k) = ((raw(k) >> 11) + 1) * 2.0**-53``.
5. Standard normals by Box-Muller pairs: pair j consumes uniforms at
   counters 2j and 2j+1 and yields::

       r  = sqrt(-2 ln u(2j))
       z0 = r cos(2 pi u(2j+1)),  z1 = r sin(2 pi u(2j+1))

   normal(i) is z0 of pair i//2 when i is even, else z1.

The simulator uses stream 0 for the regime path and stream 1 for the
return innovations, so the state sequence is unchanged when only the
volatility levels change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_STREAM_SALT = 0xD2B74407B1CE6E93

_STREAM_REGIME = 0
_STREAM_RET = 1


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a 64-bit word."""
    x &= _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


class CounterRng:
    """Counter-addressable generator: value at index k is a pure function
    of (seed, stream, k), so draws can be produced in any order."""

    def __init__(self, seed: int, stream: int = 0):
        self.base = mix64((seed + stream * _STREAM_SALT) & _MASK64)

    def raw(self, k: int) -> int:
        return mix64((self.base + (k + 1) * _GOLDEN) & _MASK64)

    def uniform(self, k: int) -> float:
        # (0, 1]: the +1 keeps log() finite at the low end
        return ((self.raw(k) >> 11) + 1) * 2.0**-53

    def normal(self, i: int) -> float:
        j = i >> 1
        u1 = self.uniform(2 * j)
        u2 = self.uniform(2 * j + 1)
        r = math.sqrt(-2.0 * math.log(u1))
        ang = 2.0 * math.pi * u2
        return r * math.cos(ang) if i % 2 == 0 else r * math.sin(ang)

    def normals(self, n: int, start: int = 0) -> np.ndarray:
        out = np.empty(n)
        for i in range(n):
            out[i] = self.normal(start + i)
        return out


@dataclass
class RegimeModel:
    """K-state Markov-switching Gaussian return model."""

    sigma: tuple[float, ...] = (0.008, 0.025)
    mu: tuple[float, ...] = (0.0, 0.0)
    transition: tuple[tuple[float, ...], ...] = (
        (0.98, 0.02),
        (0.05, 0.95),
    )
    n: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        k = len(self.sigma)
        if k == 0:
            raise ConfigError("regime model needs at least one state")
        if len(self.mu) != k or len(self.transition) != k:
            raise ConfigError("sigma, mu and transition sizes disagree")
        if any(s <= 0 for s in self.sigma):
            raise ConfigError("state volatilities must be positive")
        for row in self.transition:
            if len(row) != k:
                raise ConfigError("transition matrix must be square")
            if any(p < 0 for p in row):
                raise ConfigError("transition probabilities must be >= 0")
            if abs(sum(row) - 1.0) > 1e-12:
                raise ConfigError("transition rows must sum to 1")
        if self.n <= 0:
            raise ConfigError("simulation length must be positive")

    @property
    def n_states(self) -> int:
        return len(self.sigma)

    def stationary(self) -> np.ndarray:
        """Stationary distribution pi with pi @ P = pi, found by solving
        the balance equations with the normalization constraint."""
        p = np.asarray(self.transition, dtype=float)
        k = p.shape[0]
        a = np.vstack([p.T - np.eye(k), np.ones((1, k))])
        b = np.zeros(k + 1)
        b[k] = 1.0
        pi, *_ = np.linalg.lstsq(a, b, rcond=None)
        return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()


@dataclass
class SimResult:
    returns: np.ndarray
    states: np.ndarray
    model: RegimeModel = field(repr=False)


def _pick_state(u: float, cum: np.ndarray) -> int:
    # inverse-CDF over the row; u in (0,1] so <= keeps the top bucket reachable
    for j in range(len(cum)):
        if u <= cum[j]:
            return j
    return len(cum) - 1


def simulate(model: RegimeModel) -> SimResult:
    """Draw a state path and returns r_t = mu[s_t] + sigma[s_t] * z_t.

    The initial state comes from the stationary distribution (counter 0
    of the regime stream); transitions at step t use counter t.
    """
    rng_state = CounterRng(model.seed, _STREAM_REGIME)
    rng_ret = CounterRng(model.seed, _STREAM_RET)
    k = model.n_states
    trans_cum = np.cumsum(np.asarray(model.transition, dtype=float), axis=1)
    init_cum = np.cumsum(model.stationary())

    states = np.empty(model.n, dtype=np.int64)
    s = _pick_state(rng_state.uniform(0), init_cum) if k > 1 else 0
    states[0] = s
    for t in range(1, model.n):
        if k > 1:
            s = _pick_state(rng_state.uniform(t), trans_cum[s])
        states[t] = s

    z = rng_ret.normals(model.n)
    mu = np.asarray(model.mu, dtype=float)
    sigma = np.asarray(model.sigma, dtype=float)
    returns = mu[states] + sigma[states] * z
    return SimResult(returns=returns, states=states, model=model)


def simulate_iid_scores(n: int, seed: int, loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
    """I.i.d. Gaussian draws on a dedicated stream, for coverage
    experiments on exchangeable inputs."""
    if scale < 0:
        raise ConfigError("scale must be >= 0")
    rng = CounterRng(seed, stream=2)
    return loc + scale * rng.normals(n)


def business_dates(n: int, start: str = "1990-01-02") -> list[str]:
    """n consecutive weekday dates (ISO strings) beginning at the first
    weekday on or after `start`. Holidays are not modeled."""
    import datetime as dt

    try:
        d = dt.date.fromisoformat(start)
    except ValueError as exc:
        raise ConfigError(f"bad start date {start!r}: {exc}") from None
    out: list[str] = []
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d.isoformat())
        d += dt.timedelta(days=1)
    return out
