"""Validation-period grid search over calibrator hyperparameters.

The objective is |Exc_val - alpha| + 0.5 * max(0, RollMax_val - alpha),
where RollMax is the maximum trailing 252-day exceedance over the
validation bounds. Ties break deterministically toward larger m, then
smaller lambda, then larger h, then smaller gamma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .calibrators import run_calibrator
from .data import LossSeries, RunConfig
from .errors import ConfigError
from .evaluation import ROLLING_WINDOW, rolling_exceedance
from .forecasters import ForecastSeries
from .regime import RegimeEmbedding

ACI_M = 252


@dataclass(frozen=True)
class GridSpec:
    m_grid: tuple[int, ...] = (252, 504, 756)
    lambda_grid: tuple[float, ...] = (0.002, 0.005, 0.01)
    h_grid: tuple[float, ...] = (0.5, 1.0, 2.0)
    gamma_grid: tuple[float, ...] = (0.002, 0.005, 0.01, 0.02)

    def __post_init__(self) -> None:
        if not (self.m_grid and self.lambda_grid and self.h_grid and self.gamma_grid):
            raise ConfigError("grid dimensions must be nonempty")


def candidates(method: str, grid: GridSpec) -> list[dict]:
    """Deterministically ordered parameter dicts for one method."""
    out: list[dict] = []
    if method == "swc":
        for m in grid.m_grid:
            out.append({"m": m})
    elif method == "twc":
        for m in grid.m_grid:
            for lam in grid.lambda_grid:
                out.append({"m": m, "lam": lam})
    elif method == "rwc":
        for m in grid.m_grid:
            for lam in grid.lambda_grid:
                for h in grid.h_grid:
                    out.append({"m": m, "lam": lam, "h": h})
    elif method == "aci":
        for gamma in grid.gamma_grid:
            out.append({"m": ACI_M, "aci_gamma": gamma})
    else:
        raise ConfigError(f"unknown method {method!r}")
    return out


def objective(val_exceedance: float, val_rollmax: float, alpha: float) -> float:
    if not (0.0 <= val_exceedance <= 1.0 and 0.0 <= val_rollmax <= 1.0):
        raise ConfigError("objective inputs must be rates in [0, 1]")
    return abs(val_exceedance - alpha) + 0.5 * max(0.0, val_rollmax - alpha)


@dataclass(frozen=True)
class CandidateResult:
    params: dict
    val_exceedance: float
    val_rollmax: float
    objective: float


@dataclass(frozen=True)
class TuneResult:
    method: str
    rows: tuple[CandidateResult, ...]
    selected: dict = field(default_factory=dict)


def _tie_key(row: CandidateResult) -> tuple:
    p = row.params
    return (
        row.objective,
        -p.get("m", 0),
        p.get("lam", 0.0),
        -p.get("h", math.inf),
        p.get("aci_gamma", 0.0),
    )


def grid_search(
    method: str,
    grid: GridSpec,
    losses: LossSeries,
    forecasts: ForecastSeries,
    cfg: RunConfig,
    val_range: tuple[int, int],
    embedding: RegimeEmbedding | None = None,
    rolling_window: int = ROLLING_WINDOW,
) -> TuneResult:
    """Run every candidate over the validation range and pick the
    objective minimizer. The buffer primes from pre-validation scores
    exactly as the final run primes from pre-test ones."""
    cand = candidates(method, grid)
    rows: list[CandidateResult] = []
    for params in cand:
        c = cfg.with_updates(calibrator=method, **params)
        bs = run_calibrator(method, losses, forecasts, c, val_range, embedding)
        if len(bs) < rolling_window:
            raise ConfigError(
                f"validation range too short for the rolling objective: {len(bs)} < {rolling_window}"
            )
        exc = float(np.mean(bs.exceed))
        rollmax = float(np.max(rolling_exceedance(bs.exceed, rolling_window)))
        rows.append(
            CandidateResult(
                params=params,
                val_exceedance=exc,
                val_rollmax=rollmax,
                objective=objective(exc, rollmax, cfg.alpha),
            )
        )
    best = min(rows, key=_tie_key)
    return TuneResult(method=method, rows=tuple(rows), selected=dict(best.params))
