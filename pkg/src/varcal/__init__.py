"""Conformal calibration of one-step value-at-risk forecasts.

Wraps any base quantile forecaster with sequential conformal buffers,
optionally weighted by recency and regime similarity, and ships the
evaluation stack (exceedance metrics, Kupiec/Christoffersen backtests,
regime-stratified calibration) plus a synthetic market generator.
"""

__version__ = "0.1.0"

from .data import LossSeries, ReturnSeries, RunConfig, SplitConfig, load_returns_csv, split, to_losses
from .errors import ConfigError, DataError, EmptyBufferError, NumericError, VarcalError

__all__ = [
    "ConfigError",
    "DataError",
    "EmptyBufferError",
    "LossSeries",
    "NumericError",
    "ReturnSeries",
    "RunConfig",
    "SplitConfig",
    "VarcalError",
    "__version__",
    "load_returns_csv",
    "split",
    "to_losses",
]
